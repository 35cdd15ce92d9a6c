#include "affkp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "affkp/error.hpp"
#include "affkp/rng.hpp"

namespace affkp {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr std::uint32_t kCheckpointVersion = 1;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd as_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw ModelError("tensor " + t.name + " is not a matrix");
  MatrixXd m(t.shape[0], t.shape[1]);
  for (int r = 0; r < t.shape[0]; ++r)
    for (int c = 0; c < t.shape[1]; ++c)
      m(r, c) = t.data[static_cast<std::size_t>(r) * t.shape[1] + c];
  return m;
}

VectorXd as_vector(const Tensor& t) {
  if (t.shape.size() != 1) throw ModelError("tensor " + t.name + " is not a vector");
  VectorXd v(t.shape[0]);
  for (int i = 0; i < t.shape[0]; ++i) v(i) = t.data[static_cast<std::size_t>(i)];
  return v;
}

void check_finite(const MatrixXd& m, const char* where) {
  if (!m.allFinite())
    throw ModelError(std::string("forward: non-finite values after ") + where);
}

MatrixXd linear(const MatrixXd& x, const MatrixXd& w, const VectorXd& b) {
  return (x * w).rowwise() + b.transpose();
}

MatrixXd leaky(const MatrixXd& pre) {
  return pre.unaryExpr([](double v) { return v > 0 ? v : kLeakySlope * v; });
}

MatrixXd leaky_grad(const MatrixXd& pre, const MatrixXd& dpost) {
  return dpost.cwiseProduct(
      pre.unaryExpr([](double v) { return v > 0 ? 1.0 : kLeakySlope; }));
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(appearance_hidden, "appearance_hidden");
  positive(appearance_features, "appearance_features");
  positive(geometry_hidden, "geometry_hidden");
  positive(geometry_features, "geometry_features");
  positive(fusion_hidden, "fusion_hidden");
  positive(feature_dim, "feature_dim");
  positive(seg_hidden, "seg_hidden");
  positive(offset_hidden, "offset_hidden");
  positive(seed_points, "seed_points");
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor& ModelParams::at(const std::string& name) {
  for (Tensor& t : tensors)
    if (t.name == name) return t;
  throw ModelError("missing tensor: " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const Tensor& t : tensors)
    if (t.name == name) return t;
  throw ModelError("missing tensor: " + name);
}

std::vector<std::pair<std::string, std::vector<int>>> expected_shapes(const ModelConfig& c) {
  int fuse_in = c.appearance_features + 2 * c.geometry_features;
  return {
      {"app.w0", {6, c.appearance_hidden}},
      {"app.b0", {c.appearance_hidden}},
      {"app.w1", {c.appearance_hidden, c.appearance_features}},
      {"app.b1", {c.appearance_features}},
      {"geo.w0", {3, c.geometry_hidden}},
      {"geo.b0", {c.geometry_hidden}},
      {"geo.w1", {c.geometry_hidden, c.geometry_features}},
      {"geo.b1", {c.geometry_features}},
      {"fuse.w0", {fuse_in, c.fusion_hidden}},
      {"fuse.b0", {c.fusion_hidden}},
      {"fuse.w1", {c.fusion_hidden, c.feature_dim}},
      {"fuse.b1", {c.feature_dim}},
      {"seg.w0", {c.feature_dim, c.seg_hidden}},
      {"seg.b0", {c.seg_hidden}},
      {"seg.w1", {c.seg_hidden, kNumClasses}},
      {"seg.b1", {kNumClasses}},
      {"off.w0", {c.feature_dim, c.offset_hidden}},
      {"off.b0", {c.offset_hidden}},
      {"off.w1", {c.offset_hidden, 3 * kKeypointSlots}},
      {"off.b1", {3 * kKeypointSlots}},
  };
}

void ModelParams::validate() const {
  config.validate();
  auto expect = expected_shapes(config);
  if (tensors.size() != expect.size()) throw ModelError("params: wrong tensor count");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (tensors[i].name != expect[i].first || tensors[i].shape != expect[i].second)
      throw ModelError("params: tensor " + tensors[i].name + " has unexpected shape");
    if (tensors[i].data.size() != tensors[i].numel())
      throw ModelError("params: tensor " + tensors[i].name + " has wrong element count");
    for (float v : tensors[i].data)
      if (!std::isfinite(v)) throw ModelError("params: non-finite value in " + tensors[i].name);
  }
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams params;
  params.config = config;
  for (const auto& [name, shape] : expected_shapes(config)) {
    Tensor t;
    t.name = name;
    t.shape = shape;
    t.data.resize(t.numel(), 0.0f);
    if (shape.size() == 2) {
      double s = std::sqrt(6.0 / (shape[0] + shape[1]));
      for (float& v : t.data) v = static_cast<float>(rng.uniform(-s, s));
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

ForwardResult forward_raw(const MatrixXd& xyz, const MatrixXd& rgbn, const ModelParams& params,
                          ForwardCache* cache) {
  params.validate();
  if (xyz.rows() == 0) throw DataError("forward: empty input");
  if (xyz.cols() != 3 || rgbn.cols() != 6 || rgbn.rows() != xyz.rows())
    throw DataError("forward: input shape mismatch");

  ForwardCache local;
  ForwardCache& cc = cache ? *cache : local;
  cc.app_in = rgbn;
  cc.geo_in = xyz;

  cc.app_h_pre = linear(rgbn, as_matrix(params.at("app.w0")), as_vector(params.at("app.b0")));
  check_finite(cc.app_h_pre, "appearance layer 0");
  cc.app_h = leaky(cc.app_h_pre);
  cc.app_out_pre = linear(cc.app_h, as_matrix(params.at("app.w1")), as_vector(params.at("app.b1")));
  check_finite(cc.app_out_pre, "appearance layer 1");
  cc.app_out = leaky(cc.app_out_pre);

  cc.geo_h_pre = linear(xyz, as_matrix(params.at("geo.w0")), as_vector(params.at("geo.b0")));
  check_finite(cc.geo_h_pre, "geometry layer 0");
  cc.geo_h = leaky(cc.geo_h_pre);
  cc.geo_out_pre = linear(cc.geo_h, as_matrix(params.at("geo.w1")), as_vector(params.at("geo.b1")));
  check_finite(cc.geo_out_pre, "geometry layer 1");
  cc.geo_out = leaky(cc.geo_out_pre);

  // Symmetric global context: per-dimension max over all points, first
  // occurrence recorded for the backward route.
  Index n = xyz.rows();
  Index fg = cc.geo_out.cols();
  cc.context.resize(fg);
  cc.context_argmax.assign(static_cast<std::size_t>(fg), 0);
  for (Index c = 0; c < fg; ++c) {
    Index arg = 0;
    double best = cc.geo_out(0, c);
    for (Index r = 1; r < n; ++r)
      if (cc.geo_out(r, c) > best) {
        best = cc.geo_out(r, c);
        arg = r;
      }
    cc.context(c) = best;
    cc.context_argmax[static_cast<std::size_t>(c)] = arg;
  }

  cc.fuse_in.resize(n, cc.app_out.cols() + 2 * fg);
  cc.fuse_in << cc.app_out, cc.geo_out,
      cc.context.transpose().replicate(n, 1);

  cc.fuse_h_pre = linear(cc.fuse_in, as_matrix(params.at("fuse.w0")), as_vector(params.at("fuse.b0")));
  check_finite(cc.fuse_h_pre, "fusion layer 0");
  cc.fuse_h = leaky(cc.fuse_h_pre);
  cc.feat_pre = linear(cc.fuse_h, as_matrix(params.at("fuse.w1")), as_vector(params.at("fuse.b1")));
  check_finite(cc.feat_pre, "fusion layer 1");
  cc.feat = leaky(cc.feat_pre);

  cc.seg_h_pre = linear(cc.feat, as_matrix(params.at("seg.w0")), as_vector(params.at("seg.b0")));
  check_finite(cc.seg_h_pre, "segmentation layer 0");
  cc.seg_h = leaky(cc.seg_h_pre);
  MatrixXd logits = linear(cc.seg_h, as_matrix(params.at("seg.w1")), as_vector(params.at("seg.b1")));
  check_finite(logits, "segmentation logits");

  // Exponential normalization with max subtraction.
  cc.probs.resize(n, kNumClasses);
  for (Index r = 0; r < n; ++r) {
    double m = logits.row(r).maxCoeff();
    double sum = 0;
    for (Index c = 0; c < kNumClasses; ++c) {
      double e = std::exp(logits(r, c) - m);
      cc.probs(r, c) = e;
      sum += e;
    }
    cc.probs.row(r) /= sum;
  }
  check_finite(cc.probs, "segmentation normalization");

  cc.off_h_pre = linear(cc.feat, as_matrix(params.at("off.w0")), as_vector(params.at("off.b0")));
  check_finite(cc.off_h_pre, "offset layer 0");
  cc.off_h = leaky(cc.off_h_pre);
  MatrixXd offsets = linear(cc.off_h, as_matrix(params.at("off.w1")), as_vector(params.at("off.b1")));
  check_finite(offsets, "offset head");

  ForwardResult out;
  out.seg_scores = cc.probs;
  out.offsets = std::move(offsets);
  out.features = cc.feat;
  return out;
}

ForwardResult forward(const PointCloudFrame& cloud, const ModelParams& params) {
  if (cloud.size() == 0) throw DataError("forward: empty cloud");
  Index n = static_cast<Index>(cloud.size());
  MatrixXd xyz(n, 3), rgbn(n, 6);
  for (Index i = 0; i < n; ++i) {
    std::size_t s = static_cast<std::size_t>(i);
    xyz.row(i) = cloud.xyz[s].transpose();
    rgbn.block<1, 3>(i, 0) = cloud.rgb[s].transpose();
    rgbn.block<1, 3>(i, 3) = cloud.normal[s].transpose();
  }
  return forward_raw(xyz, rgbn, params);
}

std::vector<std::vector<double>> backward_raw(const ModelParams& params, const ForwardCache& cc,
                                              const MatrixXd& d_scores,
                                              const MatrixXd& d_offsets) {
  std::vector<std::vector<double>> grads(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    grads[i].assign(params.tensors[i].data.size(), 0.0);

  auto grad_of = [&](const std::string& name) -> std::vector<double>& {
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (params.tensors[i].name == name) return grads[i];
    throw ModelError("missing tensor: " + name);
  };

  // d(in) of a linear layer, accumulating dW and db.
  auto linear_backward = [&](const MatrixXd& x, const std::string& w_name,
                             const MatrixXd& dy) -> MatrixXd {
    const MatrixXd w = as_matrix(params.at(w_name));
    MatrixXd dw = x.transpose() * dy;
    VectorXd db = dy.colwise().sum();
    std::vector<double>& gw = grad_of(w_name);
    for (Index r = 0; r < dw.rows(); ++r)
      for (Index c = 0; c < dw.cols(); ++c)
        gw[static_cast<std::size_t>(r) * dw.cols() + c] += dw(r, c);
    std::string b_name = w_name;
    b_name[b_name.size() - 2] = 'b';
    std::vector<double>& gb = grad_of(b_name);
    for (Index c = 0; c < db.size(); ++c) gb[static_cast<std::size_t>(c)] += db(c);
    return dy * w.transpose();
  };

  // Softmax jacobian: dlogits = p .* (ds - rowdot(ds, p)).
  Index n = cc.probs.rows();
  MatrixXd d_logits(n, kNumClasses);
  for (Index r = 0; r < n; ++r) {
    double dot = d_scores.row(r).dot(cc.probs.row(r));
    for (Index c = 0; c < kNumClasses; ++c)
      d_logits(r, c) = cc.probs(r, c) * (d_scores(r, c) - dot);
  }

  MatrixXd d_seg_h = linear_backward(cc.seg_h, "seg.w1", d_logits);
  MatrixXd d_feat = linear_backward(cc.feat, "seg.w0", leaky_grad(cc.seg_h_pre, d_seg_h));

  MatrixXd d_off_h = linear_backward(cc.off_h, "off.w1", d_offsets);
  d_feat += linear_backward(cc.feat, "off.w0", leaky_grad(cc.off_h_pre, d_off_h));

  MatrixXd d_fuse_h = linear_backward(cc.fuse_h, "fuse.w1", leaky_grad(cc.feat_pre, d_feat));
  MatrixXd d_fuse_in = linear_backward(cc.fuse_in, "fuse.w0", leaky_grad(cc.fuse_h_pre, d_fuse_h));

  Index fa = cc.app_out.cols();
  Index fg = cc.geo_out.cols();
  MatrixXd d_app_out = d_fuse_in.leftCols(fa);
  MatrixXd d_geo_out = d_fuse_in.middleCols(fa, fg);
  // Context column gradients route to the per-dimension argmax rows.
  for (Index c = 0; c < fg; ++c) {
    double total = d_fuse_in.col(fa + fg + c).sum();
    d_geo_out(cc.context_argmax[static_cast<std::size_t>(c)], c) += total;
  }

  MatrixXd d_app_h = linear_backward(cc.app_h, "app.w1", leaky_grad(cc.app_out_pre, d_app_out));
  linear_backward(cc.app_in, "app.w0", leaky_grad(cc.app_h_pre, d_app_h));

  MatrixXd d_geo_h = linear_backward(cc.geo_h, "geo.w1", leaky_grad(cc.geo_out_pre, d_geo_out));
  linear_backward(cc.geo_in, "geo.w0", leaky_grad(cc.geo_h_pre, d_geo_h));

  return grads;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  params.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write("AFKP", 4);
  auto write_u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  write_u32(kCheckpointVersion);
  write_u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const Tensor& t : params.tensors) {
    write_u32(static_cast<std::uint32_t>(t.name.size()));
    f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(static_cast<std::uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) throw DataError("short write: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot open checkpoint: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "AFKP", 4) != 0)
    throw ModelError("checkpoint: bad magic in " + path.string());
  auto read_u32 = [&]() {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw ModelError("checkpoint: truncated " + path.string());
    return v;
  };
  std::uint32_t version = read_u32();
  if (version != kCheckpointVersion)
    throw ModelError("checkpoint: unsupported version " + std::to_string(version));
  std::uint32_t count = read_u32();
  ModelParams params;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    std::uint32_t name_len = read_u32();
    t.name.resize(name_len);
    f.read(t.name.data(), name_len);
    std::uint32_t ndim = read_u32();
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<int>(read_u32()));
    t.data.resize(t.numel());
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw ModelError("checkpoint: truncated tensor " + t.name);
    params.tensors.push_back(std::move(t));
  }
  return params;  // config must be attached by the caller before validate()
}

void save_model_config(const std::filesystem::path& path, const ModelConfig& c) {
  nlohmann::json j = {{"appearance_hidden", c.appearance_hidden},
                      {"appearance_features", c.appearance_features},
                      {"geometry_hidden", c.geometry_hidden},
                      {"geometry_features", c.geometry_features},
                      {"fusion_hidden", c.fusion_hidden},
                      {"feature_dim", c.feature_dim},
                      {"seg_hidden", c.seg_hidden},
                      {"offset_hidden", c.offset_hidden},
                      {"seed_points", c.seed_points}};
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ModelError("cannot open model config: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("model config: " + std::string(e.what()));
  }
  ModelConfig c;
  try {
    c.appearance_hidden = j.at("appearance_hidden").get<int>();
    c.appearance_features = j.at("appearance_features").get<int>();
    c.geometry_hidden = j.at("geometry_hidden").get<int>();
    c.geometry_features = j.at("geometry_features").get<int>();
    c.fusion_hidden = j.at("fusion_hidden").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.seg_hidden = j.at("seg_hidden").get<int>();
    c.offset_hidden = j.at("offset_hidden").get<int>();
    c.seed_points = j.at("seed_points").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("model config: missing field (" + std::string(e.what()) + ")");
  }
  c.validate();
  return c;
}

}  // namespace affkp
