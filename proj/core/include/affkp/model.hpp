#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "affkp/geometry.hpp"
#include "affkp/labels.hpp"

namespace affkp {

// Per-point encoder with an appearance branch (rgb + normal), a geometry
// branch (xyz plus a global max-pooled context vector concatenated back per
// point), a fusion MLP and two heads: 7-way segmentation scores and 4x3
// keypoint offsets.
struct ModelConfig {
  int appearance_hidden = 32;
  int appearance_features = 32;
  int geometry_hidden = 32;
  int geometry_features = 32;
  int fusion_hidden = 64;
  int feature_dim = 64;
  int seg_hidden = 32;
  int offset_hidden = 32;
  int seed_points = 2048;  // input subsample size

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

struct ModelParams {
  ModelConfig config;
  std::vector<Tensor> tensors;  // fixed order, see expected_shapes()

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void validate() const;  // shapes consistent with config, values finite
  bool operator==(const ModelParams&) const = default;
};

// Tensor names and shapes implied by a config, in serialization order.
std::vector<std::pair<std::string, std::vector<int>>> expected_shapes(const ModelConfig& config);

// Xavier-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ForwardResult {
  Eigen::MatrixXd seg_scores;  // N x 7, rows sum to 1
  Eigen::MatrixXd offsets;     // N x 12, slot-major
  Eigen::MatrixXd features;    // N x feature_dim
};

// Extra state needed to run a backward pass.
struct ForwardCache;

ForwardResult forward(const PointCloudFrame& cloud, const ModelParams& params);

// Training entry points operating on raw input matrices (N x 3 xyz and
// N x 6 rgb+normal), so samples can be prepared once per scene.
ForwardResult forward_raw(const Eigen::MatrixXd& xyz, const Eigen::MatrixXd& rgbn,
                          const ModelParams& params, ForwardCache* cache = nullptr);

// Gradients w.r.t. every tensor, aligned with params.tensors; inputs are
// d(loss)/d(seg_scores) and d(loss)/d(offsets).
std::vector<std::vector<double>> backward_raw(const ModelParams& params, const ForwardCache& cache,
                                              const Eigen::MatrixXd& d_scores,
                                              const Eigen::MatrixXd& d_offsets);

struct ForwardCache {
  Eigen::MatrixXd app_in, geo_in;
  Eigen::MatrixXd app_h, app_out;     // pre-activation h kept as post too
  Eigen::MatrixXd app_h_pre, app_out_pre;
  Eigen::MatrixXd geo_h, geo_out;
  Eigen::MatrixXd geo_h_pre, geo_out_pre;
  Eigen::VectorXd context;
  std::vector<Eigen::Index> context_argmax;
  Eigen::MatrixXd fuse_in;
  Eigen::MatrixXd fuse_h, fuse_h_pre;
  Eigen::MatrixXd feat, feat_pre;
  Eigen::MatrixXd seg_h, seg_h_pre;
  Eigen::MatrixXd probs;
  Eigen::MatrixXd off_h, off_h_pre;
};

// Versioned checkpoint: header + named tensor table, row-major float32.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

void save_model_config(const std::filesystem::path& path, const ModelConfig& config);
ModelConfig load_model_config(const std::filesystem::path& path);

}  // namespace affkp
