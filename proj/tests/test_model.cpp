#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "affkp/model.hpp"
#include "affkp/rng.hpp"

using namespace affkp;

namespace {

PointCloudFrame random_cloud(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  PointCloudFrame c;
  for (std::size_t i = 0; i < n; ++i) {
    c.xyz.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.4, 1.0));
    c.rgb.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
    Vec3 nrm(rng.normal(), rng.normal(), rng.normal());
    c.normal.push_back(nrm.normalized());
    c.pixel_index.push_back(-1);
  }
  return c;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.appearance_hidden = 8;
  c.appearance_features = 8;
  c.geometry_hidden = 8;
  c.geometry_features = 8;
  c.fusion_hidden = 12;
  c.feature_dim = 12;
  c.seg_hidden = 8;
  c.offset_hidden = 8;
  c.seed_points = 64;
  return c;
}

}  // namespace

TEST_CASE("init is deterministic per seed and bounded") {
  ModelConfig cfg;  // defaults
  ModelParams a = init_params(cfg, 5);
  ModelParams b = init_params(cfg, 5);
  ModelParams c = init_params(cfg, 6);
  CHECK(a == b);
  CHECK(!(a == c));
  for (const Tensor& t : a.tensors)
    for (float v : t.data) CHECK(std::abs(v) < 1.0f);
}

TEST_CASE("zero hidden layer size fails validation") {
  ModelConfig cfg = tiny_config();
  cfg.fusion_hidden = 0;
  CHECK_THROWS_AS(init_params(cfg, 1), ConfigError);
}

TEST_CASE("zero weights give uniform scores and zero offsets") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 1);
  for (Tensor& t : params.tensors) std::fill(t.data.begin(), t.data.end(), 0.0f);
  PointCloudFrame cloud = random_cloud(2, 32);
  ForwardResult out = forward(cloud, params);
  for (Eigen::Index i = 0; i < out.seg_scores.rows(); ++i)
    for (Eigen::Index c = 0; c < 7; ++c)
      CHECK(out.seg_scores(i, c) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(out.offsets.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scores rows are normalized for random params over random clouds") {
  ModelConfig cfg = tiny_config();
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    ModelParams params = init_params(cfg, trial);
    PointCloudFrame cloud = random_cloud(trial + 1000, 24);
    ForwardResult out = forward(cloud, params);
    for (Eigen::Index i = 0; i < out.seg_scores.rows(); ++i) {
      CHECK(std::abs(out.seg_scores.row(i).sum() - 1.0) < 1e-6);
      for (Eigen::Index c = 0; c < 7; ++c) {
        CHECK(out.seg_scores(i, c) > 0.0);
        CHECK(out.seg_scores(i, c) < 1.0);
      }
    }
  }
}

TEST_CASE("forward is pure: identical inputs give bit-identical outputs") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 3);
  PointCloudFrame cloud = random_cloud(4, 48);
  ForwardResult a = forward(cloud, params);
  ForwardResult b = forward(cloud, params);
  CHECK(a.seg_scores == b.seg_scores);
  CHECK(a.offsets == b.offsets);
  CHECK(a.features == b.features);
}

TEST_CASE("permuting the input permutes the outputs identically") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 7);
  PointCloudFrame cloud = random_cloud(8, 40);
  ForwardResult base = forward(cloud, params);

  Rng rng(99);
  std::vector<std::size_t> perm(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  PointCloudFrame shuffled;
  for (std::size_t i : perm) {
    shuffled.xyz.push_back(cloud.xyz[i]);
    shuffled.rgb.push_back(cloud.rgb[i]);
    shuffled.normal.push_back(cloud.normal[i]);
    shuffled.pixel_index.push_back(cloud.pixel_index[i]);
  }
  ForwardResult out = forward(shuffled, params);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    Eigen::Index dst = static_cast<Eigen::Index>(r);
    Eigen::Index src = static_cast<Eigen::Index>(perm[r]);
    CHECK((out.seg_scores.row(dst) - base.seg_scores.row(src)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.offsets.row(dst) - base.offsets.row(src)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("duplicating a non-maximal point leaves the global context unchanged") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 11);
  PointCloudFrame cloud = random_cloud(12, 30);

  ForwardCache cache_a;
  Eigen::MatrixXd xyz(30, 3), rgbn(30, 6);
  for (Eigen::Index i = 0; i < 30; ++i) {
    xyz.row(i) = cloud.xyz[static_cast<std::size_t>(i)].transpose();
    rgbn.block<1, 3>(i, 0) = cloud.rgb[static_cast<std::size_t>(i)].transpose();
    rgbn.block<1, 3>(i, 3) = cloud.normal[static_cast<std::size_t>(i)].transpose();
  }
  forward_raw(xyz, rgbn, params, &cache_a);

  // Find a row that attains no per-dimension maximum and duplicate it.
  std::size_t dup = 0;
  bool found = false;
  for (std::size_t r = 0; r < 30 && !found; ++r) {
    bool is_max = false;
    for (Eigen::Index c = 0; c < cache_a.geo_out.cols(); ++c)
      if (cache_a.context_argmax[static_cast<std::size_t>(c)] == static_cast<Eigen::Index>(r))
        is_max = true;
    if (!is_max) {
      dup = r;
      found = true;
    }
  }
  REQUIRE(found);

  Eigen::MatrixXd xyz2(31, 3), rgbn2(31, 6);
  xyz2.topRows(30) = xyz;
  rgbn2.topRows(30) = rgbn;
  xyz2.row(30) = xyz.row(static_cast<Eigen::Index>(dup));
  rgbn2.row(30) = rgbn.row(static_cast<Eigen::Index>(dup));
  ForwardCache cache_b;
  forward_raw(xyz2, rgbn2, params, &cache_b);
  CHECK((cache_a.context - cache_b.context).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round trip is the identity") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 13);
  auto dir = std::filesystem::temp_directory_path();
  auto path = dir / "affkp_test_ckpt.bin";
  save_checkpoint(path, params);
  ModelParams back = load_checkpoint(path);
  back.config = cfg;
  back.validate();
  CHECK(back.tensors == params.tensors);

  // Serialized form is a fixed point of save(load(.)).
  save_checkpoint(dir / "affkp_test_ckpt2.bin", back);
  std::ifstream f1(path, std::ios::binary), f2(dir / "affkp_test_ckpt2.bin", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(dir / "affkp_test_ckpt2.bin");
}

TEST_CASE("non-finite params are reported with a tensor name") {
  ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg, 17);
  params.at("geo.w0").data[0] = std::numeric_limits<float>::quiet_NaN();
  PointCloudFrame cloud = random_cloud(18, 16);
  bool threw = false;
  try {
    forward(cloud, params);
  } catch (const ModelError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("geo.w0") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("model config json round trip") {
  ModelConfig cfg = tiny_config();
  auto path = std::filesystem::temp_directory_path() / "affkp_test_mc.json";
  save_model_config(path, cfg);
  ModelConfig back = load_model_config(path);
  CHECK(back == cfg);
  std::filesystem::remove(path);
}
