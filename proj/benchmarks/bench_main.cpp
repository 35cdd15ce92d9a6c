#include <benchmark/benchmark.h>

#include <numeric>

#include "affkp/geometry.hpp"
#include "affkp/losses.hpp"
#include "affkp/metrics.hpp"
#include "affkp/model.hpp"
#include "affkp/rng.hpp"
#include "affkp/scene.hpp"
#include "affkp/voting.hpp"

namespace {

using namespace affkp;

RgbdImage synthetic_depth(int w, int h) {
  RgbdImage img;
  img.width = w;
  img.height = h;
  img.depth.resize(static_cast<std::size_t>(w) * h);
  img.rgb.assign(static_cast<std::size_t>(w) * h * 3, 0.5f);
  Rng rng(1);
  for (float& d : img.depth) d = static_cast<float>(rng.uniform(0.4, 1.2));
  return img;
}

void BM_Backproject(benchmark::State& state) {
  CameraIntrinsics k{640.0, 640.0, 319.5, 239.5, 640, 480};
  RgbdImage img = synthetic_depth(640, 480);
  for (auto _ : state) benchmark::DoNotOptimize(backproject(img, k));
}
BENCHMARK(BM_Backproject)->Unit(benchmark::kMillisecond);

void BM_EstimateNormals(benchmark::State& state) {
  Rng rng(2);
  PointCloudFrame cloud;
  auto n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i) {
    cloud.xyz.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.4, 1.0));
    cloud.rgb.emplace_back(0.5, 0.5, 0.5);
    cloud.normal.emplace_back(0, 0, -1);
    cloud.pixel_index.push_back(-1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(estimate_normals(cloud, 10));
}
BENCHMARK(BM_EstimateNormals)->Arg(4096)->Arg(32768)->Unit(benchmark::kMillisecond);

void BM_SampleScene(benchmark::State& state) {
  SynthConfig cfg;
  cfg.recipe = {"knife", "bowl"};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_scene(cfg, seed++));
}
BENCHMARK(BM_SampleScene)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  ModelConfig mc;
  ModelParams params = init_params(mc, 3);
  Rng rng(4);
  auto n = static_cast<Eigen::Index>(state.range(0));
  Eigen::MatrixXd xyz(n, 3), rgbn(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    xyz.row(i) << rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.4, 1.0);
    rgbn.row(i) << rng.next_double(), rng.next_double(), rng.next_double(), 0.0, 0.0, -1.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(forward_raw(xyz, rgbn, params));
}
BENCHMARK(BM_Forward)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig mc;
  ModelParams params = init_params(mc, 3);
  LossConfig lc;
  Rng rng(5);
  const Eigen::Index n = 2048;
  Eigen::MatrixXd xyz(n, 3), rgbn(n, 6), gt = Eigen::MatrixXd::Zero(n, 12),
                  mask = Eigen::MatrixXd::Ones(n, 4);
  std::vector<std::uint8_t> labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xyz.row(i) << rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.4, 1.0);
    rgbn.row(i) << rng.next_double(), rng.next_double(), rng.next_double(), 0.0, 0.0, -1.0;
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.next_index(7));
  }
  for (auto _ : state) {
    ForwardCache cache;
    ForwardResult fwd = forward_raw(xyz, rgbn, params, &cache);
    FocalResult focal = focal_loss(fwd.seg_scores, labels, lc);
    OffsetLossResult off = keypoint_offset_loss(fwd.offsets, gt, mask);
    benchmark::DoNotOptimize(
        backward_raw(params, cache, lc.lambda_weight * focal.grad, off.grad));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_MeanShift(benchmark::State& state) {
  Rng rng(6);
  ClusterConfig cfg;
  std::vector<Vec3> votes;
  auto n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i)
    votes.push_back(Vec3(0.1, 0.0, 0.5) +
                    0.3 * cfg.bandwidth * Vec3(rng.normal(), rng.normal(), rng.normal()));
  for (auto _ : state) benchmark::DoNotOptimize(mean_shift(votes, cfg));
}
BENCHMARK(BM_MeanShift)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_ExtractQuadruplets(benchmark::State& state) {
  SynthConfig cfg;
  cfg.recipe = {"knife", "bowl"};
  cfg.density = 150000.0;
  SceneGroundTruth scene = sample_scene(cfg, 7);
  std::vector<std::size_t> all(scene.cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  OffsetTargets targets = ground_truth_offsets(scene, all);
  ClusterConfig cluster;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        extract_quadruplets(scene.cloud, scene.labels, targets.offsets, cluster));
}
BENCHMARK(BM_ExtractQuadruplets)->Unit(benchmark::kMillisecond);

void BM_WeightedFMeasure(benchmark::State& state) {
  Rng rng(8);
  auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Vec3> xyz;
  std::vector<std::uint8_t> gt(n, 0);
  Eigen::VectorXd conf(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    xyz.emplace_back(rng.uniform(0, 0.3), rng.uniform(0, 0.3), 0.5);
    gt[i] = i < n / 5 ? 1 : 0;
    conf(static_cast<Eigen::Index>(i)) = rng.next_double();
  }
  FMeasureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(weighted_fmeasure(conf, gt, 1, xyz, cfg));
}
BENCHMARK(BM_WeightedFMeasure)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
