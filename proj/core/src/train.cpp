#include "affkp/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "affkp/error.hpp"
#include "affkp/rng.hpp"

namespace affkp {

namespace {
constexpr double kDivergenceCeiling = 1e6;
}

TrainSample make_train_sample(const SceneGroundTruth& scene, int seed_points,
                              std::uint64_t subsample_seed) {
  SubsampleResult sub = subsample(scene.cloud, static_cast<std::size_t>(seed_points),
                                  subsample_seed);
  const std::size_t n = sub.cloud.size();
  TrainSample s;
  s.xyz.resize(static_cast<Eigen::Index>(n), 3);
  s.rgbn.resize(static_cast<Eigen::Index>(n), 6);
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index r = static_cast<Eigen::Index>(i);
    s.xyz.row(r) = sub.cloud.xyz[i].transpose();
    s.rgbn.block<1, 3>(r, 0) = sub.cloud.rgb[i].transpose();
    s.rgbn.block<1, 3>(r, 3) = sub.cloud.normal[i].transpose();
    s.labels[i] = scene.labels[sub.indices[i]];
  }
  OffsetTargets targets = ground_truth_offsets(scene, sub.indices);
  s.gt_offsets = std::move(targets.offsets);
  s.mask = std::move(targets.mask);
  return s;
}

TrainResult train_samples(const std::vector<TrainSample>& samples, const ModelConfig& model_cfg,
                          const LossConfig& loss_cfg, std::uint64_t seed,
                          const EpochCallback& on_epoch) {
  if (samples.empty()) throw DataError("train: empty dataset");
  loss_cfg.validate();

  TrainResult result;
  result.params = init_params(model_cfg, seed);
  ModelParams last_good = result.params;

  std::vector<std::vector<double>> velocity(result.params.tensors.size());
  for (std::size_t t = 0; t < velocity.size(); ++t)
    velocity[t].assign(result.params.tensors[t].data.size(), 0.0);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < loss_cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(seed, 0x5351ull + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    LossReport epoch_mean;
    bool bad = false;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainSample& s = samples[order[step]];
      ForwardCache cache;
      ForwardResult fwd = forward_raw(s.xyz, s.rgbn, result.params, &cache);
      FocalResult focal = focal_loss(fwd.seg_scores, s.labels, loss_cfg);
      OffsetLossResult off =
          keypoint_offset_loss(fwd.offsets, s.gt_offsets, s.mask, loss_cfg.offset_norm);
      double multi = multitask_loss(focal.value, off.value, loss_cfg);

      if (!std::isfinite(multi) || multi > kDivergenceCeiling) {
        bad = true;
        break;
      }

      epoch_mean.semantic_loss += focal.value;
      epoch_mean.keypoint_loss += off.value;
      epoch_mean.multitask_loss += multi;
      for (int c = 0; c < kNumClasses; ++c) epoch_mean.per_class[c] += focal.per_class[c];

      Eigen::MatrixXd d_scores = loss_cfg.lambda_weight * focal.grad;
      auto grads = backward_raw(result.params, cache, d_scores, off.grad);

      for (std::size_t t = 0; t < grads.size(); ++t) {
        std::vector<double>& v = velocity[t];
        std::vector<float>& w = result.params.tensors[t].data;
        const std::vector<double>& g = grads[t];
        for (std::size_t k = 0; k < g.size(); ++k) {
          v[k] = loss_cfg.momentum * v[k] - loss_cfg.learning_rate * g[k];
          w[k] = static_cast<float>(w[k] + v[k]);
        }
      }
    }

    if (bad) {
      result.params = last_good;
      result.diverged = true;
      result.completed_epochs = epoch;
      return result;
    }

    double n_steps = static_cast<double>(order.size());
    epoch_mean.semantic_loss /= n_steps;
    epoch_mean.keypoint_loss /= n_steps;
    epoch_mean.multitask_loss /= n_steps;
    for (double& v : epoch_mean.per_class) v /= n_steps;
    result.history.push_back(epoch_mean);
    result.completed_epochs = epoch + 1;
    last_good = result.params;
    if (on_epoch) on_epoch(epoch, result.params, epoch_mean);
  }
  return result;
}

TrainResult train(const std::vector<SceneGroundTruth>& dataset, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, std::uint64_t seed) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  model_cfg.validate();
  std::vector<TrainSample> samples;
  samples.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    samples.push_back(make_train_sample(dataset[i], model_cfg.seed_points,
                                        mix_seed(seed, 0xD5ull + i)));
  return train_samples(samples, model_cfg, loss_cfg, seed);
}

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<LossReport>& history) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "epoch,semantic,keypoint,multitask\n";
  f.precision(17);
  for (std::size_t e = 0; e < history.size(); ++e)
    f << e << "," << history[e].semantic_loss << "," << history[e].keypoint_loss << ","
      << history[e].multitask_loss << "\n";
  if (!f) throw DataError("short write: " + path.string());
}

}  // namespace affkp
