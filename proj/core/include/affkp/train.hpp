#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "affkp/losses.hpp"
#include "affkp/model.hpp"
#include "affkp/scene.hpp"

namespace affkp {

// One scene, subsampled to the model's seed-point count with targets attached.
struct TrainSample {
  Eigen::MatrixXd xyz;   // n x 3
  Eigen::MatrixXd rgbn;  // n x 6
  std::vector<std::uint8_t> labels;
  Eigen::MatrixXd gt_offsets;  // n x 12
  Eigen::MatrixXd mask;        // n x 4
};

TrainSample make_train_sample(const SceneGroundTruth& scene, int seed_points,
                              std::uint64_t subsample_seed);

struct TrainResult {
  ModelParams params;
  std::vector<LossReport> history;  // per epoch, averaged over scene batches
  bool diverged = false;
  int completed_epochs = 0;
};

using EpochCallback = std::function<void(int epoch, const ModelParams&, const LossReport&)>;

// Gradient descent with momentum on the multi-task objective, one scene per
// step, seeded shuffling per epoch. Divergence (loss above 1e6 or non-finite)
// aborts and returns the last whole-epoch checkpoint.
TrainResult train_samples(const std::vector<TrainSample>& samples, const ModelConfig& model_cfg,
                          const LossConfig& loss_cfg, std::uint64_t seed,
                          const EpochCallback& on_epoch = {});

TrainResult train(const std::vector<SceneGroundTruth>& dataset, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, std::uint64_t seed);

// CSV with columns epoch,semantic,keypoint,multitask.
void write_loss_history(const std::filesystem::path& path, const std::vector<LossReport>& history);

}  // namespace affkp
