#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

#include "affkp/labels.hpp"

namespace affkp {

enum class OffsetNorm { kTotalPoints, kInRegionPoints };

struct LossConfig {
  double gamma = 2.0;  // focusing parameter
  std::array<double, kNumClasses> alpha = {0.03, 0.12, 0.17, 0.21, 0.17, 0.2, 0.1};
  double lambda_weight = 100.0;
  double learning_rate = 0.02;
  double momentum = 0.9;
  int epochs = 200;
  int checkpoint_every = 50;
  OffsetNorm offset_norm = OffsetNorm::kTotalPoints;

  void validate() const;
};

struct LossReport {
  double semantic_loss = 0;
  double keypoint_loss = 0;
  double multitask_loss = 0;
  std::array<double, kNumClasses> per_class = {};  // semantic loss split by true class
};

struct FocalResult {
  double value = 0;
  Eigen::MatrixXd grad;  // d(loss)/d(scores), N x 7
  std::array<double, kNumClasses> per_class = {};
};

// Mean over points of -alpha[l] * (1 - p)^gamma * log(p), with p the
// true-class confidence clamped to [1e-7, 1].
FocalResult focal_loss(const Eigen::MatrixXd& scores, const std::vector<std::uint8_t>& labels,
                       const LossConfig& cfg);

struct OffsetLossResult {
  double value = 0;
  Eigen::MatrixXd grad;  // d(loss)/d(pred), N x 12
};

// Masked componentwise-absolute-sum error over the four slots, divided by the
// point count (or the in-region count). Subgradient 0 at exact zeros.
OffsetLossResult keypoint_offset_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt,
                                      const Eigen::MatrixXd& mask,
                                      OffsetNorm norm = OffsetNorm::kTotalPoints);

double multitask_loss(double semantic, double keypoint, const LossConfig& cfg);

LossReport make_report(const FocalResult& focal, const OffsetLossResult& offsets,
                       const LossConfig& cfg);

}  // namespace affkp
