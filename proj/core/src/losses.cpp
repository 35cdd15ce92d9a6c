#include "affkp/losses.hpp"

#include <cmath>

#include "affkp/error.hpp"

namespace affkp {

namespace {
constexpr double kProbFloor = 1e-7;
}

void LossConfig::validate() const {
  if (gamma < 0) throw ConfigError("loss: gamma must be >= 0");
  for (double a : alpha)
    if (!(a > 0)) throw ConfigError("loss: alpha entries must be positive");
  if (!(lambda_weight > 0)) throw ConfigError("loss: lambda must be positive");
  if (!(learning_rate >= 0)) throw ConfigError("loss: learning rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("loss: momentum outside [0,1)");
  if (epochs < 1) throw ConfigError("loss: epochs must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("loss: checkpoint_every must be >= 1");
}

FocalResult focal_loss(const Eigen::MatrixXd& scores, const std::vector<std::uint8_t>& labels,
                       const LossConfig& cfg) {
  if (scores.cols() != kNumClasses) throw DataError("focal loss: scores must have 7 columns");
  if (static_cast<std::size_t>(scores.rows()) != labels.size())
    throw DataError("focal loss: labels do not align with scores");
  if (scores.rows() == 0) throw DataError("focal loss: empty input");

  const Eigen::Index n = scores.rows();
  FocalResult out;
  out.grad = Eigen::MatrixXd::Zero(n, kNumClasses);

  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint8_t l = labels[static_cast<std::size_t>(i)];
    if (l >= kNumClasses)
      throw DataError("focal loss: label out of range at point " + std::to_string(i));
    double a = cfg.alpha[l];
    double raw = scores(i, l);
    double p = std::min(std::max(raw, kProbFloor), 1.0);
    double one_minus = 1.0 - p;
    double focus = std::pow(one_minus, cfg.gamma);
    double term = -a * focus * std::log(p);
    total += term;
    out.per_class[l] += term;

    // d/dp [-a (1-p)^g log p] = a*g*(1-p)^(g-1)*log p - a*(1-p)^g / p,
    // zero where the clamp is active.
    if (raw > kProbFloor && raw < 1.0) {
      double dfocus = cfg.gamma > 0 ? cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) : 0.0;
      out.grad(i, l) = (a * dfocus * std::log(p) - a * focus / p) / static_cast<double>(n);
    }
  }
  out.value = total / static_cast<double>(n);
  for (double& v : out.per_class) v /= static_cast<double>(n);
  return out;
}

OffsetLossResult keypoint_offset_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt,
                                      const Eigen::MatrixXd& mask, OffsetNorm norm) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() != 3 * kKeypointSlots)
    throw DataError("offset loss: prediction/target shape mismatch");
  if (mask.rows() != pred.rows() || mask.cols() != kKeypointSlots)
    throw DataError("offset loss: mask shape mismatch");

  const Eigen::Index n = pred.rows();
  OffsetLossResult out;
  out.grad = Eigen::MatrixXd::Zero(n, pred.cols());
  if (n == 0) return out;

  double denom;
  if (norm == OffsetNorm::kTotalPoints) {
    denom = static_cast<double>(n);
  } else {
    double in_region = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask.row(i).maxCoeff() > 0) in_region += 1;
    denom = in_region > 0 ? in_region : 1.0;
  }

  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < kKeypointSlots; ++j) {
      if (!(mask(i, j) > 0)) continue;
      for (int c = 0; c < 3; ++c) {
        double diff = pred(i, 3 * j + c) - gt(i, 3 * j + c);
        total += std::abs(diff);
        if (diff > 0)
          out.grad(i, 3 * j + c) = 1.0 / denom;
        else if (diff < 0)
          out.grad(i, 3 * j + c) = -1.0 / denom;
        // exact zero: subgradient 0
      }
    }
  }
  out.value = total / denom;
  return out;
}

double multitask_loss(double semantic, double keypoint, const LossConfig& cfg) {
  if (!std::isfinite(semantic) || !std::isfinite(keypoint) || semantic < 0 || keypoint < 0)
    throw DataError("multitask loss: inputs must be finite and non-negative");
  return keypoint + cfg.lambda_weight * semantic;
}

LossReport make_report(const FocalResult& focal, const OffsetLossResult& offsets,
                       const LossConfig& cfg) {
  LossReport r;
  r.semantic_loss = focal.value;
  r.keypoint_loss = offsets.value;
  r.multitask_loss = multitask_loss(focal.value, offsets.value, cfg);
  r.per_class = focal.per_class;
  return r;
}

}  // namespace affkp
