#include <doctest.h>

#include <cmath>

#include "affkp/losses.hpp"
#include "affkp/rng.hpp"
#include "affkp/scene.hpp"
#include "affkp/train.hpp"

using namespace affkp;

namespace {

Eigen::MatrixXd random_scores(Rng& rng, int n) {
  Eigen::MatrixXd scores(n, kNumClasses);
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      scores(i, c) = 0.05 + rng.next_double();
      sum += scores(i, c);
    }
    scores.row(i) /= sum;
  }
  return scores;
}

std::vector<std::uint8_t> random_labels(Rng& rng, int n) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.next_index(kNumClasses));
  return labels;
}

// Plain mean cross-entropy, the independent oracle for gamma=0, alpha=1.
double cross_entropy(const Eigen::MatrixXd& scores, const std::vector<std::uint8_t>& labels) {
  double total = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    total += -std::log(std::min(std::max(scores(i, labels[static_cast<std::size_t>(i)]), 1e-7), 1.0));
  return total / static_cast<double>(scores.rows());
}

}  // namespace

TEST_CASE("focal loss is zero at perfect confidence") {
  LossConfig cfg;
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(5, kNumClasses);
  std::vector<std::uint8_t> labels = {0, 3, 6, 1, 2};
  for (int i = 0; i < 5; ++i) scores(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  CHECK(focal_loss(scores, labels, cfg).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("focal loss frozen scalar: class 0, p=0.5, gamma=2") {
  LossConfig cfg;  // alpha[0] = 0.03, gamma = 2
  Eigen::MatrixXd scores(1, kNumClasses);
  scores.setConstant((1.0 - 0.5) / 6.0);
  scores(0, 0) = 0.5;
  std::vector<std::uint8_t> labels = {0};
  // 0.03 * 0.25 * ln 2
  CHECK(focal_loss(scores, labels, cfg).value ==
        doctest::Approx(0.0051986038541995895).epsilon(1e-12));
}

TEST_CASE("gamma=0 with unit alpha reduces to mean cross-entropy") {
  LossConfig cfg;
  cfg.gamma = 0.0;
  cfg.alpha.fill(1.0);
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(rng.next_index(40));
    Eigen::MatrixXd scores = random_scores(rng, n);
    auto labels = random_labels(rng, n);
    CHECK(focal_loss(scores, labels, cfg).value ==
          doctest::Approx(cross_entropy(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("focal loss rejects out-of-range labels") {
  LossConfig cfg;
  Rng rng(1);
  Eigen::MatrixXd scores = random_scores(rng, 3);
  std::vector<std::uint8_t> labels = {0, 7, 1};
  CHECK_THROWS_AS(focal_loss(scores, labels, cfg), DataError);
}

TEST_CASE("focal gradient matches central finite differences") {
  Rng rng(7);
  LossConfig cfg;
  const double step = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    cfg.gamma = (trial % 3 == 0) ? 0.0 : (trial % 3 == 1 ? 1.0 : 2.0);
    int n = 1 + static_cast<int>(rng.next_index(12));
    Eigen::MatrixXd scores = random_scores(rng, n);
    auto labels = random_labels(rng, n);
    FocalResult res = focal_loss(scores, labels, cfg);
    for (int i = 0; i < n; ++i) {
      int l = labels[static_cast<std::size_t>(i)];
      Eigen::MatrixXd up = scores, down = scores;
      up(i, l) += step;
      down(i, l) -= step;
      double fd = (focal_loss(up, labels, cfg).value - focal_loss(down, labels, cfg).value) /
                  (2 * step);
      CHECK(std::abs(res.grad(i, l) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("focal loss is permutation invariant") {
  Rng rng(13);
  LossConfig cfg;
  Eigen::MatrixXd scores = random_scores(rng, 30);
  auto labels = random_labels(rng, 30);
  double base = focal_loss(scores, labels, cfg).value;

  std::vector<std::size_t> perm(30);
  for (std::size_t i = 0; i < 30; ++i) perm[i] = i;
  rng.shuffle(perm);
  Eigen::MatrixXd scores_p(30, kNumClasses);
  std::vector<std::uint8_t> labels_p(30);
  for (std::size_t i = 0; i < 30; ++i) {
    scores_p.row(static_cast<Eigen::Index>(i)) = scores.row(static_cast<Eigen::Index>(perm[i]));
    labels_p[i] = labels[perm[i]];
  }
  CHECK(focal_loss(scores_p, labels_p, cfg).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("offset loss identities") {
  Eigen::MatrixXd pred = Eigen::MatrixXd::Random(6, 12);
  Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(6, 4);
  CHECK(keypoint_offset_loss(pred, pred, mask).value == 0.0);

  // Single in-region point, slot 1 off by (0.3, 0, 0.4).
  Eigen::MatrixXd gt = Eigen::MatrixXd::Zero(1, 12);
  Eigen::MatrixXd p1 = Eigen::MatrixXd::Zero(1, 12);
  p1(0, 0) = 0.3;
  p1(0, 2) = 0.4;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Ones(1, 4);
  CHECK(keypoint_offset_loss(p1, gt, m1).value == doctest::Approx(0.7).epsilon(1e-12));

  // All-background mask annihilates any prediction.
  Eigen::MatrixXd m0 = Eigen::MatrixXd::Zero(6, 4);
  Eigen::MatrixXd junk = 100.0 * Eigen::MatrixXd::Random(6, 12);
  CHECK(keypoint_offset_loss(junk, Eigen::MatrixXd::Zero(6, 12), m0).value == 0.0);
}

TEST_CASE("offset gradient matches central finite differences away from kinks") {
  Rng rng(23);
  const double step = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng.next_index(10));
    Eigen::MatrixXd pred(n, 12), gt(n, 12), mask(n, 4);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 12; ++c) {
        gt(i, c) = rng.uniform(-0.2, 0.2);
        // keep residuals off zero so the kink is not sampled
        double d = rng.uniform(0.01, 0.1) * (rng.next_index(2) ? 1.0 : -1.0);
        pred(i, c) = gt(i, c) + d;
      }
      for (int j = 0; j < 4; ++j) mask(i, j) = rng.next_index(2) ? 1.0 : 0.0;
    }
    OffsetNorm norm = trial % 2 ? OffsetNorm::kTotalPoints : OffsetNorm::kInRegionPoints;
    OffsetLossResult res = keypoint_offset_loss(pred, gt, mask, norm);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 12; ++c) {
        Eigen::MatrixXd up = pred, down = pred;
        up(i, c) += step;
        down(i, c) -= step;
        double fd = (keypoint_offset_loss(up, gt, mask, norm).value -
                     keypoint_offset_loss(down, gt, mask, norm).value) /
                    (2 * step);
        CHECK(std::abs(res.grad(i, c) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("multitask loss composition") {
  LossConfig cfg;  // lambda = 100
  CHECK(multitask_loss(0.0, 0.0, cfg) == 0.0);
  CHECK(multitask_loss(0.01, 0.5, cfg) == doctest::Approx(1.5).epsilon(1e-12));
  LossConfig zero = cfg;
  zero.lambda_weight = 0.0;
  CHECK(multitask_loss(0.33, 0.25, zero) == 0.25);

  // Linearity in the semantic term.
  for (double t : {0.5, 2.0, 7.0}) {
    double base = multitask_loss(0.02, 0.4, cfg) - 0.4;
    double scaled = multitask_loss(0.02 * t, 0.4, cfg) - 0.4;
    CHECK(scaled == doctest::Approx(base * t).epsilon(1e-12));
  }

  LossReport report = make_report(FocalResult{0.01, {}, {}}, OffsetLossResult{0.5, {}}, cfg);
  CHECK(std::abs(report.multitask_loss - (report.keypoint_loss +
                                          cfg.lambda_weight * report.semantic_loss)) <=
        1e-9 * report.multitask_loss);
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  SynthConfig synth;
  synth.recipe = {"tomato"};
  synth.density = 60000.0;
  std::vector<SceneGroundTruth> dataset = {sample_scene(synth, 3)};

  ModelConfig mc;
  mc.appearance_hidden = mc.appearance_features = 8;
  mc.geometry_hidden = mc.geometry_features = 8;
  mc.fusion_hidden = mc.feature_dim = 12;
  mc.seg_hidden = mc.offset_hidden = 8;
  mc.seed_points = 128;

  LossConfig lc;
  lc.learning_rate = 0.0;
  lc.epochs = 3;
  TrainResult result = train(dataset, mc, lc, 5);
  CHECK(result.params == init_params(mc, 5));
  CHECK(result.completed_epochs == 3);
}

TEST_CASE("training is deterministic per seed") {
  SynthConfig synth;
  synth.recipe = {"tomato"};
  synth.density = 60000.0;
  std::vector<SceneGroundTruth> dataset = {sample_scene(synth, 3), sample_scene(synth, 4)};

  ModelConfig mc;
  mc.appearance_hidden = mc.appearance_features = 8;
  mc.geometry_hidden = mc.geometry_features = 8;
  mc.fusion_hidden = mc.feature_dim = 12;
  mc.seg_hidden = mc.offset_hidden = 8;
  mc.seed_points = 128;

  LossConfig lc;
  lc.epochs = 4;
  lc.learning_rate = 0.01;
  TrainResult a = train(dataset, mc, lc, 11);
  TrainResult b = train(dataset, mc, lc, 11);
  CHECK(a.params == b.params);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e)
    CHECK(a.history[e].multitask_loss == b.history[e].multitask_loss);
}

TEST_CASE("divergence aborts and returns the last good checkpoint") {
  SynthConfig synth;
  synth.recipe = {"tomato"};
  synth.density = 60000.0;
  std::vector<SceneGroundTruth> dataset = {sample_scene(synth, 3)};

  ModelConfig mc;
  mc.appearance_hidden = mc.appearance_features = 8;
  mc.geometry_hidden = mc.geometry_features = 8;
  mc.fusion_hidden = mc.feature_dim = 12;
  mc.seg_hidden = mc.offset_hidden = 8;
  mc.seed_points = 128;

  LossConfig lc;
  lc.learning_rate = 1e9;  // blow up immediately
  lc.epochs = 10;
  TrainResult result = train(dataset, mc, lc, 5);
  CHECK(result.diverged);
  CHECK(result.completed_epochs < 10);
  for (const Tensor& t : result.params.tensors)
    for (float v : t.data) CHECK(std::isfinite(v));
}

TEST_CASE("training loss decreases on a single scene") {
  SynthConfig synth;
  synth.recipe = {"knife"};
  synth.density = 60000.0;
  synth.yaw_range_deg = 0.0;
  synth.size_jitter = 0.0;
  std::vector<SceneGroundTruth> dataset = {sample_scene(synth, 9)};

  ModelConfig mc;
  mc.seed_points = 512;
  LossConfig lc;
  lc.epochs = 60;
  lc.learning_rate = 0.02;
  TrainResult result = train(dataset, mc, lc, 2);
  CHECK(!result.diverged);
  REQUIRE(result.history.size() == 60);
  CHECK(result.history.back().multitask_loss < result.history.front().multitask_loss);
}
