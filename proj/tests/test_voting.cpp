#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "affkp/rng.hpp"
#include "affkp/scene.hpp"
#include "affkp/voting.hpp"

using namespace affkp;

namespace {

PointCloudFrame cloud_from_points(const std::vector<Vec3>& pts) {
  PointCloudFrame c;
  c.xyz = pts;
  c.rgb.assign(pts.size(), Vec3(0.5, 0.5, 0.5));
  c.normal.assign(pts.size(), Vec3(0, 0, -1));
  c.pixel_index.assign(pts.size(), -1);
  return c;
}

// Dense blob of same-label points around a center.
void add_blob(std::vector<Vec3>& pts, std::vector<std::uint8_t>& labels, Rng& rng,
              const Vec3& center, double radius, int n, std::uint8_t label) {
  for (int i = 0; i < n; ++i) {
    pts.push_back(center + radius * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                         rng.uniform(-1, 1)));
    labels.push_back(label);
  }
}

}  // namespace

TEST_CASE("one contiguous region gives one instance") {
  Rng rng(3);
  std::vector<Vec3> pts;
  std::vector<std::uint8_t> labels;
  add_blob(pts, labels, rng, Vec3(0, 0, 0.6), 0.02, 400, 1);
  ClusterConfig cfg;
  auto instances = separate_instances(cloud_from_points(pts), labels, cfg);
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].size() == 400);
}

TEST_CASE("two knives half a meter apart give two grasp and two cut instances") {
  SynthConfig synth;
  synth.recipe = {"knife", "knife"};
  synth.density = 120000.0;
  synth.desk_x = 1.4;
  synth.desk_y = 1.4;
  synth.placement_gap = 0.5;
  SceneGroundTruth scene = sample_scene(synth, 21);

  ClusterConfig cfg;
  cfg.separation = 0.05;
  auto instances = separate_instances(scene.cloud, scene.labels, cfg);
  int grasp = 0, cut = 0;
  for (const auto& inst : instances) {
    std::uint8_t l = scene.labels[static_cast<std::size_t>(inst[0])];
    if (l == static_cast<std::uint8_t>(Affordance::kGrasp)) ++grasp;
    if (l == static_cast<std::uint8_t>(Affordance::kCut)) ++cut;
  }
  CHECK(grasp == 2);
  CHECK(cut == 2);
}

TEST_CASE("isolated noise points below the minimum size are dropped") {
  std::vector<Vec3> pts;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 5; ++i) {
    pts.emplace_back(0.3 * i, 0.3 * i, 0.5);  // far apart
    labels.push_back(2);
  }
  ClusterConfig cfg;
  auto instances = separate_instances(cloud_from_points(pts), labels, cfg);
  CHECK(instances.empty());
}

TEST_CASE("voting with exact offsets hits the keypoints, zero offsets echo the points") {
  Rng rng(7);
  std::vector<Vec3> pts;
  std::vector<std::uint8_t> labels;
  add_blob(pts, labels, rng, Vec3(0.1, 0, 0.5), 0.02, 50, 1);
  PointCloudFrame cloud = cloud_from_points(pts);
  KeypointQuadruplet quad;
  quad[0] = Vec3(0.1, 0, 0.45);
  quad[1] = Vec3(0.1, 0, 0.55);
  quad[2] = Vec3(0.08, 0, 0.5);
  quad[3] = Vec3(0.12, 0, 0.5);

  std::vector<std::int64_t> members(50);
  for (int i = 0; i < 50; ++i) members[static_cast<std::size_t>(i)] = i;

  Eigen::MatrixXd offsets(50, 12);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 3; ++c) offsets(i, 3 * j + c) = quad[j][c] - pts[static_cast<std::size_t>(i)][c];

  auto votes = vote(cloud, members, offsets);
  for (int j = 0; j < 4; ++j)
    for (const Vec3& v : votes[static_cast<std::size_t>(j)])
      CHECK((v - quad[j]).norm() < 1e-12);

  Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(50, 12);
  auto echo = vote(cloud, members, zeros);
  for (int i = 0; i < 50; ++i)
    CHECK((echo[0][static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(i)]).norm() == 0.0);
}

TEST_CASE("noisy votes stay within the noise radius of the target") {
  Rng rng(15);
  Vec3 target(0.05, -0.02, 0.6);
  double r = 0.004;
  std::vector<Vec3> pts;
  std::vector<std::uint8_t> labels;
  add_blob(pts, labels, rng, Vec3(0, 0, 0.6), 0.03, 80, 1);
  PointCloudFrame cloud = cloud_from_points(pts);
  std::vector<std::int64_t> members(80);
  Eigen::MatrixXd offsets(80, 12);
  for (int i = 0; i < 80; ++i) {
    members[static_cast<std::size_t>(i)] = i;
    for (int j = 0; j < 4; ++j) {
      Vec3 noise(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      noise *= r / std::sqrt(3.0);
      Vec3 of = target + noise - pts[static_cast<std::size_t>(i)];
      for (int c = 0; c < 3; ++c) offsets(i, 3 * j + c) = of[c];
    }
  }
  auto votes = vote(cloud, members, offsets);
  for (int j = 0; j < 4; ++j)
    for (const Vec3& v : votes[static_cast<std::size_t>(j)]) CHECK((v - target).norm() <= r);
}

TEST_CASE("mean shift fixed points") {
  ClusterConfig cfg;
  std::vector<Vec3> same(40, Vec3(0.2, -0.1, 0.7));
  ModeResult m = mean_shift(same, cfg);
  CHECK((m.mode - Vec3(0.2, -0.1, 0.7)).norm() < 1e-12);
  CHECK(m.converged);

  std::vector<Vec3> one = {Vec3(1, 2, 3)};
  CHECK((mean_shift(one, cfg).mode - Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("hitting the iteration cap sets the warning flag") {
  Rng rng(23);
  ClusterConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-12;
  std::vector<Vec3> votes;
  for (int i = 0; i < 60; ++i)
    votes.emplace_back(rng.uniform(0, 0.05), rng.uniform(0, 0.05), rng.uniform(0, 0.05));
  ModeResult m = mean_shift(votes, cfg);
  CHECK(!m.converged);
  CHECK(m.mode.allFinite());
}

TEST_CASE("mean shift finds the dominant of two separated blobs") {
  Rng rng(9);
  ClusterConfig cfg;  // bandwidth 0.02
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 big(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.5);
    Vec3 small_c = big + Vec3(12 * cfg.bandwidth, 0, 0);
    std::vector<Vec3> votes;
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i < 70; ++i) {
      Vec3 v = big + 0.15 * cfg.bandwidth *
                         Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      votes.push_back(v);
      sum += v;
    }
    for (int i = 0; i < 30; ++i)
      votes.push_back(small_c + 0.15 * cfg.bandwidth * Vec3(rng.uniform(-1, 1),
                                                            rng.uniform(-1, 1),
                                                            rng.uniform(-1, 1)));
    ModeResult m = mean_shift(votes, cfg);
    CHECK((m.mode - sum / 70.0).norm() < 0.1 * cfg.bandwidth);
  }
}

TEST_CASE("flat-kernel iteration: density ascent holds, step sizes reported") {
  Rng rng(41);
  ClusterConfig cfg;
  cfg.kernel = Kernel::kFlat;
  const double h2 = cfg.bandwidth * cfg.bandwidth;
  int step_violations = 0;    // literal step-size monotonicity, reported only
  int ascent_violations = 0;  // shadow-density ascent, must hold
  int non_converged = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> votes;
    int blobs = 1 + static_cast<int>(rng.next_index(3));
    for (int b = 0; b < blobs; ++b) {
      Vec3 center(rng.uniform(0, 0.2), rng.uniform(0, 0.2), rng.uniform(0, 0.2));
      double sigma = cfg.bandwidth * rng.uniform(0.3, 1.2);
      int n = 20 + static_cast<int>(rng.next_index(60));
      for (int i = 0; i < n; ++i)
        votes.push_back(center + sigma * Vec3(rng.normal(), rng.normal(), rng.normal()));
    }

    // The flat window ascends its shadow density (Epanechnikov profile).
    auto shadow_density = [&](const Vec3& y) {
      double f = 0;
      for (const Vec3& v : votes) {
        double u = (y - v).squaredNorm() / h2;
        if (u < 1.0) f += 1.0 - u;
      }
      return f;
    };

    Vec3 y = votes[0];
    double prev_density = shadow_density(y);
    double prev_step = -1.0;
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      Vec3 num = Vec3::Zero();
      double den = 0;
      for (const Vec3& v : votes)
        if ((y - v).squaredNorm() <= h2) {
          num += v;
          den += 1;
        }
      Vec3 next = den > 0 ? Vec3(num / den) : y;
      double step = (next - y).norm();
      y = next;
      double density = shadow_density(y);
      if (density < prev_density - 1e-12) ++ascent_violations;
      if (it >= 4 && prev_step >= 0 && step > prev_step + 1e-12) ++step_violations;
      prev_density = density;
      prev_step = step;
      if (step < cfg.tolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) ++non_converged;
  }
  CHECK(ascent_violations == 0);
  CHECK(non_converged == 0);
  // Strict per-step shrinkage does not always hold when the window
  // membership changes; the count is surfaced rather than asserted away.
  WARN_MESSAGE(step_violations == 0,
               "step-size monotonicity violations observed: ", step_violations);
}

TEST_CASE("extraction recovers ground truth exactly and ignores background") {
  SynthConfig synth;
  synth.recipe = {"knife", "bowl"};
  synth.density = 120000.0;
  SceneGroundTruth scene = sample_scene(synth, 33);
  std::vector<std::size_t> all(scene.cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  OffsetTargets targets = ground_truth_offsets(scene, all);

  ClusterConfig cfg;
  auto extracted = extract_quadruplets(scene.cloud, scene.labels, targets.offsets, cfg);
  REQUIRE(extracted.size() == scene.instances.size());
  for (const AffordanceInstance& inst : extracted) {
    const AffordanceInstance* gt = nullptr;
    double best = 1e9;
    for (const AffordanceInstance& cand : scene.instances) {
      if (cand.label != inst.label) continue;
      double d = (cand.keypoints.centroid() - inst.keypoints.centroid()).norm();
      if (d < best) {
        best = d;
        gt = &cand;
      }
    }
    REQUIRE(gt != nullptr);
    for (int j = 0; j < 4; ++j)
      CHECK((inst.keypoints[j] - gt->keypoints[j]).norm() < 1e-6);
  }

  std::vector<std::uint8_t> bg(scene.labels.size(), 0);
  CHECK(extract_quadruplets(scene.cloud, bg, targets.offsets, cfg).empty());
}

TEST_CASE("extraction is invariant under input permutation") {
  SynthConfig synth;
  synth.recipe = {"spoon"};
  synth.density = 100000.0;
  SceneGroundTruth scene = sample_scene(synth, 55);
  std::vector<std::size_t> all(scene.cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  OffsetTargets targets = ground_truth_offsets(scene, all);

  ClusterConfig cfg;
  auto base = extract_quadruplets(scene.cloud, scene.labels, targets.offsets, cfg);

  Rng rng(77);
  std::vector<std::size_t> perm(scene.cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  PointCloudFrame shuffled;
  std::vector<std::uint8_t> labels_p(perm.size());
  Eigen::MatrixXd offsets_p(static_cast<Eigen::Index>(perm.size()), 12);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    shuffled.xyz.push_back(scene.cloud.xyz[perm[r]]);
    shuffled.rgb.push_back(scene.cloud.rgb[perm[r]]);
    shuffled.normal.push_back(scene.cloud.normal[perm[r]]);
    shuffled.pixel_index.push_back(-1);
    labels_p[r] = scene.labels[perm[r]];
    offsets_p.row(static_cast<Eigen::Index>(r)) =
        targets.offsets.row(static_cast<Eigen::Index>(perm[r]));
  }
  auto shuffled_out = extract_quadruplets(shuffled, labels_p, offsets_p, cfg);

  REQUIRE(shuffled_out.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(shuffled_out[i].label == base[i].label);
    for (int j = 0; j < 4; ++j)
      CHECK((shuffled_out[i].keypoints[j] - base[i].keypoints[j]).norm() < 1e-9);
    // Member sets correspond through the permutation.
    std::vector<std::int64_t> mapped;
    for (std::int64_t local : shuffled_out[i].points)
      mapped.push_back(static_cast<std::int64_t>(perm[static_cast<std::size_t>(local)]));
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == base[i].points);
  }
}

TEST_CASE("perturbed offsets keep quadruplets within the noise bound") {
  SynthConfig synth;
  synth.recipe = {"knife"};
  synth.density = 120000.0;
  SceneGroundTruth scene = sample_scene(synth, 70);
  std::vector<std::size_t> all(scene.cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  OffsetTargets targets = ground_truth_offsets(scene, all);

  Rng rng(4);
  double noise = 0.005;
  Eigen::MatrixXd noisy = targets.offsets;
  for (Eigen::Index i = 0; i < noisy.rows(); ++i)
    for (Eigen::Index c = 0; c < 12; ++c)
      noisy(i, c) += rng.uniform(-noise / std::sqrt(3.0), noise / std::sqrt(3.0));

  ClusterConfig cfg;
  auto extracted = extract_quadruplets(scene.cloud, scene.labels, noisy, cfg);
  REQUIRE(extracted.size() == scene.instances.size());
  for (const AffordanceInstance& inst : extracted) {
    const AffordanceInstance* gt = nullptr;
    double best = 1e9;
    for (const AffordanceInstance& cand : scene.instances) {
      if (cand.label != inst.label) continue;
      double d = (cand.keypoints.centroid() - inst.keypoints.centroid()).norm();
      if (d < best) {
        best = d;
        gt = &cand;
      }
    }
    for (int j = 0; j < 4; ++j)
      CHECK((inst.keypoints[j] - gt->keypoints[j]).norm() <= noise);
  }
}
