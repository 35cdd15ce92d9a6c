#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "affkp/scene.hpp"

namespace affkp {

struct FMeasureConfig {
  double beta = 1.0;
  double sigma_sq = 5.0;                     // dependency variance, cm^2
  double alpha_w = std::log(0.5) / 5.0;      // importance decay per cm

  void validate() const;
};

// Weighted F-measure of a confidence map against the binary ground-truth mask
// of one affordance, on a point set. Image-grid pixel distances are replaced
// by 3D Euclidean distances in centimeters. Throws DataError when the ground
// truth has no foreground for this affordance.
double weighted_fmeasure(const Eigen::VectorXd& pred_conf,
                         const std::vector<std::uint8_t>& gt_labels, std::uint8_t affordance,
                         const std::vector<Vec3>& xyz, const FMeasureConfig& cfg);

// Mean keypoint-to-quadruplet-centroid distance over ground-truth instances.
double d_aff(const std::vector<KeypointQuadruplet>& gt_quadruplets);

struct MatchedPair {
  KeypointQuadruplet pred;
  KeypointQuadruplet gt;
};

// Mean slot-wise Euclidean error normalized by d.
double nmse(const std::vector<MatchedPair>& matched, double d);

// Percentage of GT quadruplets whose matched prediction has all four slot
// errors <= threshold_frac * d; unmatched GT quadruplets count as incorrect.
double pck3d(const std::vector<MatchedPair>& matched, int unmatched_gt, double d,
             double threshold_frac = 0.3);

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
};

// Minimum-total-centroid-distance one-to-one assignment; pairs farther apart
// than gate_distance are discarded to the unmatched sets.
MatchResult match_quadruplets(const std::vector<KeypointQuadruplet>& pred,
                              const std::vector<KeypointQuadruplet>& gt, double gate_distance);

// Exact min-cost assignment of min(rows, cols) pairs on an arbitrary cost
// matrix (Kuhn-Munkres). Exposed for the matching tests.
std::vector<std::pair<int, int>> min_cost_assignment(const Eigen::MatrixXd& cost);

struct AffordanceMetrics {
  bool present = false;     // GT instances of this affordance exist
  bool degenerate = false;  // d_aff collapsed to zero
  double fmeasure = 0;
  double nmse = 0;
  double pck = 0;
  double d_aff = 0;
  int c_aff = 0;      // total GT quadruplets
  int c_correct = 0;  // quadruplets within the PCK gate
  int matched = 0;
  int fmeasure_scenes = 0;  // scenes contributing to the F average
};

struct MetricsReport {
  std::array<AffordanceMetrics, kNumClasses> per_affordance;  // slot 0 unused
  double macro_f = 0, macro_nmse = 0, macro_pck = 0;
  int affordances_present = 0;
};

// One scene's evaluation inputs: the common point set scored for
// segmentation plus both instance lists for the keypoint metrics.
struct SceneEvaluation {
  std::vector<Vec3> xyz;
  std::vector<std::uint8_t> gt_labels;
  Eigen::MatrixXd scores;  // n x 7 confidences on the same points
  std::vector<AffordanceInstance> pred_instances;
  std::vector<AffordanceInstance> gt_instances;
};

MetricsReport evaluate_scenes(const std::vector<SceneEvaluation>& scenes,
                              const FMeasureConfig& cfg, double threshold_frac = 0.3);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace affkp
