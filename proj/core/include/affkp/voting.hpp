#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "affkp/scene.hpp"

namespace affkp {

enum class Kernel { kFlat, kGaussian };

struct ClusterConfig {
  double separation = 0.03;        // instance-separation radius (meters)
  double bandwidth = 0.02;         // mean-shift bandwidth (meters)
  Kernel kernel = Kernel::kGaussian;
  double tolerance = 1e-5;         // convergence step threshold (meters)
  int max_iterations = 200;
  double merge_radius = 0.01;      // mode-merge radius, bandwidth/2 by default
  int min_component = 20;          // components below this are discarded as noise
  int vote_start_limit = 500;      // stride the start set beyond this many votes

  void validate() const;
};

// Connected components of same-label points under the separation-radius
// adjacency graph, per nonzero label. Small components are dropped.
std::vector<std::vector<std::int64_t>> separate_instances(const PointCloudFrame& cloud,
                                                          const std::vector<std::uint8_t>& labels,
                                                          const ClusterConfig& cfg);

// One vote list per keypoint slot: x_i + of_i^j over the instance members.
std::array<std::vector<Vec3>, 4> vote(const PointCloudFrame& cloud,
                                      const std::vector<std::int64_t>& instance_points,
                                      const Eigen::MatrixXd& offsets);

struct ModeResult {
  Vec3 mode = Vec3::Zero();
  bool converged = true;   // false if any start hit the iteration cap
  int basin_count = 0;     // starts that converged into the winning mode
};

// Kernel-weighted iterative averaging from each vote (or a strided subset
// beyond the start limit); converged iterates are merged within the merge
// radius and the mode with the largest basin wins, ties broken by
// lexicographically smaller coordinates.
ModeResult mean_shift(const std::vector<Vec3>& votes, const ClusterConfig& cfg);

// separate_instances -> vote -> mean_shift per slot. Results are sorted by
// (label, centroid) so the output is invariant to input point order.
std::vector<AffordanceInstance> extract_quadruplets(const PointCloudFrame& cloud,
                                                    const std::vector<std::uint8_t>& labels,
                                                    const Eigen::MatrixXd& offsets,
                                                    const ClusterConfig& cfg);

}  // namespace affkp
