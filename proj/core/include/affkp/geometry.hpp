#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "affkp/error.hpp"

namespace affkp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Pinhole camera, no distortion.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// Depth in meters (0 = invalid sample), rgb channels in [0, 1]; both
// row-major H x W.
struct RgbdImage {
  int width = 0, height = 0;
  std::vector<float> depth;  // H*W
  std::vector<float> rgb;    // H*W*3

  float depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  void validate() const;
};

struct PointCloudFrame {
  std::vector<Vec3> xyz;
  std::vector<Vec3> rgb;
  std::vector<Vec3> normal;
  std::vector<std::int64_t> pixel_index;  // source pixel v*width+u, -1 if not from an image

  std::size_t size() const { return xyz.size(); }
  void validate() const;  // throws DataError on any violated invariant
};

// Inverse pinhole projection. Pixels with depth 0 are dropped;
// pixel_index keeps the provenance of every emitted point.
PointCloudFrame backproject(const RgbdImage& img, const CameraIntrinsics& k);

// Forward projection to continuous pixel coordinates.
Eigen::Vector2d project(const CameraIntrinsics& k, const Vec3& p);

struct NormalEstimate {
  PointCloudFrame cloud;
  std::vector<std::size_t> degenerate_indices;  // points that got the fallback normal
};

// k-NN PCA normals, oriented toward the camera at the origin
// (normal . (-point) >= 0). Degenerate neighborhoods (rank < 2 covariance)
// get the flagged fallback (0,0,-1) and are reported.
NormalEstimate estimate_normals(const PointCloudFrame& cloud, std::size_t k_neighbors);

struct SubsampleResult {
  PointCloudFrame cloud;
  std::vector<std::size_t> indices;  // into the source cloud, ascending
};

// Uniform choice without replacement when the cloud is larger than target_n,
// identity otherwise. Deterministic per seed.
SubsampleResult subsample(const PointCloudFrame& cloud, std::size_t target_n, std::uint64_t seed);

}  // namespace affkp
