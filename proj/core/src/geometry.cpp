#include "affkp/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "affkp/kdtree.hpp"
#include "affkp/rng.hpp"

namespace affkp {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DataError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("intrinsics: image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw DataError("intrinsics: principal point outside the image");
}

void RgbdImage::validate() const {
  std::size_t n = static_cast<std::size_t>(width) * height;
  if (depth.size() != n || rgb.size() != 3 * n)
    throw DataError("rgbd image: buffer sizes do not match width*height");
  for (float d : depth)
    if (!std::isfinite(d) || d < 0) throw DataError("rgbd image: depth must be finite and >= 0");
  for (float c : rgb)
    if (!(c >= 0.0f && c <= 1.0f)) throw DataError("rgbd image: rgb outside [0,1]");
}

void PointCloudFrame::validate() const {
  if (xyz.empty()) throw DataError("point cloud: empty");
  if (rgb.size() != xyz.size() || normal.size() != xyz.size() || pixel_index.size() != xyz.size())
    throw DataError("point cloud: field sizes disagree");
  for (std::size_t i = 0; i < xyz.size(); ++i) {
    if (!xyz[i].allFinite() || !rgb[i].allFinite() || !normal[i].allFinite())
      throw DataError("point cloud: non-finite value at point " + std::to_string(i));
    if (std::abs(normal[i].norm() - 1.0) > 1e-6)
      throw DataError("point cloud: normal not unit at point " + std::to_string(i));
  }
}

PointCloudFrame backproject(const RgbdImage& img, const CameraIntrinsics& k) {
  k.validate();
  if (img.width != k.width || img.height != k.height)
    throw DataError("backproject: image dimensions do not match intrinsics");

  PointCloudFrame out;
  out.xyz.reserve(img.depth.size());
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      std::size_t pix = static_cast<std::size_t>(v) * img.width + u;
      double z = img.depth[pix];
      if (!(z > 0)) continue;
      out.xyz.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
      out.rgb.emplace_back(img.rgb[3 * pix], img.rgb[3 * pix + 1], img.rgb[3 * pix + 2]);
      out.normal.emplace_back(0.0, 0.0, -1.0);
      out.pixel_index.push_back(static_cast<std::int64_t>(pix));
    }
  }
  if (out.xyz.empty()) throw DataError("backproject: no valid depth samples in the image");
  return out;
}

Eigen::Vector2d project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > 0)) throw DataError("project: point has non-positive depth");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

NormalEstimate estimate_normals(const PointCloudFrame& cloud, std::size_t k_neighbors) {
  if (k_neighbors < 3) throw DataError("estimate_normals: need k >= 3");
  if (cloud.size() < k_neighbors)
    throw DataError("estimate_normals: cloud smaller than neighborhood size");

  NormalEstimate result;
  result.cloud = cloud;
  KdTree3 tree(cloud.xyz);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto nbrs = tree.knn(cloud.xyz[i], k_neighbors);
    Vec3 mean = Vec3::Zero();
    for (std::size_t j : nbrs) mean += cloud.xyz[j];
    mean /= static_cast<double>(nbrs.size());

    Mat3 cov = Mat3::Zero();
    for (std::size_t j : nbrs) {
      Vec3 d = cloud.xyz[j] - mean;
      cov += d * d.transpose();
    }

    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const auto& vals = eig.eigenvalues();  // ascending
    // Rank < 2 (all points identical or collinear) leaves the normal
    // undetermined; flag and fall back.
    bool degenerate = !(vals[2] > 0) || vals[1] <= 1e-12 * vals[2];
    if (degenerate) {
      result.cloud.normal[i] = Vec3(0.0, 0.0, -1.0);
      result.degenerate_indices.push_back(i);
      continue;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(cloud.xyz[i]) > 0) n = -n;  // face the camera at the origin
    result.cloud.normal[i] = n;
  }
  return result;
}

SubsampleResult subsample(const PointCloudFrame& cloud, std::size_t target_n, std::uint64_t seed) {
  if (target_n < 1) throw DataError("subsample: target size must be >= 1");
  SubsampleResult result;
  if (cloud.size() <= target_n) {
    result.cloud = cloud;
    result.indices.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) result.indices[i] = i;
    return result;
  }
  Rng rng(seed);
  result.indices = rng.sample_without_replacement(cloud.size(), target_n);
  std::sort(result.indices.begin(), result.indices.end());
  result.cloud.xyz.reserve(target_n);
  for (std::size_t i : result.indices) {
    result.cloud.xyz.push_back(cloud.xyz[i]);
    result.cloud.rgb.push_back(cloud.rgb[i]);
    result.cloud.normal.push_back(cloud.normal[i]);
    result.cloud.pixel_index.push_back(cloud.pixel_index[i]);
  }
  return result;
}

}  // namespace affkp
