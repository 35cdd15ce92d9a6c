#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affkp/geometry.hpp"
#include "affkp/labels.hpp"
#include "affkp/rng.hpp"

namespace affkp {

// Four ordered on-surface keypoints attached to one affordance region.
// Slot semantics: kp1->kp2 spans the part's principal axis with kp2 at the
// functional end; kp3,kp4 span the transverse contact pair. For w-grasp,
// kp1,kp2 give the vertical extent and kp3,kp4 the diametric pair.
struct KeypointQuadruplet {
  std::array<Vec3, 4> kp{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

  Vec3& operator[](int i) { return kp[static_cast<std::size_t>(i)]; }
  const Vec3& operator[](int i) const { return kp[static_cast<std::size_t>(i)]; }
  Vec3 centroid() const { return 0.25 * (kp[0] + kp[1] + kp[2] + kp[3]); }
};

struct AffordanceInstance {
  int id = 0;
  std::uint8_t label = 0;
  std::vector<std::int64_t> points;  // indices into the owning cloud
  KeypointQuadruplet keypoints;
  std::array<std::vector<Vec3>, 4> votes;  // filled by the voting stage, empty for GT
  bool converged = true;
};

// One parametric surface of an object, in the object frame.
struct SurfacePart {
  enum class Kind { kBox, kCylinder, kHemisphere, kSphere };

  std::uint8_t label = 0;  // 0 for prop parts
  Kind kind = Kind::kBox;
  Vec3 center = Vec3::Zero();
  Mat3 rot = Mat3::Identity();  // part frame -> object frame
  // box: half extents (a,b,c); cylinder: radius a, half height b;
  // hemisphere/sphere: radius a. Hemisphere shell is the lower half with its
  // rim in the part xy-plane (opening up).
  double a = 0, b = 0, c = 0;
  bool cap_bottom = false, cap_top = false;  // cylinder end disks
  KeypointQuadruplet keypoints;              // object frame, on the surface
};

struct ObjectTemplate {
  std::string category;
  std::vector<SurfacePart> parts;
  double footprint_radius = 0;   // horizontal clearance circle
  double footprint_offset = 0;   // circle center along the object x-axis
  double rest_z = 0;             // object-frame origin height when resting on the plane
  std::map<std::string, double> params;
  bool prop = false;  // task target without affordance labels
};

// Distance from an object-frame point to the part surface (meters).
double distance_to_surface(const SurfacePart& part, const Vec3& p_object);

// Draws sizes from the category's ranges; jitter in [0,1] scales the ranges
// around their midpoints. Throws ConfigError for unknown categories.
ObjectTemplate make_template(const std::string& category, Rng& rng, double size_jitter);

struct PlacedObject {
  std::string category;
  double x = 0, y = 0, z = 0, yaw = 0;
  std::map<std::string, double> params;
  bool prop = false;
};

struct SceneGroundTruth {
  PointCloudFrame cloud;  // camera frame
  std::vector<std::uint8_t> labels;
  std::vector<AffordanceInstance> instances;
  Eigen::Matrix4d camera_to_world = Eigen::Matrix4d::Identity();
  CameraIntrinsics intrinsics;
  std::uint64_t seed = 0;
  std::vector<PlacedObject> objects;
};

// Synthetic color assignment. kFlat gives each class its base color, kShaded
// modulates brightness along the part's principal axis, kPositional encodes
// the offset from the part center into the channels.
enum class TextureMode { kFlat, kShaded, kPositional };

struct SynthConfig {
  std::vector<std::string> categories = {"knife", "mug",    "bowl", "spoon",
                                         "hammer", "cup",   "tomato"};
  std::vector<std::string> recipe;  // exact category list; overrides the random pool
  int objects_min = 1;
  int objects_max = 3;
  double desk_x = 0.55, desk_y = 0.55;
  double density = 250000.0;  // surface samples per square meter (1 per 4 mm^2)
  double yaw_range_deg = 180.0;
  double size_jitter = 1.0;
  TextureMode texture = TextureMode::kFlat;
  double color_noise = 0.015;
  double placement_gap = 0.05;
  int placement_attempts = 400;
  CameraIntrinsics camera{640.0, 640.0, 319.5, 239.5, 640, 480};
  double camera_distance = 0.70;
  double camera_tilt_deg = 40.0;  // from vertical
  double camera_jitter = 0.0;
  int scene_count = 10;
  bool emit_rgbd = false;

  void validate() const;
};

// Deterministic per seed; throws DataError when placement cannot satisfy the
// config within the attempt budget.
SceneGroundTruth sample_scene(const SynthConfig& config, std::uint64_t seed);

struct RenderResult {
  RgbdImage image;
  std::vector<std::uint8_t> pixel_labels;  // H*W, 0 where no surface
  std::vector<std::int64_t> pixel_source;  // H*W, winning point index or -1
};

// Z-buffer point rasterization of the scene cloud.
RenderResult render_views(const SceneGroundTruth& scene, const CameraIntrinsics& k);

// Per-point offsets to the owning instance's quadruplet, as training targets.
// subset selects cloud indices; mask is 1 for points inside any region.
struct OffsetTargets {
  Eigen::MatrixXd offsets;  // n x 12, slot-major (j*3+axis)
  Eigen::MatrixXd mask;     // n x 4
};
OffsetTargets ground_truth_offsets(const SceneGroundTruth& scene,
                                   const std::vector<std::size_t>& subset);

// Instance id per point, -1 for background.
std::vector<int> instance_of_point(const SceneGroundTruth& scene);

}  // namespace affkp
