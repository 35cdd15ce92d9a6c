#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "affkp/scene.hpp"

namespace affkp {

// Scene directory layout, the dataset contract:
//   cloud.ply       binary little-endian, x y z red green blue nx ny nz
//   labels.bin      N uint8
//   instances.json  array of {id, affordance, point_indices, keypoints}
//   camera.json     intrinsics, camera_to_world, seed
//   objects.json    placed-object records for the simulator
// With emit_rgbd: depth.bin, rgb.bin, intrinsics.json, pixel_labels.bin.
void write_scene_dir(const std::filesystem::path& dir, const SceneGroundTruth& scene,
                     bool emit_rgbd = false);
SceneGroundTruth read_scene_dir(const std::filesystem::path& dir);

// Structural checks for a scene directory; throws DataError with the first
// violation found.
void validate_scene_dir(const std::filesystem::path& dir);

// Prediction dump: the instances schema plus a warnings array, with the
// per-seed channels needed for segmentation scoring. seed_indices empty
// means the predictions cover the whole scene cloud.
struct PredictionDump {
  std::vector<AffordanceInstance> instances;  // point_indices reference the scene cloud
  std::vector<std::string> warnings;
  std::vector<std::uint32_t> seed_indices;
  std::vector<std::uint8_t> labels;  // per seed point
  Eigen::MatrixXd scores;            // per seed point, n x 7
};

void write_prediction_dir(const std::filesystem::path& dir, const PredictionDump& dump);

// Reads either a prediction directory or a plain scene directory (ground
// truth as its own prediction); missing scores are synthesized one-hot from
// labels.bin.
PredictionDump read_prediction_dir(const std::filesystem::path& dir);

void write_labels_bin(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);
std::vector<std::uint8_t> read_labels_bin(const std::filesystem::path& path);

void write_instances_json(const std::filesystem::path& path,
                          const std::vector<AffordanceInstance>& instances,
                          const std::vector<std::string>* warnings = nullptr);
std::vector<AffordanceInstance> read_instances_json(const std::filesystem::path& path,
                                                    std::vector<std::string>* warnings = nullptr);

// Scene directories under a dataset root, sorted by name.
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root);

}  // namespace affkp
