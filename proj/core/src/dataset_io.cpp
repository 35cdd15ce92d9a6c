#include "affkp/dataset_io.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "affkp/error.hpp"
#include "affkp/kdtree.hpp"
#include "affkp/ply_io.hpp"

namespace affkp {

namespace {

using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return j;
}

void dump_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw DataError("short write: " + path.string());
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void write_labels_bin(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(labels.data()),
          static_cast<std::streamsize>(labels.size()));
  if (!f) throw DataError("short write: " + path.string());
}

std::vector<std::uint8_t> read_labels_bin(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(labels.data()), size);
  if (!f) throw DataError("short read: " + path.string());
  return labels;
}

void write_instances_json(const std::filesystem::path& path,
                          const std::vector<AffordanceInstance>& instances,
                          const std::vector<std::string>* warnings) {
  json arr = json::array();
  for (const AffordanceInstance& inst : instances) {
    json kps = json::array();
    for (int j = 0; j < 4; ++j) kps.push_back(vec3_to_json(inst.keypoints[j]));
    arr.push_back({{"id", inst.id},
                   {"affordance", inst.label},
                   {"point_indices", inst.points},
                   {"keypoints", kps}});
  }
  if (warnings == nullptr) {
    dump_json(path, arr);
  } else {
    dump_json(path, json{{"instances", arr}, {"warnings", *warnings}});
  }
}

std::vector<AffordanceInstance> read_instances_json(const std::filesystem::path& path,
                                                    std::vector<std::string>* warnings) {
  json j = load_json(path);
  json arr;
  if (j.is_array()) {
    arr = j;
  } else if (j.is_object() && j.contains("instances")) {
    arr = j["instances"];
    if (warnings && j.contains("warnings"))
      for (const auto& w : j["warnings"]) warnings->push_back(w.get<std::string>());
  } else {
    throw DataError(path.string() + ": expected an instance array");
  }
  std::vector<AffordanceInstance> out;
  try {
    for (const auto& item : arr) {
      AffordanceInstance inst;
      inst.id = item.at("id").get<int>();
      inst.label = item.at("affordance").get<std::uint8_t>();
      inst.points = item.at("point_indices").get<std::vector<std::int64_t>>();
      const json& kps = item.at("keypoints");
      if (!kps.is_array() || kps.size() != 4)
        throw DataError("instance " + std::to_string(inst.id) + ": keypoints must be 4 x 3");
      for (int k = 0; k < 4; ++k) inst.keypoints[k] = vec3_from_json(kps[k]);
      out.push_back(std::move(inst));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

namespace {

void write_camera_json(const std::filesystem::path& path, const SceneGroundTruth& scene) {
  json m = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m.push_back(scene.camera_to_world(r, c));
  dump_json(path, json{{"intrinsics",
                        {{"fx", scene.intrinsics.fx},
                         {"fy", scene.intrinsics.fy},
                         {"cx", scene.intrinsics.cx},
                         {"cy", scene.intrinsics.cy},
                         {"width", scene.intrinsics.width},
                         {"height", scene.intrinsics.height}}},
                       {"camera_to_world", m},
                       {"seed", scene.seed}});
}

void read_camera_json(const std::filesystem::path& path, SceneGroundTruth& scene) {
  json j = load_json(path);
  try {
    const json& k = j.at("intrinsics");
    scene.intrinsics.fx = k.at("fx").get<double>();
    scene.intrinsics.fy = k.at("fy").get<double>();
    scene.intrinsics.cx = k.at("cx").get<double>();
    scene.intrinsics.cy = k.at("cy").get<double>();
    scene.intrinsics.width = k.at("width").get<int>();
    scene.intrinsics.height = k.at("height").get<int>();
    const json& m = j.at("camera_to_world");
    if (!m.is_array() || m.size() != 16) throw DataError("camera_to_world must hold 16 numbers");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        scene.camera_to_world(r, c) = m[static_cast<std::size_t>(4 * r + c)].get<double>();
    scene.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_objects_json(const std::filesystem::path& path,
                        const std::vector<PlacedObject>& objects) {
  json arr = json::array();
  for (const PlacedObject& o : objects) {
    arr.push_back({{"category", o.category},
                   {"x", o.x},
                   {"y", o.y},
                   {"z", o.z},
                   {"yaw", o.yaw},
                   {"prop", o.prop},
                   {"params", o.params}});
  }
  dump_json(path, arr);
}

std::vector<PlacedObject> read_objects_json(const std::filesystem::path& path) {
  json j = load_json(path);
  std::vector<PlacedObject> out;
  try {
    for (const auto& item : j) {
      PlacedObject o;
      o.category = item.at("category").get<std::string>();
      o.x = item.at("x").get<double>();
      o.y = item.at("y").get<double>();
      o.z = item.at("z").get<double>();
      o.yaw = item.at("yaw").get<double>();
      o.prop = item.at("prop").get<bool>();
      o.params = item.at("params").get<std::map<std::string, double>>();
      out.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

void write_scene_dir(const std::filesystem::path& dir, const SceneGroundTruth& scene,
                     bool emit_rgbd) {
  std::filesystem::create_directories(dir);
  write_ply(dir / "cloud.ply", scene.cloud);
  write_labels_bin(dir / "labels.bin", scene.labels);
  write_instances_json(dir / "instances.json", scene.instances);
  write_camera_json(dir / "camera.json", scene);
  write_objects_json(dir / "objects.json", scene.objects);
  if (emit_rgbd) {
    RenderResult render = render_views(scene, scene.intrinsics);
    write_depth_raw(dir / "depth.bin", dir / "intrinsics.json", render.image, scene.intrinsics);
    write_rgb_raw(dir / "rgb.bin", render.image);
    write_labels_bin(dir / "pixel_labels.bin", render.pixel_labels);
  }
}

SceneGroundTruth read_scene_dir(const std::filesystem::path& dir) {
  SceneGroundTruth scene;
  scene.cloud = read_ply(dir / "cloud.ply");
  scene.labels = read_labels_bin(dir / "labels.bin");
  if (scene.labels.size() != scene.cloud.size())
    throw DataError(dir.string() + ": labels.bin does not match the cloud size");
  scene.instances = read_instances_json(dir / "instances.json");
  read_camera_json(dir / "camera.json", scene);
  scene.objects = read_objects_json(dir / "objects.json");
  return scene;
}

void validate_scene_dir(const std::filesystem::path& dir) {
  SceneGroundTruth scene = read_scene_dir(dir);
  scene.cloud.validate();
  for (std::uint8_t l : scene.labels)
    if (l >= kNumClasses) throw DataError(dir.string() + ": label out of range");

  std::vector<KdTree3> trees;  // one per instance for the on-surface check
  for (const AffordanceInstance& inst : scene.instances) {
    if (inst.label < 1 || inst.label >= kNumClasses)
      throw DataError(dir.string() + ": instance " + std::to_string(inst.id) +
                      " has invalid affordance");
    if (inst.points.empty())
      throw DataError(dir.string() + ": instance " + std::to_string(inst.id) + " is empty");
    std::vector<Vec3> member_pts;
    member_pts.reserve(inst.points.size());
    for (std::int64_t idx : inst.points) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= scene.cloud.size())
        throw DataError(dir.string() + ": instance " + std::to_string(inst.id) +
                        " references a missing point");
      if (scene.labels[static_cast<std::size_t>(idx)] != inst.label)
        throw DataError(dir.string() + ": instance " + std::to_string(inst.id) +
                        " member carries a different label");
      member_pts.push_back(scene.cloud.xyz[static_cast<std::size_t>(idx)]);
    }
    KdTree3 tree(member_pts);
    for (int j = 0; j < 4; ++j) {
      if (tree.nearest_distance(inst.keypoints[j]) > 0.002)
        throw DataError(dir.string() + ": instance " + std::to_string(inst.id) + " keypoint " +
                        std::to_string(j + 1) + " is more than 2 mm off the surface");
    }
  }
}

void write_prediction_dir(const std::filesystem::path& dir, const PredictionDump& dump) {
  std::filesystem::create_directories(dir);
  write_instances_json(dir / "instances.json", dump.instances, &dump.warnings);
  write_labels_bin(dir / "labels.bin", dump.labels);
  if (!dump.seed_indices.empty()) {
    std::ofstream f(dir / "seeds.bin", std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + (dir / "seeds.bin").string());
    f.write(reinterpret_cast<const char*>(dump.seed_indices.data()),
            static_cast<std::streamsize>(dump.seed_indices.size() * sizeof(std::uint32_t)));
  }
  if (dump.scores.rows() > 0) {
    std::ofstream f(dir / "scores.bin", std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + (dir / "scores.bin").string());
    for (Eigen::Index i = 0; i < dump.scores.rows(); ++i)
      for (Eigen::Index c = 0; c < dump.scores.cols(); ++c) {
        float v = static_cast<float>(dump.scores(i, c));
        f.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    if (!f) throw DataError("short write: " + (dir / "scores.bin").string());
  }
}

PredictionDump read_prediction_dir(const std::filesystem::path& dir) {
  PredictionDump dump;
  dump.instances = read_instances_json(dir / "instances.json", &dump.warnings);
  dump.labels = read_labels_bin(dir / "labels.bin");

  auto seeds_path = dir / "seeds.bin";
  if (std::filesystem::exists(seeds_path)) {
    std::ifstream f(seeds_path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("cannot open: " + seeds_path.string());
    std::streamsize size = f.tellg();
    f.seekg(0);
    if (size % 4 != 0) throw DataError(seeds_path.string() + ": truncated");
    dump.seed_indices.resize(static_cast<std::size_t>(size / 4));
    f.read(reinterpret_cast<char*>(dump.seed_indices.data()), size);
  }

  auto scores_path = dir / "scores.bin";
  std::size_t n = dump.labels.size();
  if (std::filesystem::exists(scores_path)) {
    std::ifstream f(scores_path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("cannot open: " + scores_path.string());
    std::streamsize size = f.tellg();
    f.seekg(0);
    if (static_cast<std::size_t>(size) != n * kNumClasses * sizeof(float))
      throw DataError(scores_path.string() + ": size does not match labels.bin");
    dump.scores.resize(static_cast<Eigen::Index>(n), kNumClasses);
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < kNumClasses; ++c) {
        float v;
        f.read(reinterpret_cast<char*>(&v), sizeof(float));
        dump.scores(static_cast<Eigen::Index>(i), c) = v;
      }
  } else {
    // Ground truth used as its own prediction: one-hot scores from labels.
    dump.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), kNumClasses);
    for (std::size_t i = 0; i < n; ++i) {
      if (dump.labels[i] >= kNumClasses)
        throw DataError(dir.string() + ": label out of range in labels.bin");
      dump.scores(static_cast<Eigen::Index>(i), dump.labels[i]) = 1.0;
    }
  }
  return dump;
}

std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0)
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace affkp
