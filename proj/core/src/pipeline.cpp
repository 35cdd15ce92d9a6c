#include "affkp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "affkp/dataset_io.hpp"
#include "affkp/error.hpp"
#include "affkp/frames.hpp"
#include "affkp/ply_io.hpp"
#include "affkp/rng.hpp"
#include "affkp/train.hpp"
#include "affkp/version.hpp"

namespace affkp {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

int log_level() {
  const char* env = std::getenv("AFFKP_LOG");
  if (!env) return 1;  // info
  std::string v = env;
  if (v == "debug") return 0;
  if (v == "info") return 1;
  if (v == "warn") return 2;
  return 3;
}

void log_info(const std::string& msg) {
  if (log_level() <= 1) std::fprintf(stderr, "[affkp] %s\n", msg.c_str());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

void parse_paths(const json& j, PathsConfig& p) {
  check_keys(j, "paths", {"dataset", "out", "checkpoint", "predictions"});
  read_field(j, "dataset", p.dataset);
  read_field(j, "out", p.out);
  read_field(j, "checkpoint", p.checkpoint);
  read_field(j, "predictions", p.predictions);
}

void parse_synth(const json& j, SynthConfig& s) {
  check_keys(j, "synth",
             {"categories", "recipe", "objects_min", "objects_max", "desk_x", "desk_y",
              "density", "yaw_range_deg", "size_jitter", "texture", "color_noise",
              "placement_gap", "placement_attempts", "camera", "camera_distance",
              "camera_tilt_deg", "camera_jitter", "scene_count", "emit_rgbd"});
  read_field(j, "categories", s.categories);
  read_field(j, "recipe", s.recipe);
  read_field(j, "objects_min", s.objects_min);
  read_field(j, "objects_max", s.objects_max);
  read_field(j, "desk_x", s.desk_x);
  read_field(j, "desk_y", s.desk_y);
  read_field(j, "density", s.density);
  read_field(j, "yaw_range_deg", s.yaw_range_deg);
  read_field(j, "size_jitter", s.size_jitter);
  if (j.contains("texture")) {
    std::string t = j.at("texture").get<std::string>();
    if (t == "flat")
      s.texture = TextureMode::kFlat;
    else if (t == "shaded")
      s.texture = TextureMode::kShaded;
    else if (t == "positional")
      s.texture = TextureMode::kPositional;
    else
      throw ConfigError("synth.texture must be flat, shaded or positional");
  }
  read_field(j, "color_noise", s.color_noise);
  read_field(j, "placement_gap", s.placement_gap);
  read_field(j, "placement_attempts", s.placement_attempts);
  if (j.contains("camera")) {
    const json& c = j.at("camera");
    check_keys(c, "synth.camera", {"fx", "fy", "cx", "cy", "width", "height"});
    read_field(c, "fx", s.camera.fx);
    read_field(c, "fy", s.camera.fy);
    read_field(c, "cx", s.camera.cx);
    read_field(c, "cy", s.camera.cy);
    read_field(c, "width", s.camera.width);
    read_field(c, "height", s.camera.height);
  }
  read_field(j, "camera_distance", s.camera_distance);
  read_field(j, "camera_tilt_deg", s.camera_tilt_deg);
  read_field(j, "camera_jitter", s.camera_jitter);
  read_field(j, "scene_count", s.scene_count);
  read_field(j, "emit_rgbd", s.emit_rgbd);
}

void parse_model(const json& j, ModelConfig& m) {
  check_keys(j, "model",
             {"appearance_hidden", "appearance_features", "geometry_hidden",
              "geometry_features", "fusion_hidden", "feature_dim", "seg_hidden",
              "offset_hidden", "seed_points"});
  read_field(j, "appearance_hidden", m.appearance_hidden);
  read_field(j, "appearance_features", m.appearance_features);
  read_field(j, "geometry_hidden", m.geometry_hidden);
  read_field(j, "geometry_features", m.geometry_features);
  read_field(j, "fusion_hidden", m.fusion_hidden);
  read_field(j, "feature_dim", m.feature_dim);
  read_field(j, "seg_hidden", m.seg_hidden);
  read_field(j, "offset_hidden", m.offset_hidden);
  read_field(j, "seed_points", m.seed_points);
}

void parse_loss(const json& j, LossConfig& l) {
  check_keys(j, "loss",
             {"gamma", "alpha", "lambda", "learning_rate", "momentum", "epochs",
              "checkpoint_every", "offset_norm"});
  read_field(j, "gamma", l.gamma);
  if (j.contains("alpha")) {
    auto v = j.at("alpha").get<std::vector<double>>();
    if (v.size() != kNumClasses) throw ConfigError("loss.alpha must list 7 weights");
    for (int c = 0; c < kNumClasses; ++c) l.alpha[static_cast<std::size_t>(c)] = v[static_cast<std::size_t>(c)];
  }
  read_field(j, "lambda", l.lambda_weight);
  read_field(j, "learning_rate", l.learning_rate);
  read_field(j, "momentum", l.momentum);
  read_field(j, "epochs", l.epochs);
  read_field(j, "checkpoint_every", l.checkpoint_every);
  if (j.contains("offset_norm")) {
    std::string v = j.at("offset_norm").get<std::string>();
    if (v == "total")
      l.offset_norm = OffsetNorm::kTotalPoints;
    else if (v == "in_region")
      l.offset_norm = OffsetNorm::kInRegionPoints;
    else
      throw ConfigError("loss.offset_norm must be total or in_region");
  }
}

void parse_cluster(const json& j, ClusterConfig& c) {
  check_keys(j, "cluster",
             {"separation", "bandwidth", "kernel", "tolerance", "max_iterations",
              "merge_radius", "min_component", "vote_start_limit"});
  read_field(j, "separation", c.separation);
  read_field(j, "bandwidth", c.bandwidth);
  if (j.contains("kernel")) {
    std::string v = j.at("kernel").get<std::string>();
    if (v == "flat")
      c.kernel = Kernel::kFlat;
    else if (v == "gaussian")
      c.kernel = Kernel::kGaussian;
    else
      throw ConfigError("cluster.kernel must be flat or gaussian");
  }
  read_field(j, "tolerance", c.tolerance);
  read_field(j, "max_iterations", c.max_iterations);
  read_field(j, "merge_radius", c.merge_radius);
  read_field(j, "min_component", c.min_component);
  read_field(j, "vote_start_limit", c.vote_start_limit);
}

void parse_fmeasure(const json& j, FMeasureConfig& f) {
  check_keys(j, "fmeasure", {"beta", "sigma_sq", "alpha_w"});
  read_field(j, "beta", f.beta);
  read_field(j, "sigma_sq", f.sigma_sq);
  read_field(j, "alpha_w", f.alpha_w);
}

void parse_eval(const json& j, EvalConfig& e) {
  check_keys(j, "eval", {"pck_threshold"});
  read_field(j, "pck_threshold", e.pck_threshold);
}

void parse_sim(const json& j, SimConfig& s) {
  check_keys(j, "sim",
             {"contact_tolerance", "cut_angle_tol_deg", "rim_clearance", "width_frac_tol",
              "gripper_stroke", "scoop_tilt_deg", "scoop_tip_depth", "trials", "task",
              "oracle", "emit_svg"});
  read_field(j, "contact_tolerance", s.contact_tolerance);
  read_field(j, "cut_angle_tol_deg", s.cut_angle_tol_deg);
  read_field(j, "rim_clearance", s.rim_clearance);
  read_field(j, "width_frac_tol", s.width_frac_tol);
  read_field(j, "gripper_stroke", s.gripper_stroke);
  read_field(j, "scoop_tilt_deg", s.scoop_tilt_deg);
  read_field(j, "scoop_tip_depth", s.scoop_tip_depth);
  read_field(j, "trials", s.trials);
  read_field(j, "task", s.task);
  read_field(j, "oracle", s.oracle);
  read_field(j, "emit_svg", s.emit_svg);
}

std::string scene_dir_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%08llu", static_cast<unsigned long long>(seed));
  return buf;
}

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  synth.validate();
  model.validate();
  loss.validate();
  cluster.validate();
  fmeasure.validate();
  sim.validate();
  if (!(eval.pck_threshold > 0)) throw ConfigError("eval.pck_threshold must be positive");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  check_keys(j, "<root>",
             {"seed", "paths", "synth", "model", "loss", "cluster", "fmeasure", "eval", "sim"});
  PipelineConfig cfg;
  read_field(j, "seed", cfg.seed);
  if (j.contains("paths")) parse_paths(j.at("paths"), cfg.paths);
  if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("loss")) parse_loss(j.at("loss"), cfg.loss);
  if (j.contains("cluster")) parse_cluster(j.at("cluster"), cfg.cluster);
  if (j.contains("fmeasure")) parse_fmeasure(j.at("fmeasure"), cfg.fmeasure);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  if (j.contains("sim")) parse_sim(j.at("sim"), cfg.sim);
  cfg.validate();
  return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  const char* texture = cfg.synth.texture == TextureMode::kFlat
                            ? "flat"
                            : (cfg.synth.texture == TextureMode::kShaded ? "shaded"
                                                                         : "positional");
  json j = {
      {"seed", cfg.seed},
      {"paths",
       {{"dataset", cfg.paths.dataset},
        {"out", cfg.paths.out},
        {"checkpoint", cfg.paths.checkpoint},
        {"predictions", cfg.paths.predictions}}},
      {"synth",
       {{"categories", cfg.synth.categories},
        {"recipe", cfg.synth.recipe},
        {"objects_min", cfg.synth.objects_min},
        {"objects_max", cfg.synth.objects_max},
        {"desk_x", cfg.synth.desk_x},
        {"desk_y", cfg.synth.desk_y},
        {"density", cfg.synth.density},
        {"yaw_range_deg", cfg.synth.yaw_range_deg},
        {"size_jitter", cfg.synth.size_jitter},
        {"texture", texture},
        {"color_noise", cfg.synth.color_noise},
        {"placement_gap", cfg.synth.placement_gap},
        {"placement_attempts", cfg.synth.placement_attempts},
        {"camera",
         {{"fx", cfg.synth.camera.fx},
          {"fy", cfg.synth.camera.fy},
          {"cx", cfg.synth.camera.cx},
          {"cy", cfg.synth.camera.cy},
          {"width", cfg.synth.camera.width},
          {"height", cfg.synth.camera.height}}},
        {"camera_distance", cfg.synth.camera_distance},
        {"camera_tilt_deg", cfg.synth.camera_tilt_deg},
        {"camera_jitter", cfg.synth.camera_jitter},
        {"scene_count", cfg.synth.scene_count},
        {"emit_rgbd", cfg.synth.emit_rgbd}}},
      {"model",
       {{"appearance_hidden", cfg.model.appearance_hidden},
        {"appearance_features", cfg.model.appearance_features},
        {"geometry_hidden", cfg.model.geometry_hidden},
        {"geometry_features", cfg.model.geometry_features},
        {"fusion_hidden", cfg.model.fusion_hidden},
        {"feature_dim", cfg.model.feature_dim},
        {"seg_hidden", cfg.model.seg_hidden},
        {"offset_hidden", cfg.model.offset_hidden},
        {"seed_points", cfg.model.seed_points}}},
      {"loss",
       {{"gamma", cfg.loss.gamma},
        {"alpha", cfg.loss.alpha},
        {"lambda", cfg.loss.lambda_weight},
        {"learning_rate", cfg.loss.learning_rate},
        {"momentum", cfg.loss.momentum},
        {"epochs", cfg.loss.epochs},
        {"checkpoint_every", cfg.loss.checkpoint_every},
        {"offset_norm",
         cfg.loss.offset_norm == OffsetNorm::kTotalPoints ? "total" : "in_region"}}},
      {"cluster",
       {{"separation", cfg.cluster.separation},
        {"bandwidth", cfg.cluster.bandwidth},
        {"kernel", cfg.cluster.kernel == Kernel::kFlat ? "flat" : "gaussian"},
        {"tolerance", cfg.cluster.tolerance},
        {"max_iterations", cfg.cluster.max_iterations},
        {"merge_radius", cfg.cluster.merge_radius},
        {"min_component", cfg.cluster.min_component},
        {"vote_start_limit", cfg.cluster.vote_start_limit}}},
      {"fmeasure",
       {{"beta", cfg.fmeasure.beta},
        {"sigma_sq", cfg.fmeasure.sigma_sq},
        {"alpha_w", cfg.fmeasure.alpha_w}}},
      {"eval", {{"pck_threshold", cfg.eval.pck_threshold}}},
      {"sim",
       {{"contact_tolerance", cfg.sim.contact_tolerance},
        {"cut_angle_tol_deg", cfg.sim.cut_angle_tol_deg},
        {"rim_clearance", cfg.sim.rim_clearance},
        {"width_frac_tol", cfg.sim.width_frac_tol},
        {"gripper_stroke", cfg.sim.gripper_stroke},
        {"scoop_tilt_deg", cfg.sim.scoop_tilt_deg},
        {"scoop_tip_depth", cfg.sim.scoop_tip_depth},
        {"trials", cfg.sim.trials},
        {"task", cfg.sim.task},
        {"oracle", cfg.sim.oracle},
        {"emit_svg", cfg.sim.emit_svg}}}};
  return j.dump(2);
}

std::string fnv1a_hex(const void* data, std::size_t size) {
  const unsigned char* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_config(const PipelineConfig& cfg) {
  std::string s = pipeline_config_to_json(cfg);
  return fnv1a_hex(s.data(), s.size());
}

std::string hash_tree(const fs::path& root) {
  if (root.empty() || !fs::exists(root)) return fnv1a_hex("", 0);
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  }
  std::string acc;
  for (const fs::path& p : files) {
    std::ifstream f(p, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    acc += fs::is_regular_file(root) ? p.filename().string() : fs::relative(p, root).string();
    acc += ':';
    acc += fnv1a_hex(content.data(), content.size());
    acc += '\n';
  }
  return fnv1a_hex(acc.data(), acc.size());
}

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
  json j = {{"tool_version", manifest.tool_version},
            {"config_hash", manifest.config_hash},
            {"input_hash", manifest.input_hash},
            {"command", manifest.command},
            {"timestamp", manifest.timestamp}};
  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot open for writing: " + (dir / "manifest.json").string());
  f << j.dump(2) << "\n";
}

namespace {

RunManifest make_manifest(const PipelineConfig& cfg, const std::string& command,
                          const fs::path& input) {
  RunManifest m;
  m.tool_version = kToolVersion;
  m.config_hash = hash_config(cfg);
  m.input_hash = hash_tree(input);
  m.command = command;
  m.timestamp = timestamp_utc();
  return m;
}

fs::path require_out(const PipelineConfig& cfg) {
  if (cfg.paths.out.empty()) throw ConfigError("paths.out is required for this command");
  return cfg.paths.out;
}

fs::path require_dataset(const PipelineConfig& cfg) {
  if (cfg.paths.dataset.empty()) throw ConfigError("paths.dataset is required for this command");
  if (!fs::is_directory(cfg.paths.dataset))
    throw DataError("dataset directory does not exist: " + cfg.paths.dataset);
  return cfg.paths.dataset;
}

}  // namespace

void cmd_generate(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path out = require_out(cfg);
  ensure_dir(out);
  for (int i = 0; i < cfg.synth.scene_count; ++i) {
    std::uint64_t scene_seed = cfg.seed + static_cast<std::uint64_t>(i);
    SceneGroundTruth scene = sample_scene(cfg.synth, scene_seed);
    write_scene_dir(out / scene_dir_name(scene_seed), scene, cfg.synth.emit_rgbd);
  }
  write_manifest(out, make_manifest(cfg, command_line, {}));
  log_info("generated " + std::to_string(cfg.synth.scene_count) + " scenes in " + out.string());
}

void cmd_train(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path dataset = require_dataset(cfg);
  fs::path out = require_out(cfg);
  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw DataError("no scene directories under " + dataset.string());
  ensure_dir(out);

  std::vector<TrainSample> samples;
  samples.reserve(dirs.size());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    SceneGroundTruth scene = read_scene_dir(dirs[i]);
    samples.push_back(
        make_train_sample(scene, cfg.model.seed_points, mix_seed(cfg.seed, 0xD5ull + i)));
  }

  EpochCallback on_epoch = [&](int epoch, const ModelParams& params, const LossReport&) {
    if ((epoch + 1) % cfg.loss.checkpoint_every != 0) return;
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.bin", epoch + 1);
    save_checkpoint(out / name, params);
  };
  TrainResult result = train_samples(samples, cfg.model, cfg.loss, cfg.seed, on_epoch);

  save_checkpoint(out / "checkpoint.bin", result.params);
  save_model_config(out / "model_config.json", cfg.model);
  write_loss_history(out / "loss_history.csv", result.history);
  {
    std::ofstream f(out / "config.json");
    f << pipeline_config_to_json(cfg) << "\n";
  }
  write_manifest(out, make_manifest(cfg, command_line, dataset));
  if (result.diverged)
    log_info("training diverged after " + std::to_string(result.completed_epochs) +
             " epochs; kept the last good checkpoint");
  else
    log_info("trained " + std::to_string(result.completed_epochs) + " epochs");
}

PredictionDump predict_scene(const SceneGroundTruth& scene, const ModelParams& params,
                             const ClusterConfig& cluster, std::uint64_t subsample_seed) {
  SubsampleResult sub =
      subsample(scene.cloud, static_cast<std::size_t>(params.config.seed_points), subsample_seed);
  ForwardResult fwd = forward(sub.cloud, params);

  PredictionDump dump;
  dump.labels.resize(sub.cloud.size());
  for (std::size_t i = 0; i < sub.cloud.size(); ++i) {
    Eigen::Index arg = 0;
    fwd.seg_scores.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    dump.labels[i] = static_cast<std::uint8_t>(arg);
  }
  dump.scores = fwd.seg_scores;

  std::vector<AffordanceInstance> instances =
      extract_quadruplets(sub.cloud, dump.labels, fwd.offsets, cluster);
  for (AffordanceInstance& inst : instances) {
    for (std::int64_t& idx : inst.points)
      idx = static_cast<std::int64_t>(sub.indices[static_cast<std::size_t>(idx)]);
    if (!inst.converged)
      dump.warnings.push_back("instance " + std::to_string(inst.id) +
                              ": mean shift hit the iteration cap");
  }
  dump.instances = std::move(instances);
  dump.seed_indices.reserve(sub.indices.size());
  for (std::size_t idx : sub.indices)
    dump.seed_indices.push_back(static_cast<std::uint32_t>(idx));
  return dump;
}

namespace {

ModelParams load_params_checked(const PipelineConfig& cfg) {
  if (cfg.paths.checkpoint.empty())
    throw ConfigError("paths.checkpoint is required for this command");
  fs::path ckpt = cfg.paths.checkpoint;
  if (!fs::exists(ckpt)) throw ModelError("checkpoint not found: " + ckpt.string());
  ModelParams params = load_checkpoint(ckpt);
  params.config = load_model_config(ckpt.parent_path() / "model_config.json");
  params.validate();
  if (!(params.config == cfg.model))
    throw ModelError(
        "checkpoint model configuration does not match the pipeline configuration");
  return params;
}

}  // namespace

namespace {

// Inference input: a full scene directory, or a raw capture holding only
// depth.bin + intrinsics.json (+ rgb.bin). Raw captures are backprojected
// and get estimated normals.
SceneGroundTruth load_inference_scene(const fs::path& dir) {
  if (fs::exists(dir / "cloud.ply")) return read_scene_dir(dir);
  if (!fs::exists(dir / "depth.bin") || !fs::exists(dir / "intrinsics.json"))
    throw DataError(dir.string() + ": neither cloud.ply nor depth.bin + intrinsics.json found");
  SceneGroundTruth scene;
  scene.intrinsics = read_intrinsics_sidecar(dir / "intrinsics.json");
  RgbdImage img = read_depth_raw(dir / "depth.bin", scene.intrinsics);
  if (fs::exists(dir / "rgb.bin")) read_rgb_raw(dir / "rgb.bin", img);
  PointCloudFrame cloud = backproject(img, scene.intrinsics);
  scene.cloud = estimate_normals(cloud, 10).cloud;
  scene.labels.assign(scene.cloud.size(), 0);
  std::string name = dir.filename().string();
  scene.seed = std::strtoull(fnv1a_hex(name.data(), name.size()).c_str(), nullptr, 16);
  return scene;
}

}  // namespace

void cmd_predict(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path dataset = require_dataset(cfg);
  fs::path out = require_out(cfg);
  ModelParams params = load_params_checked(cfg);
  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw DataError("no scene directories under " + dataset.string());
  ensure_dir(out);
  for (const fs::path& dir : dirs) {
    SceneGroundTruth scene = load_inference_scene(dir);
    PredictionDump dump =
        predict_scene(scene, params, cfg.cluster, mix_seed(cfg.seed, scene.seed));
    write_prediction_dir(out / ("pred_" + dir.filename().string()), dump);
  }
  write_manifest(out, make_manifest(cfg, command_line, dataset));
  log_info("predicted " + std::to_string(dirs.size()) + " scenes into " + out.string());
}

void cmd_evaluate(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path dataset = require_dataset(cfg);
  fs::path out = require_out(cfg);
  if (cfg.paths.predictions.empty())
    throw ConfigError("paths.predictions is required for this command");
  fs::path predictions = cfg.paths.predictions;
  if (!fs::is_directory(predictions))
    throw DataError("predictions directory does not exist: " + predictions.string());

  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw DataError("no scene directories under " + dataset.string());

  std::vector<SceneEvaluation> evals;
  for (const fs::path& dir : dirs) {
    fs::path pred_dir = predictions / ("pred_" + dir.filename().string());
    if (!fs::is_directory(pred_dir)) {
      // Ground truth offered as its own prediction.
      if (fs::equivalent(predictions, dataset))
        pred_dir = dir;
      else
        throw DataError("missing prediction directory: " + pred_dir.string());
    }
    SceneGroundTruth scene = read_scene_dir(dir);
    PredictionDump dump = read_prediction_dir(pred_dir);

    SceneEvaluation ev;
    if (!dump.seed_indices.empty()) {
      if (dump.labels.size() != dump.seed_indices.size())
        throw DataError(pred_dir.string() + ": labels do not match the seed subset");
      ev.xyz.reserve(dump.seed_indices.size());
      ev.gt_labels.reserve(dump.seed_indices.size());
      for (std::uint32_t idx : dump.seed_indices) {
        if (idx >= scene.cloud.size())
          throw DataError(pred_dir.string() + ": seed index outside the scene cloud");
        ev.xyz.push_back(scene.cloud.xyz[idx]);
        ev.gt_labels.push_back(scene.labels[idx]);
      }
    } else {
      if (dump.labels.size() != scene.cloud.size())
        throw DataError(pred_dir.string() + ": labels do not match the scene cloud");
      ev.xyz = scene.cloud.xyz;
      ev.gt_labels = scene.labels;
    }
    ev.scores = std::move(dump.scores);
    ev.pred_instances = std::move(dump.instances);
    ev.gt_instances = std::move(scene.instances);
    evals.push_back(std::move(ev));
  }

  MetricsReport report = evaluate_scenes(evals, cfg.fmeasure, cfg.eval.pck_threshold);
  ensure_dir(out);
  write_metrics_json(out / "report.json", report);
  write_metrics_csv(out / "report.csv", report);
  write_manifest(out, make_manifest(cfg, command_line, dataset));
  log_info("evaluation report written to " + out.string());
}

void cmd_interpret(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path out = require_out(cfg);
  bool from_predictions = !cfg.paths.predictions.empty();
  fs::path dataset = require_dataset(cfg);
  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw DataError("no scene directories under " + dataset.string());
  ensure_dir(out);

  json frames_json = json::array();
  for (const fs::path& dir : dirs) {
    std::vector<AffordanceInstance> instances;
    if (from_predictions) {
      fs::path pred_dir = fs::path(cfg.paths.predictions) / ("pred_" + dir.filename().string());
      if (!fs::is_directory(pred_dir))
        throw DataError("missing prediction directory: " + pred_dir.string());
      instances = read_prediction_dir(pred_dir).instances;
    } else {
      instances = read_instances_json(dir / "instances.json");
    }

    std::vector<ExecutionFrame> frames;
    for (const AffordanceInstance& inst : instances) {
      json row = {{"scene", dir.filename().string()},
                  {"instance", inst.id},
                  {"affordance", inst.label}};
      try {
        ExecutionFrame f = frame_from_quadruplet(inst.keypoints, inst.label);
        row["origin"] = {f.origin.x(), f.origin.y(), f.origin.z()};
        row["x_axis"] = {f.x_axis.x(), f.x_axis.y(), f.x_axis.z()};
        row["y_axis"] = {f.y_axis.x(), f.y_axis.y(), f.y_axis.z()};
        row["z_axis"] = {f.z_axis.x(), f.z_axis.y(), f.z_axis.z()};
        frames.push_back(f);
      } catch (const DataError& e) {
        row["error"] = e.what();
      }
      frames_json.push_back(row);
    }

    if (cfg.sim.emit_svg) {
      SceneGroundTruth scene = read_scene_dir(dir);
      write_frame_overlay_svg(out / ("overlay_" + dir.filename().string() + ".svg"), scene,
                              frames);
    }
  }

  std::ofstream f(out / "frames.json");
  if (!f) throw DataError("cannot open for writing: " + (out / "frames.json").string());
  f << frames_json.dump(2) << "\n";
  write_manifest(out, make_manifest(cfg, command_line,
                                    from_predictions ? fs::path(cfg.paths.predictions) : dataset));
  log_info("frames written to " + out.string());
}

Predictor model_predictor(ModelParams params, ClusterConfig cluster, std::uint64_t seed) {
  return [params = std::move(params), cluster, seed](const SceneGroundTruth& scene) {
    PredictionDump dump = predict_scene(scene, params, cluster, mix_seed(seed, scene.seed));
    // Campaign consumers read keypoints and labels only; indices already
    // reference the scene cloud.
    return dump.instances;
  };
}

void cmd_simulate(const PipelineConfig& cfg, const std::string& command_line) {
  fs::path out = require_out(cfg);
  ensure_dir(out);

  Predictor predictor;
  if (cfg.sim.oracle) {
    predictor = oracle_predictor();
  } else {
    ModelParams params = load_params_checked(cfg);
    predictor = model_predictor(std::move(params), cfg.cluster, cfg.seed);
  }

  std::vector<int> tasks;
  if (cfg.sim.task == 0)
    tasks = {1, 2, 3, 4};
  else
    tasks = {cfg.sim.task};

  std::vector<CampaignStats> rows;
  std::vector<TaskOutcome> outcomes;
  for (int task : tasks) {
    std::uint64_t base_seed = mix_seed(cfg.seed, 0x7A5Cull + static_cast<std::uint64_t>(task));
    rows.push_back(
        run_campaign(task, cfg.sim.trials, base_seed, predictor, cfg.synth, cfg.sim, &outcomes));
    if (cfg.sim.emit_svg) {
      // Overlay of the first trial's predicted frames on its projected view.
      SceneGroundTruth scene =
          sample_scene(task_scene_config(task, cfg.synth), mix_seed(base_seed, 0xCA3ull));
      std::vector<ExecutionFrame> frames;
      for (const AffordanceInstance& inst : predictor(scene)) {
        try {
          frames.push_back(frame_from_quadruplet(inst.keypoints, inst.label));
        } catch (const DataError&) {
          // degenerate prediction, nothing to draw
        }
      }
      write_frame_overlay_svg(out / ("overlay_task" + std::to_string(task) + ".svg"), scene,
                              frames);
    }
  }

  write_campaign_csv(out / "campaign.csv", rows);
  write_trials_jsonl(out / "trials.jsonl", outcomes);
  write_manifest(out, make_manifest(cfg, command_line, {}));
  log_info("campaign statistics written to " + out.string());
}

void cmd_validate(const PipelineConfig& cfg) {
  fs::path dataset = require_dataset(cfg);
  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw DataError("no scene directories under " + dataset.string());
  for (const fs::path& dir : dirs) validate_scene_dir(dir);
  if (!cfg.paths.predictions.empty()) {
    for (const auto& entry : fs::directory_iterator(cfg.paths.predictions))
      if (entry.is_directory() && entry.path().filename().string().rfind("pred_", 0) == 0)
        read_prediction_dir(entry.path());
  }
  log_info("validated " + std::to_string(dirs.size()) + " scenes");
}

}  // namespace affkp
