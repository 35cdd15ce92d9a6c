#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "affkp/dataset_io.hpp"
#include "affkp/pipeline.hpp"

using namespace affkp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  fs::path p = dir / "config.json";
  std::ofstream f(p);
  f << body;
  return p;
}

// Small fast pipeline config as a JSON string with substitutable paths.
std::string small_config_json(const fs::path& root, int scenes, int epochs) {
  return std::string("{\n") +
         "  \"seed\": 11,\n" +
         "  \"paths\": {\"dataset\": \"" + (root / "data").string() + "\", \"out\": \"" +
         (root / "out").string() + "\"},\n" +
         "  \"synth\": {\"recipe\": [\"knife\"], \"density\": 60000.0, \"scene_count\": " +
         std::to_string(scenes) + "},\n" +
         "  \"model\": {\"appearance_hidden\": 8, \"appearance_features\": 8, " +
         "\"geometry_hidden\": 8, \"geometry_features\": 8, \"fusion_hidden\": 12, " +
         "\"feature_dim\": 12, \"seg_hidden\": 8, \"offset_hidden\": 8, \"seed_points\": 256},\n" +
         "  \"loss\": {\"epochs\": " + std::to_string(epochs) + ", \"learning_rate\": 0.01}\n" +
         "}\n";
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == "manifest.json") continue;  // carries a timestamp
    std::ifstream f(entry.path(), std::ios::binary);
    out[fs::relative(entry.path(), root).string()] =
        std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace

TEST_CASE("config loading: defaults, overrides, unknown keys, bad values") {
  fs::path dir = fresh_dir("affkp_cfg");

  PipelineConfig defaults = load_pipeline_config(write_config(dir, "{}"));
  CHECK(defaults.seed == 7);
  CHECK(defaults.loss.lambda_weight == 100.0);
  CHECK(defaults.loss.gamma == 2.0);
  CHECK(defaults.loss.alpha[0] == 0.03);
  CHECK(defaults.fmeasure.sigma_sq == 5.0);
  CHECK(defaults.model.seed_points == 2048);

  PipelineConfig set = load_pipeline_config(
      write_config(dir, "{\"seed\": 3, \"loss\": {\"lambda\": 50.0}}"));
  CHECK(set.seed == 3);
  CHECK(set.loss.lambda_weight == 50.0);

  CHECK_THROWS_AS(load_pipeline_config(write_config(dir, "{\"sed\": 3}")), ConfigError);
  CHECK_THROWS_AS(load_pipeline_config(write_config(dir, "{\"loss\": {\"gama\": 1}}")),
                  ConfigError);
  CHECK_THROWS_AS(load_pipeline_config(write_config(dir, "{\"loss\": {\"gamma\": -1}}")),
                  ConfigError);
  CHECK_THROWS_AS(load_pipeline_config(write_config(dir, "{\"synth\": {\"scene_count\": 0}}")),
                  ConfigError);
  CHECK_THROWS_AS(load_pipeline_config(write_config(dir, "not json")), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("generate writes validating scenes and reruns byte-identically") {
  fs::path dir = fresh_dir("affkp_gen");
  PipelineConfig cfg = load_pipeline_config(write_config(dir, small_config_json(dir, 3, 1)));

  cmd_generate(cfg, "generate test");
  auto dirs = list_scene_dirs(dir / "out");
  CHECK(dirs.size() == 3);
  cmd_validate([&] {
    PipelineConfig v = cfg;
    v.paths.dataset = (dir / "out").string();
    return v;
  }());

  auto first = tree_contents(dir / "out");
  fs::remove_all(dir / "out");
  cmd_generate(cfg, "generate test");
  CHECK(tree_contents(dir / "out") == first);
  fs::remove_all(dir);
}

TEST_CASE("full chain: generate, train, predict, evaluate, interpret, simulate") {
  fs::path dir = fresh_dir("affkp_chain");
  PipelineConfig cfg = load_pipeline_config(write_config(dir, small_config_json(dir, 3, 2)));

  // generate into paths.dataset
  PipelineConfig gen = cfg;
  gen.paths.out = cfg.paths.dataset;
  cmd_generate(gen, "chain generate");

  // train
  PipelineConfig train_cfg = cfg;
  train_cfg.paths.out = (dir / "run").string();
  cmd_train(train_cfg, "chain train");
  CHECK(fs::exists(dir / "run" / "checkpoint.bin"));
  CHECK(fs::exists(dir / "run" / "model_config.json"));
  CHECK(fs::exists(dir / "run" / "loss_history.csv"));

  // predict
  PipelineConfig pred_cfg = cfg;
  pred_cfg.paths.checkpoint = (dir / "run" / "checkpoint.bin").string();
  pred_cfg.paths.out = (dir / "preds").string();
  cmd_predict(pred_cfg, "chain predict");
  auto pred_dirs = fs::directory_iterator(dir / "preds");
  int pred_count = 0;
  for (const auto& e : pred_dirs)
    if (e.is_directory()) ++pred_count;
  CHECK(pred_count == 3);

  // evaluate model predictions
  PipelineConfig eval_cfg = cfg;
  eval_cfg.paths.predictions = (dir / "preds").string();
  eval_cfg.paths.out = (dir / "eval").string();
  cmd_evaluate(eval_cfg, "chain evaluate");
  CHECK(fs::exists(dir / "eval" / "report.json"));
  CHECK(fs::exists(dir / "eval" / "report.csv"));

  // evaluate ground truth against itself: perfect metrics
  PipelineConfig self_cfg = cfg;
  self_cfg.paths.predictions = cfg.paths.dataset;
  self_cfg.paths.out = (dir / "self_eval").string();
  cmd_evaluate(self_cfg, "chain self evaluate");
  std::ifstream rep(dir / "self_eval" / "report.json");
  std::string report((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(report.find("\"weighted_f\": 1.0") != std::string::npos);
  CHECK(report.find("\"pck_0.3\": 100.0") != std::string::npos);

  // interpret ground truth into frames
  PipelineConfig interp_cfg = cfg;
  interp_cfg.paths.out = (dir / "frames").string();
  cmd_interpret(interp_cfg, "chain interpret");
  CHECK(fs::exists(dir / "frames" / "frames.json"));

  // simulate one oracle task
  PipelineConfig sim_cfg = cfg;
  sim_cfg.paths.out = (dir / "sim").string();
  sim_cfg.sim.task = 4;
  sim_cfg.sim.trials = 2;
  sim_cfg.synth.density = 60000.0;
  cmd_simulate(sim_cfg, "chain simulate");
  CHECK(fs::exists(dir / "sim" / "campaign.csv"));
  CHECK(fs::exists(dir / "sim" / "trials.jsonl"));

  fs::remove_all(dir);
}

TEST_CASE("predict ingests raw depth captures without ground truth") {
  fs::path dir = fresh_dir("affkp_raw_depth");
  PipelineConfig cfg = load_pipeline_config(write_config(dir, small_config_json(dir, 2, 1)));

  PipelineConfig gen = cfg;
  gen.paths.out = cfg.paths.dataset;
  gen.synth.emit_rgbd = true;
  cmd_generate(gen, "raw generate");
  PipelineConfig train_cfg = cfg;
  train_cfg.paths.out = (dir / "run").string();
  cmd_train(train_cfg, "raw train");

  // Strip a scene down to the raw capture files only.
  fs::path capture = dir / "captures" / "scene_raw0";
  fs::create_directories(capture);
  fs::path src = *list_scene_dirs(dir / "data").begin();
  for (const char* f : {"depth.bin", "intrinsics.json", "rgb.bin"})
    fs::copy_file(src / f, capture / f);

  PipelineConfig pred = cfg;
  pred.paths.dataset = (dir / "captures").string();
  pred.paths.checkpoint = (dir / "run" / "checkpoint.bin").string();
  pred.paths.out = (dir / "preds").string();
  cmd_predict(pred, "raw predict");
  CHECK(fs::exists(dir / "preds" / "pred_scene_raw0" / "instances.json"));
  CHECK(fs::exists(dir / "preds" / "pred_scene_raw0" / "scores.bin"));
  fs::remove_all(dir);
}

TEST_CASE("predict rejects a checkpoint trained under a different model shape") {
  fs::path dir = fresh_dir("affkp_shape_gate");
  PipelineConfig cfg = load_pipeline_config(write_config(dir, small_config_json(dir, 2, 1)));
  PipelineConfig gen = cfg;
  gen.paths.out = cfg.paths.dataset;
  cmd_generate(gen, "gate generate");
  PipelineConfig train_cfg = cfg;
  train_cfg.paths.out = (dir / "run").string();
  cmd_train(train_cfg, "gate train");

  PipelineConfig wrong = cfg;
  wrong.model.feature_dim = 16;  // differs from the checkpoint's model config
  wrong.paths.checkpoint = (dir / "run" / "checkpoint.bin").string();
  wrong.paths.out = (dir / "preds").string();
  bool threw = false;
  try {
    cmd_predict(wrong, "gate predict");
  } catch (const ModelError& e) {
    threw = true;
    CHECK(Error(e).exit_code() == 4);
  }
  CHECK(threw);
  fs::remove_all(dir);
}

TEST_CASE("json artifacts round trip through their readers") {
  fs::path dir = fresh_dir("affkp_roundtrip");
  std::vector<AffordanceInstance> instances(2);
  instances[0].id = 0;
  instances[0].label = 1;
  instances[0].points = {3, 5, 9};
  instances[0].keypoints[0] = Vec3(0.125, -0.25, 0.625096210971);
  instances[0].keypoints[1] = Vec3(0.1, 0.2, 0.3);
  instances[0].keypoints[2] = Vec3(-0.1, 0.0, 0.55);
  instances[0].keypoints[3] = Vec3(0.0, 0.11, 0.5);
  instances[1].id = 1;
  instances[1].label = 6;
  instances[1].points = {0, 1};
  instances[1].keypoints = instances[0].keypoints;

  // Bare-array form (ground truth).
  write_instances_json(dir / "gt.json", instances);
  auto back = read_instances_json(dir / "gt.json");
  REQUIRE(back.size() == 2);
  CHECK(back[0].points == instances[0].points);
  CHECK(back[0].keypoints[0] == instances[0].keypoints[0]);

  // Object form with warnings (predictions).
  std::vector<std::string> warnings = {"instance 1: mean shift hit the iteration cap"};
  write_instances_json(dir / "pred.json", instances, &warnings);
  std::vector<std::string> warnings_back;
  auto back2 = read_instances_json(dir / "pred.json", &warnings_back);
  CHECK(back2.size() == 2);
  CHECK(warnings_back == warnings);

  // Pipeline config serialization parses back to the same values.
  PipelineConfig cfg;
  cfg.seed = 123;
  cfg.loss.lambda_weight = 42.5;
  {
    std::ofstream f(dir / "cfg.json");
    f << pipeline_config_to_json(cfg);
  }
  PipelineConfig cfg_back = load_pipeline_config(dir / "cfg.json");
  CHECK(cfg_back.seed == 123);
  CHECK(cfg_back.loss.lambda_weight == 42.5);
  CHECK(hash_config(cfg_back) == hash_config(cfg));
  fs::remove_all(dir);
}
