#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "affkp/rng.hpp"
#include "affkp/tasks.hpp"

using namespace affkp;

namespace {

SynthConfig sim_synth() {
  SynthConfig cfg;
  cfg.density = 100000.0;  // fast unit-test scenes
  return cfg;
}

// Scale the spread of a keypoint pair about its midpoint.
void scale_pair(KeypointQuadruplet& q, int a, int b, double factor) {
  Vec3 mid = 0.5 * (q[a] + q[b]);
  q[a] = mid + factor * (q[a] - mid);
  q[b] = mid + factor * (q[b] - mid);
}

}  // namespace

TEST_CASE("oracle keypoints succeed on each task") {
  SimConfig cfg;
  for (int task = 1; task <= 4; ++task) {
    SynthConfig synth = task_scene_config(task, sim_synth());
    for (std::uint64_t seed : {100ull, 101ull, 102ull}) {
      SceneGroundTruth scene = sample_scene(synth, seed);
      TaskOutcome out = simulate_task(task, scene, scene.instances, cfg);
      CHECK(out.success);
      CHECK(out.failure == FailureClass::kNone);
    }
  }
}

TEST_CASE("missing required affordance is a planning failure") {
  SimConfig cfg;
  SceneGroundTruth scene = sample_scene(task_scene_config(1, sim_synth()), 7);
  std::vector<AffordanceInstance> no_contain;
  for (const auto& inst : scene.instances)
    if (inst.label != static_cast<std::uint8_t>(Affordance::kContain))
      no_contain.push_back(inst);
  TaskOutcome out = simulate_task(1, scene, no_contain, cfg);
  CHECK(!out.success);
  CHECK(out.failure == FailureClass::kPlanning);
}

TEST_CASE("doubling the wrap-grasp width flips task 4 to a grasp failure") {
  SimConfig cfg;
  SceneGroundTruth scene = sample_scene(task_scene_config(4, sim_synth()), 9);
  std::vector<AffordanceInstance> preds = scene.instances;
  for (auto& inst : preds)
    if (inst.label == static_cast<std::uint8_t>(Affordance::kWrapGrasp))
      scale_pair(inst.keypoints, 0, 1, 2.0);
  TaskOutcome out = simulate_task(4, scene, preds, cfg);
  CHECK(!out.success);
  CHECK(out.failure == FailureClass::kGrasp);
}

TEST_CASE("contain origin past the cavity boundary flips task 1 to execution failure") {
  SimConfig cfg;
  SynthConfig synth = task_scene_config(1, sim_synth());
  SceneGroundTruth scene = sample_scene(synth, 11);
  double rim_r = 0;
  for (const PlacedObject& o : scene.objects)
    if (o.category == "bowl") rim_r = o.params.at("radius");
  REQUIRE(rim_r > 0);

  Mat3 r_wc = scene.camera_to_world.topLeftCorner<3, 3>();
  Vec3 shift_cam = r_wc.transpose() * Vec3(rim_r + 0.02, 0, 0);  // world x in camera coords
  std::vector<AffordanceInstance> preds = scene.instances;
  for (auto& inst : preds)
    if (inst.label == static_cast<std::uint8_t>(Affordance::kContain))
      for (int j = 0; j < 4; ++j) inst.keypoints[j] += shift_cam;
  TaskOutcome out = simulate_task(1, scene, preds, cfg);
  CHECK(!out.success);
  CHECK(out.failure == FailureClass::kExecution);

  // Just inside the boundary stays a success.
  Vec3 small_shift = r_wc.transpose() * Vec3(rim_r - 0.01, 0, 0);
  preds = scene.instances;
  for (auto& inst : preds)
    if (inst.label == static_cast<std::uint8_t>(Affordance::kContain))
      for (int j = 0; j < 4; ++j) inst.keypoints[j] += small_shift;
  CHECK(simulate_task(1, scene, preds, cfg).success);
}

TEST_CASE("task 2 execution failure when the cut frame is displaced") {
  SimConfig cfg;
  SceneGroundTruth scene = sample_scene(task_scene_config(2, sim_synth()), 13);
  std::vector<AffordanceInstance> preds = scene.instances;
  Mat3 r_wc = scene.camera_to_world.topLeftCorner<3, 3>();
  Vec3 shift_cam = r_wc.transpose() * Vec3(0, 0, 0.03);  // world up, 3 cm
  for (auto& inst : preds)
    if (inst.label == static_cast<std::uint8_t>(Affordance::kCut))
      inst.keypoints[1] += shift_cam;  // move only the contact keypoint
  TaskOutcome out = simulate_task(2, scene, preds, cfg);
  CHECK(!out.success);
  CHECK(out.failure == FailureClass::kExecution);
}

TEST_CASE("campaigns satisfy the failure decomposition and are deterministic") {
  SimConfig cfg;
  SynthConfig synth = sim_synth();
  std::vector<TaskOutcome> outcomes;
  CampaignStats a = run_campaign(4, 10, 77, oracle_predictor(), synth, cfg, &outcomes);
  CampaignStats b = run_campaign(4, 10, 77, oracle_predictor(), synth, cfg);
  CHECK(a.trials == 10);
  CHECK(a.failures == a.planning + a.grasp + a.execution);
  CHECK(a.failures == b.failures);
  CHECK(outcomes.size() == 10);

  // A predictor that drops every wrap-grasp instance fails all trials in
  // planning, and the decomposition still holds.
  Predictor drop = [](const SceneGroundTruth& scene) {
    std::vector<AffordanceInstance> out;
    for (const auto& inst : scene.instances)
      if (inst.label != static_cast<std::uint8_t>(Affordance::kWrapGrasp))
        out.push_back(inst);
    return out;
  };
  CampaignStats c = run_campaign(4, 10, 77, drop, synth, cfg);
  CHECK(c.failures == 10);
  CHECK(c.planning == 10);
  CHECK(c.failures == c.planning + c.grasp + c.execution);
}

TEST_CASE("campaign csv and trial log are written") {
  SimConfig cfg;
  SynthConfig synth = sim_synth();
  std::vector<TaskOutcome> outcomes;
  CampaignStats stats = run_campaign(1, 3, 5, oracle_predictor(), synth, cfg, &outcomes);
  auto dir = std::filesystem::temp_directory_path() / "affkp_campaign";
  std::filesystem::create_directories(dir);
  write_campaign_csv(dir / "campaign.csv", {stats});
  write_trials_jsonl(dir / "trials.jsonl", outcomes);

  std::ifstream csv(dir / "campaign.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == "task,trials,failures,planning_failures,grasp_failures,execution_failures");
  CHECK(row.rfind("1,3,", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame overlay svg renders points and axes") {
  SceneGroundTruth scene = sample_scene(task_scene_config(4, sim_synth()), 19);
  std::vector<ExecutionFrame> frames;
  for (const auto& inst : scene.instances)
    frames.push_back(frame_from_quadruplet(inst.keypoints, inst.label));
  auto path = std::filesystem::temp_directory_path() / "affkp_overlay.svg";
  write_frame_overlay_svg(path, scene, frames);
  std::ifstream f(path);
  std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(content.find("<svg") != std::string::npos);
  CHECK(content.find("<line") != std::string::npos);
  CHECK(content.find("<circle") != std::string::npos);
  std::filesystem::remove(path);
}
