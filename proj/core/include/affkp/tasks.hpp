#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affkp/frames.hpp"
#include "affkp/scene.hpp"

namespace affkp {

struct SimConfig {
  double contact_tolerance = 0.005;  // cut contact distance gate (m)
  double cut_angle_tol_deg = 20.0;   // deviation from the radial cut plane
  double rim_clearance = 0.003;      // scoop clearance inside the bowl rim (m)
  double width_frac_tol = 0.15;      // grasp width vs true dimension
  double gripper_stroke = 0.08;      // m
  double scoop_tilt_deg = 40.0;      // insertion tilt
  double scoop_tip_depth = 0.01;     // tip target below the rim plane (m)
  int trials = 30;
  int task = 0;  // 1..4, or 0 for all four
  bool oracle = true;
  bool emit_svg = false;

  void validate() const;
};

enum class FailureClass { kNone, kPlanning, kGrasp, kExecution };

const char* failure_class_name(FailureClass f);

struct TaskOutcome {
  int task = 0;
  bool success = false;
  FailureClass failure = FailureClass::kNone;
  std::map<std::string, double> diagnostics;  // clearances and distances, meters/degrees
  std::string note;
};

// Kinematic execution of one manipulation task from predicted instances:
//   1 put a tomato into a bowl   (contain origin as drop point)
//   2 cut a sausage with a knife (cut frame transported to the target)
//   3 scoop from a bowl          (scoop aligned with contain, dipped past the rim)
//   4 wrap-grasp a cup           (kp1-kp2 width against the true diameter)
// Missing required instances give a planning failure; width gates give grasp
// failures; geometric checks give execution failures.
TaskOutcome simulate_task(int task, const SceneGroundTruth& scene,
                          const std::vector<AffordanceInstance>& predictions,
                          const SimConfig& cfg);

// Scene recipe providing exactly the objects a task needs.
SynthConfig task_scene_config(int task, const SynthConfig& base);

struct CampaignStats {
  int task = 0;
  int trials = 0;
  int failures = 0;
  int planning = 0;
  int grasp = 0;
  int execution = 0;
};

using Predictor = std::function<std::vector<AffordanceInstance>(const SceneGroundTruth&)>;

// Ground-truth instances as predictions.
Predictor oracle_predictor();

// Fresh scene, prediction and simulation per trial; statistics reduced in
// seed order.
CampaignStats run_campaign(int task, int n_trials, std::uint64_t base_seed,
                           const Predictor& predictor, const SynthConfig& synth,
                           const SimConfig& cfg, std::vector<TaskOutcome>* outcomes = nullptr);

void write_campaign_csv(const std::filesystem::path& path,
                        const std::vector<CampaignStats>& rows);
void write_trials_jsonl(const std::filesystem::path& path,
                        const std::vector<TaskOutcome>& outcomes);

// Projected scene view with frame axes drawn on top (x black, y green,
// z blue).
void write_frame_overlay_svg(const std::filesystem::path& path, const SceneGroundTruth& scene,
                             const std::vector<ExecutionFrame>& frames,
                             std::size_t max_points = 4000);

}  // namespace affkp
