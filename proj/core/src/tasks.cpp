#include "affkp/tasks.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "affkp/error.hpp"
#include "affkp/geometry.hpp"
#include "affkp/rng.hpp"

namespace affkp {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct WorldView {
  Mat3 rot;  // camera -> world
  Vec3 pos;

  Vec3 point(const Vec3& p_cam) const { return rot * p_cam + pos; }
  KeypointQuadruplet quad(const KeypointQuadruplet& q_cam) const {
    KeypointQuadruplet out;
    for (int j = 0; j < 4; ++j) out[j] = point(q_cam[j]);
    return out;
  }
};

WorldView world_view(const SceneGroundTruth& scene) {
  WorldView w;
  w.rot = scene.camera_to_world.topLeftCorner<3, 3>();
  w.pos = scene.camera_to_world.topRightCorner<3, 1>();
  return w;
}

const PlacedObject* find_object(const SceneGroundTruth& scene, const std::string& category) {
  for (const PlacedObject& o : scene.objects)
    if (o.category == category) return &o;
  return nullptr;
}

// Predicted instance of the label whose quadruplet centroid (world) is
// nearest to the anchor.
const AffordanceInstance* nearest_instance(const std::vector<AffordanceInstance>& predictions,
                                           const WorldView& w, std::uint8_t label,
                                           const Vec3& anchor_world) {
  const AffordanceInstance* best = nullptr;
  double best_d = 0;
  for (const AffordanceInstance& inst : predictions) {
    if (inst.label != label) continue;
    double d = (w.quad(inst.keypoints).centroid() - anchor_world).norm();
    if (!best || d < best_d) {
      best = &inst;
      best_d = d;
    }
  }
  return best;
}

double param(const PlacedObject& o, const std::string& key) {
  auto it = o.params.find(key);
  if (it == o.params.end())
    throw DataError("object " + o.category + " is missing parameter " + key);
  return it->second;
}

TaskOutcome planning_failure(int task, const std::string& note) {
  TaskOutcome out;
  out.task = task;
  out.failure = FailureClass::kPlanning;
  out.note = note;
  return out;
}

// Width gates shared by every initial grasp: within the gripper stroke and
// within the fractional tolerance of the true dimension.
bool grasp_width_ok(double width, double true_width, const SimConfig& cfg, TaskOutcome& out,
                    const std::string& prefix) {
  out.diagnostics[prefix + "_width"] = width;
  out.diagnostics[prefix + "_true_width"] = true_width;
  if (width < 0 || width > cfg.gripper_stroke) return false;
  return std::abs(width - true_width) <= cfg.width_frac_tol * true_width;
}

// Distance from a point to a capped cylinder surface given axis frame.
double cylinder_surface_distance(const Vec3& p, const Vec3& center, const Vec3& axis,
                                 double radius, double half_len) {
  Vec3 rel = p - center;
  double s = rel.dot(axis);
  double rho = (rel - s * axis).norm();
  double s_clamped = std::clamp(s, -half_len, half_len);
  double d = std::hypot(rho - radius, s - s_clamped);  // lateral surface
  double cap = std::hypot(std::max(rho - radius, 0.0),
                          std::min(std::abs(s - half_len), std::abs(s + half_len)));
  return std::min(d, cap);
}

TaskOutcome simulate_place_in_bowl(const SceneGroundTruth& scene,
                                   const std::vector<AffordanceInstance>& preds,
                                   const SimConfig& cfg) {
  const int task = 1;
  const PlacedObject* bowl = find_object(scene, "bowl");
  const PlacedObject* tomato = find_object(scene, "tomato");
  if (!bowl || !tomato) return planning_failure(task, "scene lacks a bowl or a tomato");
  WorldView w = world_view(scene);

  double rim_r = param(*bowl, "radius");
  Vec3 bowl_axis(bowl->x, bowl->y, 0.0);
  Vec3 tomato_center(tomato->x, tomato->y, tomato->z);

  const AffordanceInstance* contain = nearest_instance(
      preds, w, static_cast<std::uint8_t>(Affordance::kContain), Vec3(bowl->x, bowl->y, bowl->z));
  const AffordanceInstance* grasp = nearest_instance(
      preds, w, static_cast<std::uint8_t>(Affordance::kGrasp), tomato_center);
  if (!contain) return planning_failure(task, "no contain instance predicted");
  if (!grasp) return planning_failure(task, "no grasp instance predicted");

  TaskOutcome out;
  out.task = task;
  KeypointQuadruplet grasp_q = w.quad(grasp->keypoints);
  double width = (grasp_q[3] - grasp_q[2]).norm();
  if (!grasp_width_ok(width, param(*tomato, "grasp_width"), cfg, out, "grasp")) {
    out.failure = FailureClass::kGrasp;
    out.note = "tomato grasp width outside the gripper gates";
    return out;
  }

  // The tomato is released above the contain origin and falls straight down;
  // the drop point must land inside the cavity cylinder.
  ExecutionFrame contain_frame =
      frame_from_quadruplet(w.quad(contain->keypoints),
                            static_cast<std::uint8_t>(Affordance::kContain));
  double off_axis = std::hypot(contain_frame.origin.x() - bowl_axis.x(),
                               contain_frame.origin.y() - bowl_axis.y());
  out.diagnostics["drop_offset"] = off_axis;
  out.diagnostics["cavity_radius"] = rim_r;
  if (off_axis > rim_r) {
    out.failure = FailureClass::kExecution;
    out.note = "drop point outside the bowl cavity";
    return out;
  }
  out.success = true;
  return out;
}

TaskOutcome simulate_cut(const SceneGroundTruth& scene,
                         const std::vector<AffordanceInstance>& preds, const SimConfig& cfg) {
  const int task = 2;
  const PlacedObject* knife = find_object(scene, "knife");
  const PlacedObject* sausage = find_object(scene, "sausage");
  if (!knife || !sausage) return planning_failure(task, "scene lacks a knife or a sausage");
  WorldView w = world_view(scene);

  Vec3 knife_center(knife->x, knife->y, knife->z);
  const AffordanceInstance* grasp =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kGrasp), knife_center);
  const AffordanceInstance* cut =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kCut), knife_center);
  if (!grasp) return planning_failure(task, "no grasp instance predicted");
  if (!cut) return planning_failure(task, "no cut instance predicted");

  TaskOutcome out;
  out.task = task;
  KeypointQuadruplet grasp_q = w.quad(grasp->keypoints);
  double width = (grasp_q[3] - grasp_q[2]).norm();
  if (!grasp_width_ok(width, param(*knife, "grasp_width"), cfg, out, "grasp")) {
    out.failure = FailureClass::kGrasp;
    out.note = "knife grasp width outside the gripper gates";
    return out;
  }

  double radius = param(*sausage, "radius");
  double half_len = param(*sausage, "half_length");
  Vec3 axis = Vec3(std::cos(sausage->yaw), std::sin(sausage->yaw), 0.0);
  Vec3 center(sausage->x, sausage->y, sausage->z);
  Vec3 target = center + Vec3(0, 0, radius);  // top of the lateral surface

  // Command frame at the target: blade direction in the radial cut plane.
  Vec3 up(0, 0, 1);
  Mat3 r_cmd;
  r_cmd.col(0) = axis;
  r_cmd.col(1) = up.cross(axis).normalized();
  r_cmd.col(2) = r_cmd.col(0).cross(r_cmd.col(1));

  ExecutionFrame pred_frame =
      frame_from_quadruplet(w.quad(cut->keypoints), static_cast<std::uint8_t>(Affordance::kCut));
  Mat3 motion_rot = r_cmd * pred_frame.rotation().transpose();
  Vec3 motion_t = target - motion_rot * pred_frame.origin;

  // The true blade rides along: the ground-truth cut frame transported by
  // the same rigid motion must meet the sausage.
  const AffordanceInstance* gt_cut = nullptr;
  double best = 0;
  for (const AffordanceInstance& inst : scene.instances) {
    if (inst.label != static_cast<std::uint8_t>(Affordance::kCut)) continue;
    double d = (w.quad(inst.keypoints).centroid() - knife_center).norm();
    if (!gt_cut || d < best) {
      gt_cut = &inst;
      best = d;
    }
  }
  if (!gt_cut) return planning_failure(task, "scene has no cut affordance");
  ExecutionFrame gt_frame = frame_from_quadruplet(w.quad(gt_cut->keypoints),
                                                  static_cast<std::uint8_t>(Affordance::kCut));
  Vec3 contact = motion_rot * gt_frame.origin + motion_t;
  Vec3 blade_dir = motion_rot * gt_frame.y_axis;

  double contact_dist = cylinder_surface_distance(contact, center, axis, radius, half_len);
  double out_of_plane_deg =
      std::abs(std::asin(std::clamp(blade_dir.dot(axis), -1.0, 1.0))) * 180.0 / kPi;
  out.diagnostics["contact_distance"] = contact_dist;
  out.diagnostics["cut_plane_deviation_deg"] = out_of_plane_deg;
  if (contact_dist > cfg.contact_tolerance || out_of_plane_deg > cfg.cut_angle_tol_deg) {
    out.failure = FailureClass::kExecution;
    out.note = "blade missed the sausage contact";
    return out;
  }
  out.success = true;
  return out;
}

TaskOutcome simulate_scoop(const SceneGroundTruth& scene,
                           const std::vector<AffordanceInstance>& preds, const SimConfig& cfg) {
  const int task = 3;
  const PlacedObject* spoon = find_object(scene, "spoon");
  const PlacedObject* bowl = find_object(scene, "bowl");
  if (!spoon || !bowl) return planning_failure(task, "scene lacks a spoon or a bowl");
  WorldView w = world_view(scene);

  Vec3 spoon_center(spoon->x, spoon->y, spoon->z);
  Vec3 bowl_center(bowl->x, bowl->y, bowl->z);
  const AffordanceInstance* grasp =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kGrasp), spoon_center);
  const AffordanceInstance* scoop =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kScoop), spoon_center);
  const AffordanceInstance* contain =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kContain), bowl_center);
  if (!grasp) return planning_failure(task, "no grasp instance predicted");
  if (!scoop) return planning_failure(task, "no scoop instance predicted");
  if (!contain) return planning_failure(task, "no contain instance predicted");

  TaskOutcome out;
  out.task = task;
  KeypointQuadruplet grasp_q = w.quad(grasp->keypoints);
  double width = (grasp_q[3] - grasp_q[2]).norm();
  if (!grasp_width_ok(width, param(*spoon, "grasp_width"), cfg, out, "grasp")) {
    out.failure = FailureClass::kGrasp;
    out.note = "spoon grasp width outside the gripper gates";
    return out;
  }

  double rim_r = param(*bowl, "radius");
  double rim_z = bowl->z;  // rim plane of the hemisphere shell

  ExecutionFrame scoop_frame = frame_from_quadruplet(
      w.quad(scoop->keypoints), static_cast<std::uint8_t>(Affordance::kScoop));
  ExecutionFrame contain_frame = frame_from_quadruplet(
      w.quad(contain->keypoints), static_cast<std::uint8_t>(Affordance::kContain));

  // Target pose: scoop y aligned with the contain y (horizontalized), tool
  // tilted about it so the tip dips below the rim at the bowl axis.
  Vec3 up(0, 0, 1);
  Vec3 y_t = contain_frame.y_axis - contain_frame.y_axis.dot(up) * up;
  if (y_t.norm() < 1e-9) y_t = Vec3(1, 0, 0);
  y_t.normalize();
  Vec3 z_t0 = y_t.cross(up).normalized();
  Vec3 x_t0 = y_t.cross(z_t0);
  double tilt = cfg.scoop_tilt_deg * kPi / 180.0;
  Mat3 base;
  base.col(0) = x_t0;
  base.col(1) = y_t;
  base.col(2) = z_t0;
  Mat3 r_target = Eigen::AngleAxisd(tilt, y_t).toRotationMatrix() * base;
  if ((r_target.col(2)).dot(up) > 0)
    r_target = Eigen::AngleAxisd(-tilt, y_t).toRotationMatrix() * base;

  Vec3 tip_pred = w.point(scoop->keypoints[1]);
  Vec3 tip_target(bowl->x, bowl->y, rim_z - cfg.scoop_tip_depth);
  Mat3 motion_rot = r_target * scoop_frame.rotation().transpose();
  Vec3 motion_t = tip_target - motion_rot * tip_pred;

  // True scoop geometry swept through the motion.
  const AffordanceInstance* gt_scoop = nullptr;
  double best = 0;
  for (const AffordanceInstance& inst : scene.instances) {
    if (inst.label != static_cast<std::uint8_t>(Affordance::kScoop)) continue;
    double d = (w.quad(inst.keypoints).centroid() - spoon_center).norm();
    if (!gt_scoop || d < best) {
      gt_scoop = &inst;
      best = d;
    }
  }
  if (!gt_scoop) return planning_failure(task, "scene has no scoop affordance");

  double min_z = std::numeric_limits<double>::max();
  double worst_radial = 0;
  for (std::int64_t idx : gt_scoop->points) {
    Vec3 q = motion_rot * w.point(scene.cloud.xyz[static_cast<std::size_t>(idx)]) + motion_t;
    min_z = std::min(min_z, q.z());
    if (q.z() <= rim_z)
      worst_radial = std::max(worst_radial, std::hypot(q.x() - bowl->x, q.y() - bowl->y));
  }
  out.diagnostics["tip_below_rim"] = rim_z - min_z;
  out.diagnostics["rim_margin"] = rim_r - cfg.rim_clearance - worst_radial;
  if (min_z >= rim_z) {
    out.failure = FailureClass::kExecution;
    out.note = "scoop tip never passed below the rim plane";
    return out;
  }
  if (worst_radial > rim_r - cfg.rim_clearance) {
    out.failure = FailureClass::kExecution;
    out.note = "scoop volume collides with the bowl rim";
    return out;
  }
  out.success = true;
  return out;
}

TaskOutcome simulate_wrap_grasp(const SceneGroundTruth& scene,
                                const std::vector<AffordanceInstance>& preds,
                                const SimConfig& cfg) {
  const int task = 4;
  const PlacedObject* cup = find_object(scene, "cup");
  if (!cup) return planning_failure(task, "scene lacks a cup");
  WorldView w = world_view(scene);

  Vec3 cup_center(cup->x, cup->y, cup->z);
  const AffordanceInstance* wrap =
      nearest_instance(preds, w, static_cast<std::uint8_t>(Affordance::kWrapGrasp), cup_center);
  if (!wrap) return planning_failure(task, "no wrap-grasp instance predicted");

  TaskOutcome out;
  out.task = task;
  KeypointQuadruplet q = w.quad(wrap->keypoints);
  double width = (q[1] - q[0]).norm();  // grip width from keypoints 1 and 2
  double true_d = 2.0 * param(*cup, "radius");
  out.diagnostics["grip_width"] = width;
  out.diagnostics["true_diameter"] = true_d;
  if (width > cfg.gripper_stroke || std::abs(width - true_d) > cfg.width_frac_tol * true_d) {
    out.failure = FailureClass::kGrasp;
    out.note = "wrap-grasp width outside the gripper gates";
    return out;
  }

  ExecutionFrame frame =
      frame_from_quadruplet(q, static_cast<std::uint8_t>(Affordance::kWrapGrasp));
  double height = param(*cup, "height");
  double axis_offset = std::hypot(frame.origin.x() - cup->x, frame.origin.y() - cup->y);
  out.diagnostics["axis_offset"] = axis_offset;
  bool origin_on_body = axis_offset <= param(*cup, "radius") &&
                        frame.origin.z() >= -0.01 && frame.origin.z() <= height + 0.01;
  if (!origin_on_body) {
    out.failure = FailureClass::kExecution;
    out.note = "grip origin off the cup body";
    return out;
  }
  out.success = true;
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (!(contact_tolerance > 0)) throw ConfigError("sim: contact_tolerance must be positive");
  if (!(cut_angle_tol_deg > 0)) throw ConfigError("sim: cut_angle_tol_deg must be positive");
  if (!(rim_clearance >= 0)) throw ConfigError("sim: rim_clearance must be >= 0");
  if (!(width_frac_tol > 0)) throw ConfigError("sim: width_frac_tol must be positive");
  if (!(gripper_stroke > 0)) throw ConfigError("sim: gripper_stroke must be positive");
  if (scoop_tilt_deg <= 0 || scoop_tilt_deg >= 90)
    throw ConfigError("sim: scoop_tilt_deg outside (0, 90)");
  if (!(scoop_tip_depth > 0)) throw ConfigError("sim: scoop_tip_depth must be positive");
  if (trials < 1) throw ConfigError("sim: trials must be >= 1");
  if (task < 0 || task > 4) throw ConfigError("sim: task must be 0..4");
}

const char* failure_class_name(FailureClass f) {
  switch (f) {
    case FailureClass::kNone: return "none";
    case FailureClass::kPlanning: return "planning";
    case FailureClass::kGrasp: return "grasp";
    case FailureClass::kExecution: return "execution";
  }
  return "none";
}

TaskOutcome simulate_task(int task, const SceneGroundTruth& scene,
                          const std::vector<AffordanceInstance>& predictions,
                          const SimConfig& cfg) {
  cfg.validate();
  TaskOutcome out;
  switch (task) {
    case 1: out = simulate_place_in_bowl(scene, predictions, cfg); break;
    case 2: out = simulate_cut(scene, predictions, cfg); break;
    case 3: out = simulate_scoop(scene, predictions, cfg); break;
    case 4: out = simulate_wrap_grasp(scene, predictions, cfg); break;
    default: throw ConfigError("simulate_task: task must be 1..4");
  }
  if (out.success && out.failure != FailureClass::kNone)
    throw Error("task outcome invariant violated");
  return out;
}

SynthConfig task_scene_config(int task, const SynthConfig& base) {
  SynthConfig cfg = base;
  switch (task) {
    case 1: cfg.recipe = {"bowl", "tomato"}; break;
    case 2: cfg.recipe = {"knife", "sausage"}; break;
    case 3: cfg.recipe = {"spoon", "bowl"}; break;
    case 4: cfg.recipe = {"cup"}; break;
    default: throw ConfigError("task_scene_config: task must be 1..4");
  }
  // Two-object recipes need room for their clearance circles.
  cfg.desk_x = std::max(cfg.desk_x, 0.65);
  cfg.desk_y = std::max(cfg.desk_y, 0.65);
  return cfg;
}

Predictor oracle_predictor() {
  return [](const SceneGroundTruth& scene) { return scene.instances; };
}

CampaignStats run_campaign(int task, int n_trials, std::uint64_t base_seed,
                           const Predictor& predictor, const SynthConfig& synth,
                           const SimConfig& cfg, std::vector<TaskOutcome>* outcomes) {
  if (n_trials < 1) throw ConfigError("run_campaign: need at least one trial");
  SynthConfig scene_cfg = task_scene_config(task, synth);
  CampaignStats stats;
  stats.task = task;
  for (int trial = 0; trial < n_trials; ++trial) {
    std::uint64_t seed = mix_seed(base_seed, 0xCA3ull + static_cast<std::uint64_t>(trial));
    SceneGroundTruth scene = sample_scene(scene_cfg, seed);
    std::vector<AffordanceInstance> preds = predictor(scene);
    TaskOutcome outcome = simulate_task(task, scene, preds, cfg);
    stats.trials += 1;
    if (!outcome.success) {
      stats.failures += 1;
      switch (outcome.failure) {
        case FailureClass::kPlanning: stats.planning += 1; break;
        case FailureClass::kGrasp: stats.grasp += 1; break;
        case FailureClass::kExecution: stats.execution += 1; break;
        case FailureClass::kNone: throw Error("failed outcome without a failure class");
      }
    }
    if (outcomes) outcomes->push_back(std::move(outcome));
  }
  if (stats.failures != stats.planning + stats.grasp + stats.execution)
    throw Error("campaign statistics invariant violated");
  return stats;
}

void write_campaign_csv(const std::filesystem::path& path,
                        const std::vector<CampaignStats>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "task,trials,failures,planning_failures,grasp_failures,execution_failures\n";
  for (const CampaignStats& r : rows)
    f << r.task << "," << r.trials << "," << r.failures << "," << r.planning << "," << r.grasp
      << "," << r.execution << "\n";
  if (!f) throw DataError("short write: " + path.string());
}

void write_trials_jsonl(const std::filesystem::path& path,
                        const std::vector<TaskOutcome>& outcomes) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const TaskOutcome& o = outcomes[i];
    nlohmann::json j = {{"trial", i},
                        {"task", o.task},
                        {"success", o.success},
                        {"failure_class", failure_class_name(o.failure)},
                        {"diagnostics", o.diagnostics},
                        {"note", o.note}};
    f << j.dump() << "\n";
  }
  if (!f) throw DataError("short write: " + path.string());
}

void write_frame_overlay_svg(const std::filesystem::path& path, const SceneGroundTruth& scene,
                             const std::vector<ExecutionFrame>& frames,
                             std::size_t max_points) {
  const CameraIntrinsics& k = scene.intrinsics;
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << k.width << "\" height=\""
    << k.height << "\" viewBox=\"0 0 " << k.width << " " << k.height << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";

  std::size_t stride = std::max<std::size_t>(1, scene.cloud.size() / max_points);
  f.precision(2);
  f << std::fixed;
  for (std::size_t i = 0; i < scene.cloud.size(); i += stride) {
    const Vec3& p = scene.cloud.xyz[i];
    if (!(p.z() > 0)) continue;
    Eigen::Vector2d px = project(k, p);
    if (px.x() < 0 || px.x() >= k.width || px.y() < 0 || px.y() >= k.height) continue;
    const auto& col = kAffordanceColors[scene.labels[i]];
    f << "<circle cx=\"" << px.x() << "\" cy=\"" << px.y() << "\" r=\"1\" fill=\"rgb("
      << static_cast<int>(col[0] * 255) << "," << static_cast<int>(col[1] * 255) << ","
      << static_cast<int>(col[2] * 255) << ")\"/>\n";
  }

  const char* axis_color[3] = {"#000000", "#00c000", "#2060ff"};  // x black, y green, z blue
  for (const ExecutionFrame& frame : frames) {
    if (!(frame.origin.z() > 0)) continue;
    Eigen::Vector2d o = project(k, frame.origin);
    const Vec3 axes[3] = {frame.x_axis, frame.y_axis, frame.z_axis};
    for (int a = 0; a < 3; ++a) {
      Vec3 tip = frame.origin + 0.05 * axes[a];
      if (!(tip.z() > 0)) continue;
      Eigen::Vector2d tp = project(k, tip);
      f << "<line x1=\"" << o.x() << "\" y1=\"" << o.y() << "\" x2=\"" << tp.x() << "\" y2=\""
        << tp.y() << "\" stroke=\"" << axis_color[a] << "\" stroke-width=\"2\"/>\n";
    }
  }
  f << "</svg>\n";
  if (!f) throw DataError("short write: " + path.string());
}

}  // namespace affkp
