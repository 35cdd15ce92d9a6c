#include "affkp/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace affkp {

namespace {

constexpr double kPi = 3.14159265358979323846;

double draw_size(Rng& rng, double lo, double hi, double jitter) {
  double mid = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo) * std::clamp(jitter, 0.0, 1.0);
  return mid + rng.uniform(-half, half);
}

Mat3 rot_x(double angle) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(angle), -std::sin(angle), 0, std::sin(angle), std::cos(angle);
  return m;
}

Mat3 rot_y(double angle) {
  Mat3 m;
  m << std::cos(angle), 0, std::sin(angle), 0, 1, 0, -std::sin(angle), 0, std::cos(angle);
  return m;
}

Mat3 rot_z(double angle) {
  Mat3 m;
  m << std::cos(angle), -std::sin(angle), 0, std::sin(angle), std::cos(angle), 0, 0, 0, 1;
  return m;
}

double box_area(const SurfacePart& p) { return 8.0 * (p.a * p.b + p.b * p.c + p.a * p.c); }

double part_area(const SurfacePart& p) {
  switch (p.kind) {
    case SurfacePart::Kind::kBox:
      return box_area(p);
    case SurfacePart::Kind::kCylinder: {
      double area = 2.0 * kPi * p.a * (2.0 * p.b);
      if (p.cap_bottom) area += kPi * p.a * p.a;
      if (p.cap_top) area += kPi * p.a * p.a;
      return area;
    }
    case SurfacePart::Kind::kHemisphere:
      return 2.0 * kPi * p.a * p.a;
    case SurfacePart::Kind::kSphere:
      return 4.0 * kPi * p.a * p.a;
  }
  return 0.0;
}

// Uniform-by-area sample on the part surface, in the part frame, with the
// outward normal.
void sample_on_part(const SurfacePart& p, Rng& rng, Vec3& point, Vec3& normal) {
  switch (p.kind) {
    case SurfacePart::Kind::kBox: {
      const double he[3] = {p.a, p.b, p.c};
      double faces[3] = {p.b * p.c, p.a * p.c, p.a * p.b};  // area/8 per axis pair
      double total = faces[0] + faces[1] + faces[2];
      double pick = rng.uniform(0.0, total);
      int axis = pick < faces[0] ? 0 : (pick < faces[0] + faces[1] ? 1 : 2);
      double side = rng.next_index(2) == 0 ? -1.0 : 1.0;
      int u = (axis + 1) % 3, v = (axis + 2) % 3;
      point[axis] = side * he[axis];
      point[u] = rng.uniform(-he[u], he[u]);
      point[v] = rng.uniform(-he[v], he[v]);
      normal = Vec3::Zero();
      normal[axis] = side;
      break;
    }
    case SurfacePart::Kind::kCylinder: {
      double lat = 2.0 * kPi * p.a * (2.0 * p.b);
      double cap = kPi * p.a * p.a;
      double total = lat + (p.cap_bottom ? cap : 0.0) + (p.cap_top ? cap : 0.0);
      double pick = rng.uniform(0.0, total);
      if (pick < lat) {
        double phi = rng.uniform(0.0, 2.0 * kPi);
        double z = rng.uniform(-p.b, p.b);
        point = Vec3(p.a * std::cos(phi), p.a * std::sin(phi), z);
        normal = Vec3(std::cos(phi), std::sin(phi), 0.0);
      } else {
        bool top = p.cap_top && (!p.cap_bottom || pick >= lat + cap);
        double r = p.a * std::sqrt(rng.next_double());
        double phi = rng.uniform(0.0, 2.0 * kPi);
        point = Vec3(r * std::cos(phi), r * std::sin(phi), top ? p.b : -p.b);
        normal = Vec3(0.0, 0.0, top ? 1.0 : -1.0);
      }
      break;
    }
    case SurfacePart::Kind::kHemisphere: {
      double z = rng.uniform(-p.a, 0.0);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      double rho = std::sqrt(std::max(0.0, p.a * p.a - z * z));
      point = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
      normal = point / p.a;
      break;
    }
    case SurfacePart::Kind::kSphere: {
      double z = rng.uniform(-p.a, p.a);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      double rho = std::sqrt(std::max(0.0, p.a * p.a - z * z));
      point = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
      normal = point / p.a;
      break;
    }
  }
}

// Outward normal at a point assumed on (or very near) the surface.
Vec3 normal_at(const SurfacePart& p, const Vec3& local) {
  switch (p.kind) {
    case SurfacePart::Kind::kBox: {
      const double he[3] = {p.a, p.b, p.c};
      int best = 0;
      double best_gap = std::numeric_limits<double>::max();
      for (int axis = 0; axis < 3; ++axis) {
        double gap = he[axis] - std::abs(local[axis]);
        if (gap < best_gap) {
          best_gap = gap;
          best = axis;
        }
      }
      Vec3 n = Vec3::Zero();
      n[best] = local[best] >= 0 ? 1.0 : -1.0;
      return n;
    }
    case SurfacePart::Kind::kCylinder: {
      double rho = std::hypot(local.x(), local.y());
      double side_gap = std::abs(rho - p.a);
      double cap_gap = p.b - std::abs(local.z());
      if ((p.cap_bottom || p.cap_top) && cap_gap < side_gap)
        return Vec3(0.0, 0.0, local.z() >= 0 ? 1.0 : -1.0);
      if (rho < 1e-12) return Vec3(1.0, 0.0, 0.0);
      return Vec3(local.x() / rho, local.y() / rho, 0.0);
    }
    case SurfacePart::Kind::kHemisphere:
    case SurfacePart::Kind::kSphere: {
      double n = local.norm();
      if (n < 1e-12) return Vec3(0.0, 0.0, -1.0);
      return local / n;
    }
  }
  return Vec3(0.0, 0.0, 1.0);
}

}  // namespace

double distance_to_surface(const SurfacePart& part, const Vec3& p_object) {
  Vec3 local = part.rot.transpose() * (p_object - part.center);
  switch (part.kind) {
    case SurfacePart::Kind::kBox: {
      const double he[3] = {part.a, part.b, part.c};
      Vec3 q(std::abs(local.x()) - he[0], std::abs(local.y()) - he[1],
             std::abs(local.z()) - he[2]);
      double outside = Vec3(std::max(q.x(), 0.0), std::max(q.y(), 0.0), std::max(q.z(), 0.0)).norm();
      double inside = std::max(q.x(), std::max(q.y(), q.z()));  // <= 0 when inside
      return std::abs(outside + std::min(inside, 0.0));
    }
    case SurfacePart::Kind::kCylinder: {
      double rho = std::hypot(local.x(), local.y());
      double z_clamped = std::clamp(local.z(), -part.b, part.b);
      double d = std::hypot(rho - part.a, local.z() - z_clamped);
      auto cap_distance = [&](double zc) {
        return std::hypot(std::max(rho - part.a, 0.0), local.z() - zc);
      };
      if (part.cap_bottom) d = std::min(d, cap_distance(-part.b));
      if (part.cap_top) d = std::min(d, cap_distance(part.b));
      return d;
    }
    case SurfacePart::Kind::kHemisphere: {
      if (local.z() <= 0.0) return std::abs(local.norm() - part.a);
      double rho = std::hypot(local.x(), local.y());
      return std::hypot(rho - part.a, local.z());  // nearest rim point
    }
    case SurfacePart::Kind::kSphere:
      return std::abs(local.norm() - part.a);
  }
  return std::numeric_limits<double>::max();
}

ObjectTemplate make_template(const std::string& category, Rng& rng, double size_jitter) {
  ObjectTemplate t;
  t.category = category;
  auto L = [](Affordance a) { return static_cast<std::uint8_t>(a); };

  if (category == "knife") {
    double hl = draw_size(rng, 0.040, 0.055, size_jitter);
    double hw = draw_size(rng, 0.011, 0.015, size_jitter);
    double hh = draw_size(rng, 0.008, 0.012, size_jitter);
    double bl = draw_size(rng, 0.040, 0.055, size_jitter);
    double bt = draw_size(rng, 0.0012, 0.0020, size_jitter);
    double bh = draw_size(rng, 0.011, 0.015, size_jitter);

    SurfacePart handle;
    handle.label = L(Affordance::kGrasp);
    handle.kind = SurfacePart::Kind::kBox;
    handle.a = hl;
    handle.b = hw;
    handle.c = hh;
    handle.keypoints[0] = Vec3(-hl, 0, 0);
    handle.keypoints[1] = Vec3(hl, 0, 0);  // connection side toward the blade
    handle.keypoints[2] = Vec3(0, -hw, 0);
    handle.keypoints[3] = Vec3(0, hw, 0);

    SurfacePart blade;
    blade.label = L(Affordance::kCut);
    blade.kind = SurfacePart::Kind::kBox;
    blade.center = Vec3(hl + bl, 0, 0);
    blade.a = bl;
    blade.b = bt;
    blade.c = bh;
    blade.keypoints[0] = Vec3(hl, 0, -bh);           // edge at the root
    blade.keypoints[1] = Vec3(hl + 2 * bl, 0, -bh);  // edge at the tip
    blade.keypoints[2] = Vec3(hl + bl, -bt, 0);
    blade.keypoints[3] = Vec3(hl + bl, bt, 0);

    t.parts = {handle, blade};
    t.footprint_radius = hl + bl + 0.01;
    t.footprint_offset = bl;
    t.rest_z = std::max(hh, bh);
    t.params = {{"handle_half_len", hl}, {"handle_half_width", hw},
                {"handle_half_height", hh}, {"blade_half_len", bl},
                {"blade_half_thickness", bt}, {"blade_half_height", bh},
                {"grasp_width", 2 * hw}};
  } else if (category == "spoon") {
    double hl = draw_size(rng, 0.045, 0.060, size_jitter);
    double hw = draw_size(rng, 0.008, 0.011, size_jitter);
    double hh = draw_size(rng, 0.005, 0.007, size_jitter);
    double r = draw_size(rng, 0.018, 0.028, size_jitter);

    SurfacePart handle;
    handle.label = L(Affordance::kGrasp);
    handle.kind = SurfacePart::Kind::kBox;
    handle.a = hl;
    handle.b = hw;
    handle.c = hh;
    handle.keypoints[0] = Vec3(-hl, 0, 0);
    handle.keypoints[1] = Vec3(hl, 0, 0);
    handle.keypoints[2] = Vec3(0, -hw, 0);
    handle.keypoints[3] = Vec3(0, hw, 0);

    SurfacePart scoop;
    scoop.label = L(Affordance::kScoop);
    scoop.kind = SurfacePart::Kind::kHemisphere;
    scoop.center = Vec3(hl + r, 0, 0);
    scoop.a = r;
    scoop.keypoints[0] = Vec3(hl, 0, 0);          // rim toward the handle
    scoop.keypoints[1] = Vec3(hl + 2 * r, 0, 0);  // rim at the tip
    scoop.keypoints[2] = Vec3(hl + r, -r, 0);
    scoop.keypoints[3] = Vec3(hl + r, r, 0);

    t.parts = {handle, scoop};
    t.footprint_radius = hl + r + 0.01;
    t.footprint_offset = r;
    t.rest_z = std::max(hh, r);
    t.params = {{"handle_half_len", hl}, {"handle_half_width", hw},
                {"handle_half_height", hh}, {"scoop_radius", r},
                {"grasp_width", 2 * hw}};
  } else if (category == "hammer") {
    double hl = draw_size(rng, 0.065, 0.090, size_jitter);
    double hw = draw_size(rng, 0.012, 0.017, size_jitter);
    double hh = draw_size(rng, 0.010, 0.014, size_jitter);
    double r = draw_size(rng, 0.013, 0.019, size_jitter);
    double half_len = draw_size(rng, 0.030, 0.040, size_jitter);

    SurfacePart handle;
    handle.label = L(Affordance::kGrasp);
    handle.kind = SurfacePart::Kind::kBox;
    handle.a = hl;
    handle.b = hw;
    handle.c = hh;
    handle.keypoints[0] = Vec3(-hl, 0, 0);
    handle.keypoints[1] = Vec3(hl, 0, 0);
    handle.keypoints[2] = Vec3(0, -hw, 0);
    handle.keypoints[3] = Vec3(0, hw, 0);

    SurfacePart head;
    head.label = L(Affordance::kPound);
    head.kind = SurfacePart::Kind::kCylinder;
    head.center = Vec3(hl + r, 0, 0);
    head.rot = rot_x(-kPi / 2.0);  // axis along object +y
    head.a = r;
    head.b = half_len;
    head.cap_bottom = head.cap_top = true;
    head.keypoints[0] = Vec3(hl + r, -half_len, 0);
    head.keypoints[1] = Vec3(hl + r, half_len, 0);  // striking face
    head.keypoints[2] = Vec3(hl + r, 0, -r);
    head.keypoints[3] = Vec3(hl + r, 0, r);

    t.parts = {handle, head};
    t.footprint_radius = std::max(hl + r, std::hypot(hl + r, half_len)) + 0.01;
    t.footprint_offset = r;
    t.rest_z = std::max(hh, r);
    t.params = {{"handle_half_len", hl}, {"handle_half_width", hw},
                {"handle_half_height", hh}, {"head_radius", r},
                {"head_half_len", half_len}, {"grasp_width", 2 * hw}};
  } else if (category == "bowl") {
    double r = draw_size(rng, 0.060, 0.090, size_jitter);
    SurfacePart shell;
    shell.label = L(Affordance::kContain);
    shell.kind = SurfacePart::Kind::kHemisphere;
    shell.a = r;
    shell.keypoints[0] = Vec3(-r, 0, 0);
    shell.keypoints[1] = Vec3(r, 0, 0);
    shell.keypoints[2] = Vec3(0, -r, 0);
    shell.keypoints[3] = Vec3(0, r, 0);
    t.parts = {shell};
    t.footprint_radius = r + 0.01;
    t.rest_z = r;
    t.params = {{"radius", r}};
  } else if (category == "cup") {
    double r = draw_size(rng, 0.028, 0.036, size_jitter);
    double h = 2 * r * draw_size(rng, 0.92, 1.08, size_jitter);
    SurfacePart body;
    body.label = L(Affordance::kWrapGrasp);
    body.kind = SurfacePart::Kind::kCylinder;
    body.a = r;
    body.b = h / 2;
    body.cap_bottom = true;
    body.keypoints[0] = Vec3(r, 0, -h / 2);
    body.keypoints[1] = Vec3(r, 0, h / 2);
    body.keypoints[2] = Vec3(0, -r, 0);
    body.keypoints[3] = Vec3(0, r, 0);
    t.parts = {body};
    t.footprint_radius = r + 0.01;
    t.rest_z = h / 2;
    t.params = {{"radius", r}, {"height", h}};
  } else if (category == "mug") {
    double r = draw_size(rng, 0.035, 0.050, size_jitter);
    double h = 2 * r * draw_size(rng, 0.92, 1.08, size_jitter);
    double ri = r - 0.004;
    SurfacePart body;
    body.label = L(Affordance::kWrapGrasp);
    body.kind = SurfacePart::Kind::kCylinder;
    body.a = r;
    body.b = h / 2;
    body.cap_bottom = true;
    body.keypoints[0] = Vec3(r, 0, -h / 2);
    body.keypoints[1] = Vec3(r, 0, h / 2);
    body.keypoints[2] = Vec3(0, -r, 0);
    body.keypoints[3] = Vec3(0, r, 0);

    double bi = 0.35 * h;  // inner wall half height
    SurfacePart cavity;
    cavity.label = L(Affordance::kContain);
    cavity.kind = SurfacePart::Kind::kCylinder;
    cavity.a = ri;
    cavity.b = bi;
    cavity.center = Vec3(0, 0, h / 2 - bi);
    cavity.keypoints[0] = Vec3(-ri, 0, h / 2);
    cavity.keypoints[1] = Vec3(ri, 0, h / 2);
    cavity.keypoints[2] = Vec3(0, -ri, h / 2);
    cavity.keypoints[3] = Vec3(0, ri, h / 2);

    t.parts = {body, cavity};
    t.footprint_radius = r + 0.01;
    t.rest_z = h / 2;
    t.params = {{"radius", r}, {"height", h}, {"inner_radius", ri}};
  } else if (category == "tomato") {
    double r = draw_size(rng, 0.020, 0.034, size_jitter);
    SurfacePart body;
    body.label = L(Affordance::kGrasp);
    body.kind = SurfacePart::Kind::kSphere;
    body.a = r;
    body.keypoints[0] = Vec3(-r, 0, 0);
    body.keypoints[1] = Vec3(r, 0, 0);
    body.keypoints[2] = Vec3(0, -r, 0);
    body.keypoints[3] = Vec3(0, r, 0);
    t.parts = {body};
    t.footprint_radius = r + 0.01;
    t.rest_z = r;
    t.params = {{"radius", r}, {"grasp_width", 2 * r}};
  } else if (category == "sausage") {
    double r = draw_size(rng, 0.011, 0.015, size_jitter);
    double half_len = draw_size(rng, 0.050, 0.070, size_jitter);
    SurfacePart body;
    body.label = 0;
    body.kind = SurfacePart::Kind::kCylinder;
    body.rot = rot_y(kPi / 2.0);  // axis along object +x
    body.a = r;
    body.b = half_len;
    body.cap_bottom = body.cap_top = true;
    t.parts = {body};
    t.footprint_radius = half_len + 0.01;
    t.rest_z = r;
    t.params = {{"radius", r}, {"half_length", half_len}};
    t.prop = true;
  } else {
    throw ConfigError("unknown object category: " + category);
  }
  return t;
}

void SynthConfig::validate() const {
  if (categories.empty() && recipe.empty()) throw ConfigError("synth: no object categories");
  if (objects_min < 1 || objects_max < objects_min)
    throw ConfigError("synth: invalid object count range");
  if (desk_x <= 0 || desk_y <= 0) throw ConfigError("synth: desk must have positive extent");
  if (density <= 0) throw ConfigError("synth: sampling density must be positive");
  if (size_jitter < 0 || size_jitter > 1) throw ConfigError("synth: size_jitter outside [0,1]");
  if (scene_count < 1) throw ConfigError("synth: scene_count must be >= 1");
  if (placement_gap < 0) throw ConfigError("synth: placement_gap must be >= 0");
  camera.validate();
}

namespace {

struct Placement {
  ObjectTemplate tmpl;
  double x = 0, y = 0, yaw = 0;    // object origin pose
  double cx = 0, cy = 0;           // clearance circle center
};

Vec3 paint(const SurfacePart& part, const ObjectTemplate& tmpl, const Vec3& p_world,
           const Vec3& part_center_world, const Vec3& local, TextureMode mode, Rng& rng,
           double noise) {
  Vec3 base;
  if (tmpl.prop)
    base = Vec3(0.62, 0.38, 0.22);
  else
    base = Vec3(kAffordanceColors[part.label][0], kAffordanceColors[part.label][1],
                kAffordanceColors[part.label][2]);

  Vec3 color = base;
  if (mode == TextureMode::kShaded) {
    double extent = std::max({part.a, part.b, part.c, 1e-6});
    int axis = 0;
    if (part.kind == SurfacePart::Kind::kBox) {
      axis = part.a >= part.b && part.a >= part.c ? 0 : (part.b >= part.c ? 1 : 2);
      extent = std::max({part.a, part.b, part.c});
    } else if (part.kind == SurfacePart::Kind::kCylinder) {
      axis = 2;
      extent = part.b;
    }
    double tpos = std::clamp(0.5 + 0.5 * local[axis] / extent, 0.0, 1.0);
    color = base * (0.55 + 0.45 * tpos);
  } else if (mode == TextureMode::kPositional) {
    constexpr double kTextureScale = 0.2;  // keeps channels inside (0,1) at desk scale
    Vec3 enc = Vec3::Constant(0.5) + (p_world - part_center_world) / (2.0 * kTextureScale);
    color = 0.38 * base + 0.62 * enc;
  }
  for (int c = 0; c < 3; ++c)
    color[c] = std::clamp(color[c] + rng.uniform(-noise, noise), 0.0, 1.0);
  return color;
}

}  // namespace

SceneGroundTruth sample_scene(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  std::vector<std::string> cats = config.recipe;
  if (cats.empty()) {
    int count = config.objects_min +
                static_cast<int>(rng.next_index(
                    static_cast<std::uint64_t>(config.objects_max - config.objects_min + 1)));
    for (int i = 0; i < count; ++i)
      cats.push_back(config.categories[rng.next_index(config.categories.size())]);
  }

  double yaw_range = config.yaw_range_deg * kPi / 180.0;
  std::vector<ObjectTemplate> templates;
  for (const std::string& cat : cats) {
    templates.push_back(make_template(cat, rng, config.size_jitter));
    if (config.desk_x / 2 <= templates.back().footprint_radius ||
        config.desk_y / 2 <= templates.back().footprint_radius)
      throw DataError("scene placement: desk too small for " + cat);
  }

  // Whole-arrangement rejection: redraw every pose until no clearance
  // circles overlap.
  std::vector<Placement> placed;
  bool arranged = false;
  for (int attempt = 0; attempt < config.placement_attempts && !arranged; ++attempt) {
    std::vector<Placement> candidate;
    bool ok = true;
    for (const ObjectTemplate& tmpl : templates) {
      double max_x = config.desk_x / 2 - tmpl.footprint_radius;
      double max_y = config.desk_y / 2 - tmpl.footprint_radius;
      Placement p;
      p.tmpl = tmpl;
      p.cx = rng.uniform(-max_x, max_x);
      p.cy = rng.uniform(-max_y, max_y);
      p.yaw = rng.uniform(-yaw_range, yaw_range);
      p.x = p.cx - std::cos(p.yaw) * tmpl.footprint_offset;
      p.y = p.cy - std::sin(p.yaw) * tmpl.footprint_offset;
      for (const Placement& other : candidate) {
        double need = tmpl.footprint_radius + other.tmpl.footprint_radius + config.placement_gap;
        if (std::hypot(p.cx - other.cx, p.cy - other.cy) < need) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
      candidate.push_back(std::move(p));
    }
    if (ok) {
      placed = std::move(candidate);
      arranged = true;
    }
  }
  if (!arranged) {
    std::string listing;
    for (const std::string& cat : cats) listing += (listing.empty() ? "" : ", ") + cat;
    throw DataError("scene placement: no arrangement found after " +
                    std::to_string(config.placement_attempts) + " attempts for [" + listing +
                    "] on a " + std::to_string(config.desk_x) + " x " +
                    std::to_string(config.desk_y) + " desk");
  }

  SceneGroundTruth scene;
  scene.seed = seed;
  scene.intrinsics = config.camera;

  // Desk plane, background label.
  PointCloudFrame& cloud = scene.cloud;
  std::size_t plane_n = static_cast<std::size_t>(
      std::lround(config.desk_x * config.desk_y * config.density));
  Vec3 plane_base(kAffordanceColors[0][0], kAffordanceColors[0][1], kAffordanceColors[0][2]);
  for (std::size_t i = 0; i < plane_n; ++i) {
    double x = rng.uniform(-config.desk_x / 2, config.desk_x / 2);
    double y = rng.uniform(-config.desk_y / 2, config.desk_y / 2);
    cloud.xyz.emplace_back(x, y, 0.0);
    cloud.normal.emplace_back(0.0, 0.0, 1.0);
    Vec3 c = plane_base;
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = std::clamp(c[ch] + rng.uniform(-config.color_noise, config.color_noise), 0.0, 1.0);
    cloud.rgb.push_back(c);
    scene.labels.push_back(0);
  }

  for (const Placement& pl : placed) {
    Mat3 Rz = rot_z(pl.yaw);
    Vec3 t(pl.x, pl.y, pl.tmpl.rest_z);
    PlacedObject rec;
    rec.category = pl.tmpl.category;
    rec.x = pl.x;
    rec.y = pl.y;
    rec.z = pl.tmpl.rest_z;
    rec.yaw = pl.yaw;
    rec.params = pl.tmpl.params;
    rec.prop = pl.tmpl.prop;
    scene.objects.push_back(rec);

    for (const SurfacePart& part : pl.tmpl.parts) {
      Vec3 part_center_world = Rz * part.center + t;
      std::size_t n_samples =
          static_cast<std::size_t>(std::lround(part_area(part) * config.density));
      std::vector<std::int64_t> members;
      members.reserve(n_samples + 4);
      for (std::size_t s = 0; s < n_samples; ++s) {
        Vec3 local, n_local;
        sample_on_part(part, rng, local, n_local);
        Vec3 p_obj = part.rot * local + part.center;
        Vec3 p_world = Rz * p_obj + t;
        Vec3 n_world = Rz * part.rot * n_local;
        members.push_back(static_cast<std::int64_t>(cloud.xyz.size()));
        cloud.xyz.push_back(p_world);
        cloud.normal.push_back(n_world);
        cloud.rgb.push_back(paint(part, pl.tmpl, p_world, part_center_world, local,
                                  config.texture, rng, config.color_noise));
        scene.labels.push_back(part.label);
      }
      if (part.label == 0) continue;  // prop surfaces carry no instance

      // Keypoint anchors join the cloud so the on-surface convention holds
      // exactly.
      KeypointQuadruplet quad_world;
      for (int j = 0; j < 4; ++j) {
        Vec3 p_obj = part.keypoints[j];
        Vec3 local = part.rot.transpose() * (p_obj - part.center);
        Vec3 p_world = Rz * p_obj + t;
        Vec3 n_world = Rz * part.rot * normal_at(part, local);
        members.push_back(static_cast<std::int64_t>(cloud.xyz.size()));
        cloud.xyz.push_back(p_world);
        cloud.normal.push_back(n_world);
        cloud.rgb.push_back(paint(part, pl.tmpl, p_world, part_center_world, local,
                                  config.texture, rng, config.color_noise));
        scene.labels.push_back(part.label);
        quad_world[j] = p_world;
      }

      AffordanceInstance inst;
      inst.id = static_cast<int>(scene.instances.size());
      inst.label = part.label;
      inst.points = std::move(members);
      inst.keypoints = quad_world;
      scene.instances.push_back(std::move(inst));
    }
  }

  // Camera pose: above the desk, tilted from vertical, looking at the center.
  double tilt = config.camera_tilt_deg * kPi / 180.0;
  Vec3 pos(0.0, -config.camera_distance * std::sin(tilt),
           config.camera_distance * std::cos(tilt));
  Vec3 target(0.0, 0.0, 0.0);
  if (config.camera_jitter > 0) {
    for (int c = 0; c < 3; ++c) pos[c] += rng.uniform(-config.camera_jitter, config.camera_jitter);
    for (int c = 0; c < 2; ++c)
      target[c] += rng.uniform(-config.camera_jitter, config.camera_jitter);
  }
  Vec3 z_c = (target - pos).normalized();
  Vec3 up(0.0, 0.0, 1.0);
  Vec3 x_c = z_c.cross(up).normalized();
  Vec3 y_c = z_c.cross(x_c);

  Mat3 R_wc;
  R_wc.col(0) = x_c;
  R_wc.col(1) = y_c;
  R_wc.col(2) = z_c;
  scene.camera_to_world = Eigen::Matrix4d::Identity();
  scene.camera_to_world.topLeftCorner<3, 3>() = R_wc;
  scene.camera_to_world.topRightCorner<3, 1>() = pos;

  Mat3 R_cw = R_wc.transpose();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud.xyz[i] = R_cw * (cloud.xyz[i] - pos);
    Vec3 n = R_cw * cloud.normal[i];
    if (n.dot(cloud.xyz[i]) > 0) n = -n;
    cloud.normal[i] = n;
  }
  for (AffordanceInstance& inst : scene.instances)
    for (int j = 0; j < 4; ++j) inst.keypoints[j] = R_cw * (inst.keypoints[j] - pos);

  cloud.pixel_index.assign(cloud.size(), -1);
  return scene;
}

RenderResult render_views(const SceneGroundTruth& scene, const CameraIntrinsics& k) {
  k.validate();
  RenderResult out;
  std::size_t n_pix = static_cast<std::size_t>(k.width) * k.height;
  out.image.width = k.width;
  out.image.height = k.height;
  out.image.depth.assign(n_pix, 0.0f);
  out.image.rgb.assign(3 * n_pix, 0.0f);
  out.pixel_labels.assign(n_pix, 0);
  out.pixel_source.assign(n_pix, -1);

  bool any_object = false;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const Vec3& p = scene.cloud.xyz[i];
    if (!(p.z() > 0)) continue;
    long u = std::lround(k.fx * p.x() / p.z() + k.cx);
    long v = std::lround(k.fy * p.y() / p.z() + k.cy);
    if (u < 0 || u >= k.width || v < 0 || v >= k.height) continue;
    std::size_t pix = static_cast<std::size_t>(v) * k.width + u;
    float z = static_cast<float>(p.z());
    if (out.image.depth[pix] != 0.0f && out.image.depth[pix] <= z) continue;
    out.image.depth[pix] = z;
    out.pixel_source[pix] = static_cast<std::int64_t>(i);
    out.pixel_labels[pix] = scene.labels[i];
    const Vec3& c = scene.cloud.rgb[i];
    out.image.rgb[3 * pix] = static_cast<float>(c.x());
    out.image.rgb[3 * pix + 1] = static_cast<float>(c.y());
    out.image.rgb[3 * pix + 2] = static_cast<float>(c.z());
    if (scene.labels[i] != 0) any_object = true;
  }
  if (!any_object) throw DataError("render: view contains no labeled object surface");
  return out;
}

std::vector<int> instance_of_point(const SceneGroundTruth& scene) {
  std::vector<int> map(scene.cloud.size(), -1);
  for (const AffordanceInstance& inst : scene.instances)
    for (std::int64_t idx : inst.points) map[static_cast<std::size_t>(idx)] = inst.id;
  return map;
}

OffsetTargets ground_truth_offsets(const SceneGroundTruth& scene,
                                   const std::vector<std::size_t>& subset) {
  std::vector<int> owner = instance_of_point(scene);
  OffsetTargets out;
  out.offsets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(subset.size()), 12);
  out.mask = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(subset.size()), 4);
  for (std::size_t row = 0; row < subset.size(); ++row) {
    int inst_id = owner[subset[row]];
    if (inst_id < 0) continue;
    const AffordanceInstance& inst = scene.instances[static_cast<std::size_t>(inst_id)];
    const Vec3& p = scene.cloud.xyz[subset[row]];
    for (int j = 0; j < 4; ++j) {
      Vec3 of = inst.keypoints[j] - p;
      for (int c = 0; c < 3; ++c)
        out.offsets(static_cast<Eigen::Index>(row), 3 * j + c) = of[c];
      out.mask(static_cast<Eigen::Index>(row), j) = 1.0;
    }
  }
  return out;
}

}  // namespace affkp
