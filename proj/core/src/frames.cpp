#include "affkp/frames.hpp"

#include <Eigen/Geometry>

#include <cmath>

#include "affkp/error.hpp"

namespace affkp {

namespace {

constexpr double kDegenerate = 1e-6;

Vec3 direction(const Vec3& from, const Vec3& to, const char* pair) {
  Vec3 d = to - from;
  double n = d.norm();
  if (n <= kDegenerate)
    throw DataError(std::string("frame: keypoints ") + pair + " are degenerate");
  return d / n;
}

// Unit component of v orthogonal to the (unit) primary axis.
Vec3 orthogonalized(const Vec3& v, const Vec3& primary, const char* pair) {
  Vec3 r = v - v.dot(primary) * primary;
  double n = r.norm();
  if (n <= kDegenerate)
    throw DataError(std::string("frame: keypoints ") + pair +
                    " are parallel to the primary axis");
  return r / n;
}

}  // namespace

void ExecutionFrame::validate() const {
  constexpr double tol = 1e-9;
  auto unit = [&](const Vec3& v) { return std::abs(v.norm() - 1.0) <= tol; };
  if (!unit(x_axis) || !unit(y_axis) || !unit(z_axis))
    throw DataError("frame: axes not unit length");
  if (std::abs(x_axis.dot(y_axis)) > tol || std::abs(y_axis.dot(z_axis)) > tol ||
      std::abs(x_axis.dot(z_axis)) > tol)
    throw DataError("frame: axes not orthogonal");
  if (std::abs(rotation().determinant() - 1.0) > tol)
    throw DataError("frame: not right-handed");
  if (!origin.allFinite()) throw DataError("frame: non-finite origin");
}

ExecutionFrame frame_from_quadruplet(const KeypointQuadruplet& q, std::uint8_t affordance) {
  ExecutionFrame f;
  switch (static_cast<Affordance>(affordance)) {
    case Affordance::kGrasp: {
      f.origin = q.centroid();
      f.y_axis = direction(q[2], q[3], "3,4");
      f.x_axis = orthogonalized(q[1] - q[0], f.y_axis, "1,2");
      f.z_axis = f.x_axis.cross(f.y_axis);
      break;
    }
    case Affordance::kContain:
    case Affordance::kScoop: {
      f.origin = q.centroid();
      f.y_axis = direction(q[2], q[3], "3,4");
      f.z_axis = orthogonalized(q[1] - q[0], f.y_axis, "1,2");
      f.x_axis = f.y_axis.cross(f.z_axis);
      break;
    }
    case Affordance::kWrapGrasp: {
      f.origin = 0.5 * (q[2] + q[3]);
      f.y_axis = direction(q[0], q[1], "1,2");
      f.x_axis = orthogonalized(q[3] - q[2], f.y_axis, "3,4");
      f.z_axis = f.x_axis.cross(f.y_axis);
      break;
    }
    case Affordance::kCut:
    case Affordance::kPound: {
      f.origin = q[1];  // stated contact point
      f.y_axis = direction(q[0], q[1], "1,2");
      f.x_axis = orthogonalized(q[3] - q[2], f.y_axis, "3,4");
      f.z_axis = f.x_axis.cross(f.y_axis);
      break;
    }
    default:
      throw DataError("frame: affordance label " + std::to_string(affordance) +
                      " has no frame rule");
  }
  // Cross products of exact unit orthogonal axes; renormalize to push
  // round-off below the 1e-9 gates.
  f.z_axis.normalize();
  if (static_cast<Affordance>(affordance) == Affordance::kContain ||
      static_cast<Affordance>(affordance) == Affordance::kScoop)
    f.x_axis.normalize();
  f.validate();
  return f;
}

}  // namespace affkp
