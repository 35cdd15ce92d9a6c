#pragma once

#include "affkp/scene.hpp"

namespace affkp {

// Origin plus right-handed orthonormal axes; where and how to act.
struct ExecutionFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 x_axis = Vec3::UnitX();
  Vec3 y_axis = Vec3::UnitY();
  Vec3 z_axis = Vec3::UnitZ();

  Mat3 rotation() const {
    Mat3 r;
    r.col(0) = x_axis;
    r.col(1) = y_axis;
    r.col(2) = z_axis;
    return r;
  }
  void validate() const;  // orthonormality and det = +1 to 1e-9
};

// Per-affordance frame rules. The task-dependent axis is taken exactly from
// its keypoint pair; the second axis is Gram-Schmidt-orthogonalized against
// it before the cross product:
//   grasp:         origin mean(kp1..4); y = kp4-kp3; x from kp2-kp1; z = x*y
//   contain/scoop: origin mean(kp1..4); y = kp4-kp3; z from kp2-kp1; x = y*z
//   w-grasp:       origin (kp3+kp4)/2;  y = kp2-kp1; x from kp4-kp3; z = x*y
//   cut/pound:     origin kp2 (contact); y = kp2-kp1; x from kp4-kp3; z = x*y
// Throws DataError when a defining pair is degenerate.
ExecutionFrame frame_from_quadruplet(const KeypointQuadruplet& q, std::uint8_t affordance);

}  // namespace affkp
