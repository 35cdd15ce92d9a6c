#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "affkp/frames.hpp"
#include "affkp/rng.hpp"

using namespace affkp;

namespace {

KeypointQuadruplet random_quad(Rng& rng) {
  KeypointQuadruplet q;
  for (;;) {
    for (int j = 0; j < 4; ++j)
      q[j] = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.3, 0.8));
    // reject near-degenerate pairs so every affordance rule applies
    bool ok = (q[1] - q[0]).norm() > 0.01 && (q[3] - q[2]).norm() > 0.01;
    Vec3 a = (q[1] - q[0]).normalized(), b = (q[3] - q[2]).normalized();
    ok = ok && std::abs(a.dot(b)) < 0.99;
    if (ok) return q;
  }
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond quat(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  quat.normalize();
  return quat.toRotationMatrix();
}

}  // namespace

TEST_CASE("grasp frame on the worked quadruplet") {
  KeypointQuadruplet q;
  q[0] = Vec3(0, 0, 0);
  q[1] = Vec3(0.1, 0, 0);
  q[2] = Vec3(0.05, -0.02, 0);
  q[3] = Vec3(0.05, 0.02, 0);
  ExecutionFrame f = frame_from_quadruplet(q, 1);
  CHECK((f.origin - Vec3(0.05, 0, 0)).norm() < 1e-12);
  CHECK((f.y_axis - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK((f.x_axis - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((f.z_axis - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("per-affordance origin rules") {
  Rng rng(4);
  KeypointQuadruplet q = random_quad(rng);
  CHECK((frame_from_quadruplet(q, 1).origin - q.centroid()).norm() < 1e-12);   // grasp
  CHECK((frame_from_quadruplet(q, 4).origin - q.centroid()).norm() < 1e-12);   // contain
  CHECK((frame_from_quadruplet(q, 3).origin - q.centroid()).norm() < 1e-12);   // scoop
  CHECK((frame_from_quadruplet(q, 6).origin - 0.5 * (q[2] + q[3])).norm() < 1e-12);
  CHECK((frame_from_quadruplet(q, 2).origin - q[1]).norm() < 1e-12);           // cut
  CHECK((frame_from_quadruplet(q, 5).origin - q[1]).norm() < 1e-12);           // pound
}

TEST_CASE("frames are orthonormal and right-handed for random quadruplets") {
  Rng rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    KeypointQuadruplet q = random_quad(rng);
    for (std::uint8_t aff = 1; aff <= 6; ++aff) {
      ExecutionFrame f = frame_from_quadruplet(q, aff);
      f.validate();  // throws on any violation
      CHECK(std::abs(f.rotation().determinant() - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("frames are equivariant under rigid motion") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    KeypointQuadruplet q = random_quad(rng);
    Mat3 rot = random_rotation(rng);
    Vec3 t(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    for (std::uint8_t aff = 1; aff <= 6; ++aff) {
      ExecutionFrame base = frame_from_quadruplet(q, aff);
      KeypointQuadruplet moved;
      for (int j = 0; j < 4; ++j) moved[j] = rot * q[j] + t;
      ExecutionFrame f = frame_from_quadruplet(moved, aff);
      CHECK((f.origin - (rot * base.origin + t)).norm() < 1e-6);
      CHECK((f.x_axis - rot * base.x_axis).norm() < 1e-6);
      CHECK((f.y_axis - rot * base.y_axis).norm() < 1e-6);
      CHECK((f.z_axis - rot * base.z_axis).norm() < 1e-6);
    }
  }
}

TEST_CASE("translation leaves the axes untouched") {
  Rng rng(21);
  KeypointQuadruplet q = random_quad(rng);
  Vec3 t(0.3, -0.2, 0.9);
  KeypointQuadruplet moved;
  for (int j = 0; j < 4; ++j) moved[j] = q[j] + t;
  for (std::uint8_t aff = 1; aff <= 6; ++aff) {
    ExecutionFrame a = frame_from_quadruplet(q, aff);
    ExecutionFrame b = frame_from_quadruplet(moved, aff);
    CHECK((b.origin - (a.origin + t)).norm() < 1e-9);
    CHECK((b.x_axis - a.x_axis).norm() < 1e-12);
    CHECK((b.y_axis - a.y_axis).norm() < 1e-12);
    CHECK((b.z_axis - a.z_axis).norm() < 1e-12);
  }
}

TEST_CASE("degenerate keypoint pairs are rejected by name") {
  KeypointQuadruplet q;
  q[0] = Vec3(0, 0, 0);
  q[1] = Vec3(0, 0, 0);  // collapsed primary pair for cut
  q[2] = Vec3(0, -0.02, 0);
  q[3] = Vec3(0, 0.02, 0);
  CHECK_THROWS_AS(frame_from_quadruplet(q, 2), DataError);

  KeypointQuadruplet parallel;
  parallel[0] = Vec3(0, 0, 0);
  parallel[1] = Vec3(0.1, 0, 0);
  parallel[2] = Vec3(0.2, 0, 0);
  parallel[3] = Vec3(0.4, 0, 0);  // same direction as the primary axis
  CHECK_THROWS_AS(frame_from_quadruplet(parallel, 6), DataError);

  CHECK_THROWS_AS(frame_from_quadruplet(q, 0), DataError);
}
