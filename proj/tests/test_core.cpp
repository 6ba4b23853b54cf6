#include <doctest.h>

#include <random>

#include "uwsysid/core.hpp"

using namespace uwsysid;

TEST_CASE("euler_to_rotation zero angles is identity") {
  CHECK(euler_to_rotation(Eigen::Vector3d::Zero())
            .isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST_CASE("euler_to_rotation yaw pi/2 maps body x to inertial y") {
  const Eigen::Matrix3d r =
      euler_to_rotation(Eigen::Vector3d(0.0, 0.0, kPi / 2));
  const Eigen::Vector3d mapped = r * Eigen::Vector3d::UnitX();
  CHECK(mapped.isApprox(Eigen::Vector3d::UnitY(), 1e-12));
}

TEST_CASE("euler_to_rotation orthonormal det +1 on 10000 random triples") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  double worst_ortho = 0.0, worst_det = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Matrix3d r = euler_to_rotation(
        Eigen::Vector3d(ang(rng), ang(rng), ang(rng)));
    worst_ortho = std::max(
        worst_ortho,
        (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
    worst_det = std::max(worst_det, std::abs(r.determinant() - 1.0));
  }
  CHECK(worst_ortho < 1e-10);
  CHECK(worst_det < 1e-10);
}

TEST_CASE("euler_to_rotation rejects non-finite input") {
  Eigen::Vector3d mu(0.0, std::nan(""), 0.0);
  CHECK_THROWS_AS(euler_to_rotation(mu), NumericError);
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(2 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wrap_angle(-3 * kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));  // pi maps to itself

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> wide(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = wide(rng);
    const double w = wrap_angle(a);
    CHECK(w > -kPi - 1e-12);
    CHECK(w <= kPi + 1e-12);
    CHECK(wrap_angle(w) == w);  // idempotent
  }
}

TEST_CASE("angle_diff stays in (-pi, pi]") {
  CHECK(angle_diff(3.1, -3.1) == doctest::Approx(6.2 - 2 * kPi));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const double d = angle_diff(ang(rng), ang(rng));
    CHECK(d > -kPi - 1e-12);
    CHECK(d <= kPi + 1e-12);
  }
}

TEST_CASE("kinematic_step with zero twist is identity for any dt") {
  VehicleState s;
  s.position << 1.0, -2.0, 3.0;
  s.euler << 0.2, -0.3, 1.1;
  for (double dt : {0.0, 0.02, 1.0, 100.0}) {
    const VehicleState next = kinematic_step(s, dt);
    CHECK(next.position == s.position);
    CHECK(next.euler == s.euler);
  }
}

TEST_CASE("kinematic_step dt=0 is identity with nonzero twist") {
  VehicleState s;
  s.lin_vel << 3.0, -1.0, 0.5;
  s.ang_vel << 0.1, 0.2, -0.4;
  const VehicleState next = kinematic_step(s, 0.0);
  CHECK(next.position == s.position);
  CHECK(next.euler == s.euler);
}

TEST_CASE("kinematic_step rotates the body velocity into the world frame") {
  VehicleState s;
  s.euler << 0.0, 0.0, kPi / 2;
  s.lin_vel << 1.0, 0.0, 0.0;
  const VehicleState next = kinematic_step(s, 0.02);
  CHECK(next.position.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(next.position.y() == doctest::Approx(0.02));
  CHECK(next.position.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kinematic_step enforces the gimbal guard") {
  VehicleState s;
  s.euler << 0.0, kPi / 2 - 0.05, 0.0;  // inside the default margin after step
  s.ang_vel << 0.0, 1.0, 0.0;
  CHECK_THROWS_AS(kinematic_step(s, 0.02), NumericError);
  CHECK_NOTHROW(kinematic_step(s, 0.02, 0.0));  // margin 0 admits it
}

TEST_CASE("VehicleState vector round trip and validation") {
  VehicleState s;
  s.position << 1, 2, 3;
  s.euler << 0.1, 0.2, 0.3;
  s.lin_vel << 4, 5, 6;
  s.ang_vel << 7, 8, 9;
  CHECK(VehicleState::from_vector(s.to_vector()).to_vector() == s.to_vector());
  CHECK_NOTHROW(s.validate());
  s.position.x() = std::nan("");
  CHECK_THROWS_AS(s.validate(), NumericError);
}

TEST_CASE("ControlInput validation") {
  ControlInput u(Eigen::VectorXd::Constant(4, 0.5));
  CHECK_NOTHROW(u.validate());
  u.channels(2) = 1.5;
  CHECK_THROWS_AS(u.validate(), DataError);
}
