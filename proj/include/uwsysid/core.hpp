#pragma once

#include <Eigen/Dense>

#include "uwsysid/errors.hpp"

namespace uwsysid {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

inline constexpr double kPi = 3.14159265358979323846;

// Margin kept between |pitch| and pi/2 before the ZYX kinematics are
// considered singular.
inline constexpr double kDefaultGimbalMargin = 0.1;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Wrapped difference a - b, in (-pi, pi].
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

/// Full 12-dimensional vehicle state: inertial position, ZYX Euler attitude,
/// body-frame linear and angular velocity.
struct VehicleState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // x, y, z [m]
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();     // phi, theta, psi [rad]
  Eigen::Vector3d lin_vel = Eigen::Vector3d::Zero();   // u, v, w [m/s], body
  Eigen::Vector3d ang_vel = Eigen::Vector3d::Zero();   // p, q, r [rad/s], body

  Vector6d twist() const {
    Vector6d nu;
    nu << lin_vel, ang_vel;
    return nu;
  }
  void set_twist(const Vector6d& nu) {
    lin_vel = nu.head<3>();
    ang_vel = nu.tail<3>();
  }

  Vector12d to_vector() const;
  static VehicleState from_vector(const Vector12d& x);

  /// Throws NumericError if any entry is non-finite or the pitch violates the
  /// gimbal guard. Angles are expected already wrapped.
  void validate(double gimbal_margin = kDefaultGimbalMargin) const;
};

/// Per-actuator command vector, each channel in [-1, 1].
struct ControlInput {
  Eigen::VectorXd channels;

  ControlInput() = default;
  explicit ControlInput(Eigen::VectorXd c) : channels(std::move(c)) {}
  int dim() const { return static_cast<int>(channels.size()); }

  /// Throws DataError if any channel leaves [-1, 1] or is non-finite.
  void validate() const;
};

/// ZYX (yaw-pitch-roll) body-to-inertial rotation matrix.
/// Throws NumericError on non-finite input.
Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& mu);

/// Advances pose by one explicit step with the velocities held fixed:
///   p'  = p + dt * R(mu) * v
///   mu' = mu + dt * omega        (small-angle Euler kinematics)
/// Angles are re-wrapped. Throws NumericError if the updated pitch crosses
/// the gimbal guard.
VehicleState kinematic_step(const VehicleState& state, double dt,
                            double gimbal_margin = kDefaultGimbalMargin);

}  // namespace uwsysid
