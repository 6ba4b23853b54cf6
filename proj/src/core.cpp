#include "uwsysid/core.hpp"

#include <cmath>

namespace uwsysid {

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw NumericError("wrap_angle: non-finite angle");
  double w = std::fmod(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  else if (w > kPi) w -= 2.0 * kPi;
  return w;
}

Vector12d VehicleState::to_vector() const {
  Vector12d x;
  x << position, euler, lin_vel, ang_vel;
  return x;
}

VehicleState VehicleState::from_vector(const Vector12d& x) {
  VehicleState s;
  s.position = x.segment<3>(0);
  s.euler = x.segment<3>(3);
  s.lin_vel = x.segment<3>(6);
  s.ang_vel = x.segment<3>(9);
  return s;
}

void VehicleState::validate(double gimbal_margin) const {
  if (!to_vector().allFinite())
    throw NumericError("VehicleState: non-finite entry");
  if (std::abs(euler.y()) >= kPi / 2.0 - gimbal_margin)
    throw NumericError("VehicleState: pitch inside gimbal guard");
}

void ControlInput::validate() const {
  if (!channels.allFinite())
    throw DataError("ControlInput: non-finite channel");
  if ((channels.array().abs() > 1.0).any())
    throw DataError("ControlInput: channel outside [-1, 1]");
}

Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& mu) {
  if (!mu.allFinite())
    throw NumericError("euler_to_rotation: non-finite angles");
  const double cphi = std::cos(mu.x()), sphi = std::sin(mu.x());
  const double cth = std::cos(mu.y()), sth = std::sin(mu.y());
  const double cpsi = std::cos(mu.z()), spsi = std::sin(mu.z());
  // R = Rz(psi) * Ry(theta) * Rx(phi)
  Eigen::Matrix3d r;
  r << cpsi * cth, cpsi * sth * sphi - spsi * cphi, cpsi * sth * cphi + spsi * sphi,
       spsi * cth, spsi * sth * sphi + cpsi * cphi, spsi * sth * cphi - cpsi * sphi,
       -sth, cth * sphi, cth * cphi;
  return r;
}

VehicleState kinematic_step(const VehicleState& state, double dt,
                            double gimbal_margin) {
  if (!(dt >= 0.0)) throw ConfigError("kinematic_step: dt must be >= 0");
  VehicleState next = state;
  next.position += dt * euler_to_rotation(state.euler) * state.lin_vel;
  next.euler += dt * state.ang_vel;
  if (std::abs(next.euler.y()) >= kPi / 2.0 - gimbal_margin)
    throw NumericError("kinematic_step: pitch crossed gimbal guard");
  for (int i = 0; i < 3; ++i) next.euler(i) = wrap_angle(next.euler(i));
  return next;
}

}  // namespace uwsysid
