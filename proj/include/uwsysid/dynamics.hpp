#pragma once

#include <functional>
#include <string>

#include "uwsysid/ingest.hpp"

namespace uwsysid {

/// Parameters of the 6-DoF marine-vehicle equation of motion
///   M nu_dot + C(nu) nu + D(nu) nu + g(eta) = w(u)
/// with M = M_rb + M_a, C = C_rb + C_a, diagonal linear+quadratic damping,
/// gravity/buoyancy restoring, and an affine thruster map through a constant
/// allocation matrix. Body frame is NED (z down).
struct FossenParams {
  Matrix6d m_rb = Matrix6d::Zero();
  Matrix6d m_a = Matrix6d::Zero();
  Vector6d d_lin = Vector6d::Zero();   // linear damping diagonal
  Vector6d d_quad = Vector6d::Zero();  // quadratic damping diagonal
  double weight = 0.0;                 // m*g [N]
  double buoyancy = 0.0;               // rho*g*V [N]
  Eigen::Vector3d r_g = Eigen::Vector3d::Zero();  // center of gravity, body
  Eigen::Vector3d r_b = Eigen::Vector3d::Zero();  // center of buoyancy, body
  Eigen::MatrixXd thrust_alloc;        // 6 x m allocation matrix
  Eigen::VectorXd thrust_gain;         // per-thruster N per unit command
  Eigen::VectorXd thrust_bias;         // per-thruster offset [N]

  int input_dim() const { return static_cast<int>(thrust_gain.size()); }
  Matrix6d inertia() const { return m_rb + m_a; }
  Matrix6d coriolis(const Vector6d& nu) const;
  Matrix6d damping(const Vector6d& nu) const;
  Vector6d restoring(const Eigen::Vector3d& euler) const;
  Vector6d wrench(const ControlInput& u) const;

  /// Throws ConfigError if M is not symmetric positive definite or the
  /// thruster map dimensions disagree.
  void validate() const;
};

/// Plausible placeholder parameter set for an 8-thruster ROV. Not an
/// identified model; intended for synthetic data and tests.
FossenParams placeholder_rov_params();

/// Key-value parameter file with named row-major matrices. `version` key is
/// mandatory.
FossenParams load_fossen_params(const std::string& path);
void save_fossen_params(const FossenParams& p, const std::string& path);

/// Body-twist derivative nu_dot = M^-1 (w(u) - C nu - D nu - g(eta)).
Vector6d fossen_accel(const FossenParams& params, const VehicleState& state,
                      const ControlInput& input);

/// Double-integrator baseline: constant gain matrices mapping commands to
/// body-frame accelerations.
struct DIModel {
  Eigen::MatrixXd k_lin;  // 3 x m
  Eigen::MatrixXd k_ang;  // 3 x m
  double dt = 0.02;
  double lambda = 0.0;
};

/// Ridge fit of the gain matrices against forward-difference accelerations,
/// segment by segment. Throws DataError when lambda = 0 and the input
/// Gramian is rank-deficient.
DIModel di_fit(const Dataset& ds, double lambda);

/// One explicit-Euler step of the double-integrator model.
VehicleState di_step(const DIModel& model, const VehicleState& state,
                     const ControlInput& input);

void save_di(const DIModel& model, const std::string& path,
             const std::string& provenance = "");
DIModel load_di(const std::string& path);

using TwistDeriv =
    std::function<Vector6d(const VehicleState&, const ControlInput&)>;

/// Explicit Euler: twist advanced by dt*f, pose advanced kinematically with
/// the pre-update twist.
VehicleState integrate_euler(const TwistDeriv& f, const VehicleState& state,
                             const ControlInput& input, double dt);

/// Classical RK4 on a generic state vector field (used by both the
/// 12-state path and scalar convergence checks).
Eigen::VectorXd rk4_step(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double dt);

/// Generic explicit Euler on the same vector-field form as rk4_step.
Eigen::VectorXd euler_step(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double dt);

/// RK4 on the full 12-state field (kinematics folded into the field);
/// angles re-wrapped afterwards.
VehicleState integrate_rk4(const TwistDeriv& f, const VehicleState& state,
                           const ControlInput& input, double dt);

/// Band-limited pseudo-random excitation: per channel a fixed number of
/// random-phase sinusoids with frequencies in [f_min, f_max], scaled to the
/// requested amplitude and clipped to [-1, 1].
struct ExcitationSpec {
  double amplitude = 0.6;
  double f_min_hz = 0.02;
  double f_max_hz = 0.4;
  int harmonics = 6;
  /// Per-channel amplitude scale; empty means 1 for every channel.
  Eigen::VectorXd channel_scale;
};

struct SynthOptions {
  ExcitationSpec excitation;
  double duration_s = 60.0;
  double rate_hz = 50.0;
  double noise_std = 0.0;      // measurement noise on every state entry
  double divergence_bound = 1e3;
  VehicleState initial_state;  // default: equilibrium at the origin
};

/// Simulates the Fossen model with RK4 under the excitation and emits a
/// dataset; deterministic per seed. Throws NumericError with the offending
/// time on divergence.
Dataset synth_generate(const FossenParams& params, const SynthOptions& opts,
                       std::uint64_t seed);

}  // namespace uwsysid
