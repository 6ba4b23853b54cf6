#include "uwsysid/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "uwsysid/serialize.hpp"

namespace uwsysid {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return s;
}

}  // namespace

Matrix6d FossenParams::coriolis(const Vector6d& nu) const {
  const Matrix6d m = inertia();
  const Eigen::Vector3d v = nu.head<3>(), w = nu.tail<3>();
  const Eigen::Vector3d h1 = m.topLeftCorner<3, 3>() * v + m.topRightCorner<3, 3>() * w;
  const Eigen::Vector3d h2 = m.bottomLeftCorner<3, 3>() * v + m.bottomRightCorner<3, 3>() * w;
  Matrix6d c = Matrix6d::Zero();
  c.topRightCorner<3, 3>() = -skew(h1);
  c.bottomLeftCorner<3, 3>() = -skew(h1);
  c.bottomRightCorner<3, 3>() = -skew(h2);
  return c;
}

Matrix6d FossenParams::damping(const Vector6d& nu) const {
  return (d_lin + d_quad.cwiseProduct(nu.cwiseAbs())).asDiagonal();
}

Vector6d FossenParams::restoring(const Eigen::Vector3d& euler) const {
  const double sphi = std::sin(euler.x()), cphi = std::cos(euler.x());
  const double sth = std::sin(euler.y()), cth = std::cos(euler.y());
  const double dwb = weight - buoyancy;
  const Eigen::Vector3d moment_arm = r_g * weight - r_b * buoyancy;
  Vector6d g;
  g << dwb * sth,
      -dwb * cth * sphi,
      -dwb * cth * cphi,
      -moment_arm.y() * cth * cphi + moment_arm.z() * cth * sphi,
      moment_arm.z() * sth + moment_arm.x() * cth * cphi,
      -moment_arm.x() * cth * sphi - moment_arm.y() * sth;
  return g;
}

Vector6d FossenParams::wrench(const ControlInput& u) const {
  if (u.dim() != input_dim())
    throw DataError("fossen wrench: input dimension mismatch");
  return thrust_alloc *
         (thrust_gain.cwiseProduct(u.channels) + thrust_bias);
}

void FossenParams::validate() const {
  const Matrix6d m = inertia();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw ConfigError("FossenParams: inertia matrix not symmetric");
  Eigen::LLT<Matrix6d> llt(m);
  if (llt.info() != Eigen::Success)
    throw ConfigError("FossenParams: inertia matrix not positive definite");
  if ((d_lin.array() < 0).any() || (d_quad.array() < 0).any())
    throw ConfigError("FossenParams: negative damping coefficient");
  if (thrust_alloc.rows() != 6 || thrust_alloc.cols() != thrust_gain.size() ||
      thrust_bias.size() != thrust_gain.size())
    throw ConfigError("FossenParams: thruster map dimension mismatch");
}

FossenParams placeholder_rov_params() {
  FossenParams p;
  const double mass = 13.5;
  p.m_rb = Matrix6d::Zero();
  p.m_rb.diagonal() << mass, mass, mass, 0.26, 0.23, 0.37;
  p.m_a = Matrix6d::Zero();
  p.m_a.diagonal() << 6.36, 7.12, 18.68, 0.189, 0.135, 0.222;
  p.d_lin << 13.7, 6.0, 33.0, 0.9, 0.8, 3.6;
  p.d_quad << 141.0, 217.0, 190.0, 1.19, 0.47, 6.0;
  p.weight = mass * 9.81;
  p.buoyancy = p.weight;  // neutrally trimmed
  p.r_g = Eigen::Vector3d::Zero();
  p.r_b = Eigen::Vector3d(0.0, 0.0, -0.10);  // CB above CG, NED
  // 8 thrusters: 4 vectored horizontal (surge/sway/yaw), 4 vertical
  // (heave/roll/pitch).
  p.thrust_alloc.resize(6, 8);
  p.thrust_alloc << 0.707, 0.707, -0.707, -0.707, 0, 0, 0, 0,
                    -0.707, 0.707, -0.707, 0.707, 0, 0, 0, 0,
                    0, 0, 0, 0, -1, -1, -1, -1,
                    0, 0, 0, 0, 0.218, -0.218, 0.218, -0.218,
                    0, 0, 0, 0, 0.12, 0.12, -0.12, -0.12,
                    0.1888, -0.1888, -0.1888, 0.1888, 0, 0, 0, 0;
  p.thrust_gain = Eigen::VectorXd::Constant(8, 20.0);
  p.thrust_bias = Eigen::VectorXd::Zero(8);
  return p;
}

namespace {

void put_values(std::ostream& out, const std::string& key, const double* v,
                int n) {
  out << key;
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), " %.17g", v[i]);
    out << buf;
  }
  out << "\n";
}

}  // namespace

void save_fossen_params(const FossenParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write params file: " + path);
  out << "version 1\n";
  out << "input_dim " << p.input_dim() << "\n";
  // Matrices are row-major lists.
  Eigen::Matrix<double, 6, 6, Eigen::RowMajor> m_rb = p.m_rb, m_a = p.m_a;
  put_values(out, "m_rb", m_rb.data(), 36);
  put_values(out, "m_a", m_a.data(), 36);
  put_values(out, "d_lin", p.d_lin.data(), 6);
  put_values(out, "d_quad", p.d_quad.data(), 6);
  put_values(out, "weight", &p.weight, 1);
  put_values(out, "buoyancy", &p.buoyancy, 1);
  put_values(out, "r_g", p.r_g.data(), 3);
  put_values(out, "r_b", p.r_b.data(), 3);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ta =
      p.thrust_alloc;
  put_values(out, "thrust_alloc", ta.data(), static_cast<int>(ta.size()));
  put_values(out, "thrust_gain", p.thrust_gain.data(), p.input_dim());
  put_values(out, "thrust_bias", p.thrust_bias.data(), p.input_dim());
}

FossenParams load_fossen_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open params file: " + path);
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    kv[key] = std::move(vals);
  }
  auto get = [&](const std::string& key, int n) -> const std::vector<double>& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError(path + ": missing key '" + key + "'");
    if (n >= 0 && static_cast<int>(it->second.size()) != n)
      throw ConfigError(path + ": key '" + key + "' expects " +
                        std::to_string(n) + " values");
    return it->second;
  };
  if (get("version", 1)[0] != 1.0)
    throw ConfigError(path + ": unsupported params version");
  const int m = static_cast<int>(get("input_dim", 1)[0]);
  if (m <= 0) throw ConfigError(path + ": input_dim must be positive");

  FossenParams p;
  auto fill = [](auto& mat, const std::vector<double>& v) {
    int k = 0;
    for (int i = 0; i < mat.rows(); ++i)
      for (int j = 0; j < mat.cols(); ++j) mat(i, j) = v[k++];
  };
  fill(p.m_rb, get("m_rb", 36));
  fill(p.m_a, get("m_a", 36));
  fill(p.d_lin, get("d_lin", 6));
  fill(p.d_quad, get("d_quad", 6));
  p.weight = get("weight", 1)[0];
  p.buoyancy = get("buoyancy", 1)[0];
  fill(p.r_g, get("r_g", 3));
  fill(p.r_b, get("r_b", 3));
  p.thrust_alloc.resize(6, m);
  fill(p.thrust_alloc, get("thrust_alloc", 6 * m));
  p.thrust_gain.resize(m);
  fill(p.thrust_gain, get("thrust_gain", m));
  p.thrust_bias.resize(m);
  fill(p.thrust_bias, get("thrust_bias", m));
  p.validate();
  return p;
}

Vector6d fossen_accel(const FossenParams& params, const VehicleState& state,
                      const ControlInput& input) {
  const Vector6d nu = state.twist();
  const Vector6d rhs = params.wrench(input) - params.coriolis(nu) * nu -
                       params.damping(nu) * nu - params.restoring(state.euler);
  Eigen::LDLT<Matrix6d> ldlt(params.inertia());
  if (ldlt.info() != Eigen::Success)
    throw ConfigError("fossen_accel: singular inertia matrix");
  return ldlt.solve(rhs);
}

DIModel di_fit(const Dataset& ds, double lambda) {
  if (lambda < 0) throw ConfigError("di_fit: lambda must be >= 0");
  const int m = ds.input_dim;
  std::vector<int> seg_pairs;
  int total = 0;
  for (const auto& seg : ds.segments) total += std::max(0, seg.size() - 1);
  if (total < m + 1)
    throw DataError("di_fit: need at least m+1 snapshot pairs");

  Eigen::MatrixXd u(m, total);      // one command column per pair
  Eigen::MatrixXd acc(6, total);    // forward-difference accelerations
  int j = 0;
  for (const auto& seg : ds.segments) {
    for (int k = 0; k + 1 < seg.size(); ++k, ++j) {
      u.col(j) = seg.inputs[k].channels;
      acc.col(j) = (seg.states[k + 1].twist() - seg.states[k].twist()) / ds.dt;
    }
  }

  Eigen::MatrixXd gram = u * u.transpose();
  if (lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.eigenvalues().minCoeff() <
        1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw DataError("di_fit: ill-posed (rank-deficient inputs, lambda = 0)");
  }
  gram.diagonal().array() += lambda;
  Eigen::MatrixXd k =
      gram.ldlt().solve(u * acc.transpose()).transpose();  // 6 x m

  DIModel model;
  model.k_lin = k.topRows<3>();
  model.k_ang = k.bottomRows<3>();
  model.dt = ds.dt;
  model.lambda = lambda;
  return model;
}

void save_di(const DIModel& model, const std::string& path,
             const std::string& provenance) {
  ModelWriter w(path, "di", 1);
  if (!provenance.empty()) w.text("provenance", provenance);
  w.integer("m", model.k_lin.cols());
  w.scalar("dt", model.dt);
  w.scalar("lambda", model.lambda);
  w.array("k_lin", model.k_lin);
  w.array("k_ang", model.k_ang);
}

DIModel load_di(const std::string& path) {
  ModelReader r(path, "di", 1);
  DIModel model;
  const int m = static_cast<int>(r.integer("m"));
  model.dt = r.scalar("dt");
  model.lambda = r.scalar("lambda");
  model.k_lin = r.array("k_lin", 3, m);
  model.k_ang = r.array("k_ang", 3, m);
  return model;
}

VehicleState di_step(const DIModel& model, const VehicleState& state,
                     const ControlInput& input) {
  VehicleState next = kinematic_step(state, model.dt);
  next.lin_vel = state.lin_vel + model.dt * (model.k_lin * input.channels);
  next.ang_vel = state.ang_vel + model.dt * (model.k_ang * input.channels);
  return next;
}

VehicleState integrate_euler(const TwistDeriv& f, const VehicleState& state,
                             const ControlInput& input, double dt) {
  if (!(dt > 0)) throw ConfigError("integrate_euler: dt must be > 0");
  const Vector6d nu_dot = f(state, input);
  if (!nu_dot.allFinite())
    throw NumericError("integrate_euler: non-finite twist derivative");
  VehicleState next = kinematic_step(state, dt);
  next.set_twist(state.twist() + dt * nu_dot);
  return next;
}

Eigen::VectorXd euler_step(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double dt) {
  return x + dt * f(x);
}

Eigen::VectorXd rk4_step(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double dt) {
  const Eigen::VectorXd k1 = f(x);
  const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

// Full 12-state field: pose kinematics plus the supplied twist derivative.
Eigen::VectorXd full_state_deriv(const TwistDeriv& f, const Eigen::VectorXd& x,
                                 const ControlInput& input) {
  VehicleState s = VehicleState::from_vector(x);
  Eigen::VectorXd dx(12);
  dx.segment<3>(0) = euler_to_rotation(s.euler) * s.lin_vel;
  dx.segment<3>(3) = s.ang_vel;
  dx.segment<6>(6) = f(s, input);
  return dx;
}

}  // namespace

VehicleState integrate_rk4(const TwistDeriv& f, const VehicleState& state,
                           const ControlInput& input, double dt) {
  if (!(dt > 0)) throw ConfigError("integrate_rk4: dt must be > 0");
  auto field = [&](const Eigen::VectorXd& x) {
    return full_state_deriv(f, x, input);
  };
  Eigen::VectorXd next = rk4_step(field, state.to_vector(), dt);
  if (!next.allFinite())
    throw NumericError("integrate_rk4: non-finite state");
  VehicleState s = VehicleState::from_vector(next);
  for (int i = 0; i < 3; ++i) s.euler(i) = wrap_angle(s.euler(i));
  return s;
}

Dataset synth_generate(const FossenParams& params, const SynthOptions& opts,
                       std::uint64_t seed) {
  if (!(opts.duration_s > 0) || !(opts.rate_hz > 0))
    throw ConfigError("synth_generate: duration and rate must be > 0");
  params.validate();
  const int m = params.input_dim();
  const double dt = 1.0 / opts.rate_hz;
  const int n = static_cast<int>(std::llround(opts.duration_s * opts.rate_hz));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(opts.excitation.f_min_hz,
                                              opts.excitation.f_max_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  // Per-channel sums of random-phase sinusoids.
  const int nh = opts.excitation.harmonics;
  Eigen::MatrixXd freqs(m, nh), phases(m, nh);
  for (int j = 0; j < m; ++j)
    for (int h = 0; h < nh; ++h) {
      freqs(j, h) = freq(rng);
      phases(j, h) = phase(rng);
    }
  auto excite = [&](double t) {
    Eigen::VectorXd u(m);
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int h = 0; h < nh; ++h)
        acc += std::sin(2.0 * kPi * freqs(j, h) * t + phases(j, h));
      double scale = opts.excitation.channel_scale.size() == m
                         ? opts.excitation.channel_scale(j)
                         : 1.0;
      u(j) = std::clamp(opts.excitation.amplitude * scale * acc /
                            std::sqrt(static_cast<double>(nh)),
                        -1.0, 1.0);
    }
    return u;
  };

  std::normal_distribution<double> gauss(0.0, 1.0);

  Segment seg;
  seg.t0 = 0.0;
  VehicleState state = opts.initial_state;
  auto record = [&](const VehicleState& s, const Eigen::VectorXd& u) {
    VehicleState meas = s;
    if (opts.noise_std > 0) {
      Vector12d x = meas.to_vector();
      for (int i = 0; i < 12; ++i) x(i) += opts.noise_std * gauss(rng);
      meas = VehicleState::from_vector(x);
      for (int i = 0; i < 3; ++i) meas.euler(i) = wrap_angle(meas.euler(i));
    }
    seg.states.push_back(meas);
    seg.inputs.emplace_back(u);
  };

  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    const Eigen::VectorXd u = excite(t);
    record(state, u);
    if (k + 1 < n) {
      ControlInput input(u);
      state = integrate_rk4(
          [&](const VehicleState& s, const ControlInput& in) {
            return fossen_accel(params, s, in);
          },
          state, input, dt);
      if (state.to_vector().cwiseAbs().maxCoeff() > opts.divergence_bound)
        throw NumericError("synth_generate: divergence at t = " +
                           std::to_string(t + dt) + " s");
    }
  }

  Dataset ds;
  ds.dt = dt;
  ds.input_dim = m;
  ds.provenance = "synthetic (seed " + std::to_string(seed) + ")";
  ds.segments.push_back(std::move(seg));
  return ds;
}

}  // namespace uwsysid
