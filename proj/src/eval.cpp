#include "uwsysid/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uwsysid {

namespace {

bool out_of_bounds(const Vector12d& x, double bound) {
  return !x.allFinite() || x.cwiseAbs().maxCoeff() > bound;
}

}  // namespace

VehicleState RolloutModel::rollout_one(const Segment& seg, int start,
                                       int horizon) const {
  if (start < 0 || start + horizon > seg.size() - 1)
    throw ConfigError("rollout: window leaves the segment");
  VehicleState s = seg.states[start];
  for (int i = 0; i < horizon; ++i) s = step(s, seg.inputs[start + i]);
  return s;
}

void RolloutModel::step_batch(Eigen::MatrixXd& states,
                              const Eigen::MatrixXd& inputs,
                              std::vector<std::uint8_t>& diverged) const {
  for (int w = 0; w < states.cols(); ++w) {
    if (diverged[w]) continue;
    try {
      VehicleState s = step(VehicleState::from_vector(states.col(w)),
                            ControlInput(inputs.col(w)));
      Vector12d x = s.to_vector();
      if (out_of_bounds(x, divergence_bound)) {
        diverged[w] = 1;
      } else {
        states.col(w) = x;
      }
    } catch (const NumericError&) {
      diverged[w] = 1;
    }
  }
}

bool RolloutModel::rollout_windows(const Segment&, const std::vector<int>&,
                                   int, Eigen::MatrixXd&,
                                   std::vector<std::uint8_t>&) const {
  return false;
}

VehicleState FossenRolloutModel::step(const VehicleState& s,
                                      const ControlInput& u) const {
  return integrate_euler(
      [this](const VehicleState& st, const ControlInput& in) {
        return fossen_accel(params_, st, in);
      },
      s, u, dt_);
}

VehicleState KoopmanRolloutModel::step(const VehicleState& s,
                                       const ControlInput& u) const {
  Eigen::VectorXd z = lift(s.to_vector(), model_.dictionary);
  z = koopman_step(model_, z, u);
  return VehicleState::from_vector(decode(model_, z));
}

VehicleState KoopmanRolloutModel::rollout_one(const Segment& seg, int start,
                                              int horizon) const {
  if (start < 0 || start + horizon > seg.size() - 1)
    throw ConfigError("rollout: window leaves the segment");
  if (relift_) return RolloutModel::rollout_one(seg, start, horizon);
  Eigen::VectorXd z = lift(seg.states[start].to_vector(), model_.dictionary);
  for (int i = 0; i < horizon; ++i)
    z = koopman_step(model_, z, seg.inputs[start + i]);
  return VehicleState::from_vector(decode(model_, z));
}

bool KoopmanRolloutModel::rollout_windows(
    const Segment& seg, const std::vector<int>& starts, int horizon,
    Eigen::MatrixXd& endpoints, std::vector<std::uint8_t>& diverged) const {
  if (relift_) return false;
  const int w = static_cast<int>(starts.size());
  const int m = model_.input_dim();
  Eigen::MatrixXd x0(12, w);
  for (int j = 0; j < w; ++j) x0.col(j) = seg.states[starts[j]].to_vector();
  Eigen::MatrixXd z = lift_batch(x0, model_.dictionary);
  Eigen::MatrixXd u(m, w);
  diverged.assign(w, 0);
  for (int i = 0; i < horizon; ++i) {
    for (int j = 0; j < w; ++j) u.col(j) = seg.inputs[starts[j] + i].channels;
    z = (model_.a * z + model_.b * u).eval();
  }
  endpoints = z.topRows(12);
  for (int j = 0; j < w; ++j)
    if (out_of_bounds(endpoints.col(j), divergence_bound)) diverged[j] = 1;
  return true;
}

ResidualRolloutModel::ResidualRolloutModel(ResidualModel model,
                                           FossenParams nominal,
                                           std::string label)
    : model_(std::move(model)),
      nominal_(std::move(nominal)),
      label_(std::move(label)) {
  deriv_ = [this](const VehicleState& s, const ControlInput& u) {
    return fossen_accel(nominal_, s, u);
  };
}

VehicleState ResidualRolloutModel::step(const VehicleState& s,
                                        const ControlInput& u) const {
  return corrected_step(model_, deriv_, s, u);
}

void ResidualRolloutModel::step_batch(Eigen::MatrixXd& states,
                                      const Eigen::MatrixXd& inputs,
                                      std::vector<std::uint8_t>& diverged) const {
  const int w = static_cast<int>(states.cols());
  const int m = static_cast<int>(inputs.rows());
  std::vector<int> alive;
  alive.reserve(w);
  for (int j = 0; j < w; ++j)
    if (!diverged[j]) alive.push_back(j);
  if (alive.empty()) return;

  Eigen::MatrixXd feats(12 + m, alive.size());
  Eigen::MatrixXd num_sim(6, alive.size());
  for (size_t a = 0; a < alive.size(); ++a) {
    const int j = alive[a];
    VehicleState s = VehicleState::from_vector(states.col(j));
    ControlInput u(inputs.col(j));
    Vector6d nu_sim;
    try {
      nu_sim = nominal_next_twist(deriv_, s, u, model_.dt);
    } catch (const Error&) {
      diverged[j] = 1;
      nu_sim.setZero();
    }
    num_sim.col(a) = nu_sim;
    feats.col(a).head<6>() = model_.normalizer.normalize_twist(s.twist());
    feats.col(a).segment<6>(6) = model_.normalizer.normalize_twist(nu_sim);
    feats.col(a).tail(m) = model_.normalizer.normalize_input(inputs.col(j));
  }
  Eigen::MatrixXd pred = mlp_forward(model_, feats);
  for (size_t a = 0; a < alive.size(); ++a) {
    const int j = alive[a];
    if (diverged[j]) continue;
    const Vector6d corrected =
        Vector6d(num_sim.col(a)) +
        model_.normalizer.denormalize_residual(pred.col(a));
    const double bound = model_.instability_bound > 0
                             ? std::min(model_.instability_bound,
                                        divergence_bound)
                             : divergence_bound;
    if (!corrected.allFinite() || corrected.cwiseAbs().maxCoeff() > bound) {
      diverged[j] = 1;
      continue;
    }
    try {
      VehicleState s = VehicleState::from_vector(states.col(j));
      s.set_twist(corrected);  // pose advances with the corrected twist
      VehicleState next = kinematic_step(s, model_.dt);
      Vector12d x = next.to_vector();
      if (out_of_bounds(x, divergence_bound)) {
        diverged[j] = 1;
      } else {
        states.col(j) = x;
      }
    } catch (const NumericError&) {
      diverged[j] = 1;
    }
  }
}

namespace {

// Squared endpoint error with wrapped angle differences, split by block.
void accumulate_error(const Vector12d& truth, const Vector12d& pred,
                      double& total, Eigen::Vector4d& blocks) {
  Vector12d e = pred - truth;
  for (int i = 3; i < 6; ++i) e(i) = angle_diff(pred(i), truth(i));
  const double p = e.segment<3>(0).squaredNorm();
  const double mu = e.segment<3>(3).squaredNorm();
  const double v = e.segment<3>(6).squaredNorm();
  const double om = e.segment<3>(9).squaredNorm();
  total += p + mu + v + om;
  blocks += Eigen::Vector4d(p, mu, v, om);
}

}  // namespace

RmseResult rmse_h(const RolloutModel& model, const Dataset& ds, int horizon) {
  if (horizon < 0) throw ConfigError("rmse_h: horizon must be >= 0");
  RmseResult res;
  double total = 0.0;
  Eigen::Vector4d blocks = Eigen::Vector4d::Zero();

  for (const auto& seg : ds.segments) {
    const int n_windows = seg.size() - horizon;
    if (horizon > 0 && n_windows <= 0) continue;
    if (horizon == 0) {
      res.windows += seg.size();  // endpoint equals the ground-truth start
      continue;
    }
    std::vector<int> starts(n_windows);
    for (int i = 0; i < n_windows; ++i) starts[i] = i;

    Eigen::MatrixXd endpoints;
    std::vector<std::uint8_t> diverged;
    if (!model.rollout_windows(seg, starts, horizon, endpoints, diverged)) {
      endpoints.resize(12, n_windows);
      for (int i = 0; i < n_windows; ++i)
        endpoints.col(i) = seg.states[i].to_vector();
      diverged.assign(n_windows, 0);
      Eigen::MatrixXd inputs(ds.input_dim, n_windows);
      for (int s = 0; s < horizon; ++s) {
        for (int i = 0; i < n_windows; ++i)
          inputs.col(i) = seg.inputs[i + s].channels;
        model.step_batch(endpoints, inputs, diverged);
      }
    }
    for (int i = 0; i < n_windows; ++i) {
      if (diverged[i]) {
        ++res.divergent;
        continue;
      }
      accumulate_error(seg.states[i + horizon].to_vector(), endpoints.col(i),
                       total, blocks);
      ++res.windows;
    }
  }

  if (res.windows == 0)
    throw DataError("rmse_h: no valid window at horizon " +
                    std::to_string(horizon));
  const double w = static_cast<double>(res.windows);
  res.rmse = std::sqrt(total / (w * 12.0));
  res.rmse_p = std::sqrt(blocks(0) / (w * 3.0));
  res.rmse_mu = std::sqrt(blocks(1) / (w * 3.0));
  res.rmse_v = std::sqrt(blocks(2) / (w * 3.0));
  res.rmse_omega = std::sqrt(blocks(3) / (w * 3.0));
  return res;
}

VehicleState rollout(const RolloutModel& model, const Dataset& ds, int start,
                     int horizon) {
  int offset = start;
  for (const auto& seg : ds.segments) {
    if (offset < seg.size()) return model.rollout_one(seg, offset, horizon);
    offset -= seg.size();
  }
  throw ConfigError("rollout: start index out of range");
}

TimingResult bench_timing(const RolloutModel& model, const Dataset& ds,
                          int horizon, int repetitions, int max_windows) {
  if (repetitions < 3)
    throw ConfigError("bench_timing: need at least 3 repetitions");
  // evenly spaced windows inside the largest segment
  const Segment* seg = nullptr;
  for (const auto& s : ds.segments)
    if (!seg || s.size() > seg->size()) seg = &s;
  if (!seg || seg->size() <= horizon)
    throw DataError("bench_timing: no window fits the horizon");
  const int n_windows =
      std::min(max_windows, std::max(1, seg->size() - horizon));
  std::vector<int> starts(n_windows);
  const int span = std::max(1, (seg->size() - horizon) / n_windows);
  for (int i = 0; i < n_windows; ++i) starts[i] = i * span;

  std::vector<double> per_rollout(repetitions);
  Eigen::MatrixXd endpoints;
  std::vector<std::uint8_t> diverged;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    // Prefer the batched window propagation (the path eval uses); fall back
    // to one-at-a-time rollouts for models without a batch kernel.
    if (!model.rollout_windows(*seg, starts, horizon, endpoints, diverged)) {
      for (int start : starts) {
        volatile double sink =
            model.rollout_one(*seg, start, horizon).position.x();
        (void)sink;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    per_rollout[rep] =
        std::chrono::duration<double>(t1 - t0).count() / n_windows;
  }
  std::sort(per_rollout.begin(), per_rollout.end());

  TimingResult t;
  t.median_s = per_rollout[repetitions / 2];
  t.spread_s = per_rollout.back() - per_rollout.front();
  t.per_step_s = horizon > 0 ? t.median_s / horizon : 0.0;
  t.horizon = horizon;
  t.rollouts = n_windows;
  t.environment = "single-threaded; steady_clock";
  return t;
}

std::vector<ReportRecord> compare_models(
    const std::vector<const RolloutModel*>& models, const Dataset& ds,
    const std::vector<int>& horizons) {
  std::vector<ReportRecord> records;
  for (const RolloutModel* model : models) {
    for (int h : horizons) {
      ReportRecord rec;
      rec.model = model->name();
      rec.horizon = h;
      rec.rmse = rmse_h(*model, ds, h);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::string render_report_text(const std::vector<ReportRecord>& records) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %6s %10s %10s %10s %10s %10s %8s %6s\n",
                "model", "H", "rmse", "rmse_p", "rmse_mu", "rmse_v",
                "rmse_omega", "windows", "div");
  os << line;
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line),
                  "%-12s %6d %10.4f %10.4f %10.4f %10.4f %10.4f %8d %6d\n",
                  r.model.c_str(), r.horizon, r.rmse.rmse, r.rmse.rmse_p,
                  r.rmse.rmse_mu, r.rmse.rmse_v, r.rmse.rmse_omega,
                  r.rmse.windows, r.rmse.divergent);
    os << line;
  }
  os << "(angle dimensions use wrapped differences; divergent windows are "
        "excluded from the averages and counted in 'div')\n";
  return os.str();
}

void write_report_csv(const std::vector<ReportRecord>& records,
                      const std::string& path,
                      const std::vector<std::string>& header_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report file: " + path);
  for (const auto& c : header_comment) out << "# " << c << "\n";
  out << "model,H,rmse,rmse_p,rmse_mu,rmse_v,rmse_omega,windows,divergent,"
         "fit_s,rollout_s\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%.17g\n",
                  r.model.c_str(), r.horizon, r.rmse.rmse, r.rmse.rmse_p,
                  r.rmse.rmse_mu, r.rmse.rmse_v, r.rmse.rmse_omega,
                  r.rmse.windows, r.rmse.divergent, r.fit_s, r.rollout_s);
    out << buf;
  }
}

void write_rollout_trace(const std::vector<const RolloutModel*>& models,
                         const Dataset& ds, int start, int horizon,
                         const std::string& path) {
  // locate the segment
  int offset = start;
  const Segment* seg = nullptr;
  for (const auto& s : ds.segments) {
    if (offset < s.size()) {
      seg = &s;
      break;
    }
    offset -= s.size();
  }
  if (!seg || offset + horizon > seg->size() - 1)
    throw ConfigError("write_rollout_trace: window leaves the segment");

  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file: " + path);
  out << "t,gt_x,gt_y,gt_z";
  for (const auto* m : models)
    out << "," << m->name() << "_x," << m->name() << "_y," << m->name() << "_z";
  out << "\n";

  std::vector<VehicleState> cur;
  for (const auto* m : models) {
    (void)m;
    cur.push_back(seg->states[offset]);
  }
  for (int i = 0; i <= horizon; ++i) {
    out << seg->t0 + (offset + i) * ds.dt;
    const auto& gt = seg->states[offset + i].position;
    out << "," << gt.x() << "," << gt.y() << "," << gt.z();
    for (size_t m = 0; m < models.size(); ++m) {
      const auto& p = cur[m].position;
      out << "," << p.x() << "," << p.y() << "," << p.z();
      if (i < horizon)
        cur[m] = models[m]->step(cur[m], seg->inputs[offset + i]);
    }
    out << "\n";
  }
}

}  // namespace uwsysid
