#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uwsysid/dynamics.hpp"
#include "uwsysid/koopman.hpp"
#include "uwsysid/residual.hpp"

namespace uwsysid {

/// One-step rollout model as seen by the evaluation harness.
class RolloutModel {
 public:
  virtual ~RolloutModel() = default;
  virtual std::string name() const = 0;
  virtual VehicleState step(const VehicleState& state,
                            const ControlInput& input) const = 0;

  /// Open-loop endpoint from a ground-truth start under recorded inputs.
  /// Default: repeated step(). Throws NumericError on instability.
  virtual VehicleState rollout_one(const Segment& seg, int start,
                                   int horizon) const;

  /// Advance a batch of window states one step (column per window); diverged
  /// columns are frozen. Default loops step().
  virtual void step_batch(Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& inputs,
                          std::vector<std::uint8_t>& diverged) const;

  /// Whole-window batched rollout; returns false when the model has no
  /// special path (the harness then uses step_batch).
  virtual bool rollout_windows(const Segment& seg,
                               const std::vector<int>& starts, int horizon,
                               Eigen::MatrixXd& endpoints,
                               std::vector<std::uint8_t>& diverged) const;

  double divergence_bound = 1e3;
};

/// State never changes; timing baseline and test stub.
class IdentityModel : public RolloutModel {
 public:
  std::string name() const override { return "identity"; }
  VehicleState step(const VehicleState& s, const ControlInput&) const override {
    return s;
  }
};

class DIRolloutModel : public RolloutModel {
 public:
  explicit DIRolloutModel(DIModel model) : model_(std::move(model)) {}
  std::string name() const override { return "di"; }
  VehicleState step(const VehicleState& s, const ControlInput& u) const override {
    return di_step(model_, s, u);
  }
  const DIModel& model() const { return model_; }

 private:
  DIModel model_;
};

/// Fossen model stepped with one explicit Euler step per sample.
class FossenRolloutModel : public RolloutModel {
 public:
  FossenRolloutModel(FossenParams params, double dt, std::string label = "fossen")
      : params_(std::move(params)), dt_(dt), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  VehicleState step(const VehicleState& s, const ControlInput& u) const override;

 private:
  FossenParams params_;
  double dt_;
  std::string label_;
};

/// Lifted-linear rollout: lift once, step in lifted space, decode at the end.
/// The re-lift ablation decodes and re-lifts the state at every step.
class KoopmanRolloutModel : public RolloutModel {
 public:
  explicit KoopmanRolloutModel(KoopmanModel model, bool relift_each_step = false)
      : model_(std::move(model)), relift_(relift_each_step) {}
  std::string name() const override { return "koopman"; }
  VehicleState step(const VehicleState& s, const ControlInput& u) const override;
  VehicleState rollout_one(const Segment& seg, int start,
                           int horizon) const override;
  bool rollout_windows(const Segment& seg, const std::vector<int>& starts,
                       int horizon, Eigen::MatrixXd& endpoints,
                       std::vector<std::uint8_t>& diverged) const override;
  const KoopmanModel& model() const { return model_; }

 private:
  KoopmanModel model_;
  bool relift_;
};

/// Nominal simulator plus the learned residual corrector.
class ResidualRolloutModel : public RolloutModel {
 public:
  ResidualRolloutModel(ResidualModel model, FossenParams nominal,
                       std::string label = "residual");
  std::string name() const override { return label_; }
  VehicleState step(const VehicleState& s, const ControlInput& u) const override;
  void step_batch(Eigen::MatrixXd& states, const Eigen::MatrixXd& inputs,
                  std::vector<std::uint8_t>& diverged) const override;

 private:
  ResidualModel model_;
  FossenParams nominal_;
  TwistDeriv deriv_;
  std::string label_;
};

/// Endpoint H-step RMSE plus the p/mu/v/omega sub-metrics of the same windows.
struct RmseResult {
  double rmse = 0.0;
  double rmse_p = 0.0, rmse_mu = 0.0, rmse_v = 0.0, rmse_omega = 0.0;
  int windows = 0;    // valid windows included in the average
  int divergent = 0;  // excluded, instability guard tripped
};

/// Endpoint H-step RMSE over every in-segment start index; angle dimensions
/// use wrapped differences. Throws DataError when no valid window exists.
RmseResult rmse_h(const RolloutModel& model, const Dataset& ds, int horizon);

/// Open-loop endpoint prediction for one window (start is a global sample
/// index; the window must fit inside its segment).
VehicleState rollout(const RolloutModel& model, const Dataset& ds, int start,
                     int horizon);

struct TimingResult {
  double median_s = 0.0;     // per rollout
  double spread_s = 0.0;     // max - min over repetitions
  double per_step_s = 0.0;   // median_s / horizon
  double fit_s = -1.0;       // filled by the caller when known
  int horizon = 0;
  int rollouts = 0;
  std::string environment;
};

/// Median wall time per open-loop rollout over `repetitions` passes across
/// evenly spaced windows. Requires repetitions >= 3.
TimingResult bench_timing(const RolloutModel& model, const Dataset& ds,
                          int horizon, int repetitions, int max_windows = 64);

struct ReportRecord {
  std::string model;
  int horizon = 0;
  RmseResult rmse;
  double fit_s = -1.0;
  double rollout_s = -1.0;
};

/// One record per model x horizon, deterministic ordering.
std::vector<ReportRecord> compare_models(
    const std::vector<const RolloutModel*>& models, const Dataset& ds,
    const std::vector<int>& horizons);

std::string render_report_text(const std::vector<ReportRecord>& records);
void write_report_csv(const std::vector<ReportRecord>& records,
                      const std::string& path,
                      const std::vector<std::string>& header_comment = {});

/// Per-trajectory trace (top view x-y and depth vs time) for one window:
/// CSV with ground truth and one column group per model.
void write_rollout_trace(const std::vector<const RolloutModel*>& models,
                         const Dataset& ds, int start, int horizon,
                         const std::string& path);

}  // namespace uwsysid
