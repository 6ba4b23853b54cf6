#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "uwsysid/eval.hpp"

using namespace uwsysid;

namespace {

Dataset gt_dataset(int per_segment, int segments, int input_dim,
                   std::uint64_t seed) {
  Dataset ds;
  ds.dt = 0.02;
  ds.input_dim = input_dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int s = 0; s < segments; ++s) {
    Segment seg;
    seg.t0 = 50.0 * s;
    for (int i = 0; i < per_segment; ++i) {
      VehicleState st;
      st.position << u(rng), u(rng), u(rng);
      st.euler << 0.2 * u(rng), 0.2 * u(rng), u(rng);
      st.lin_vel << u(rng), u(rng), u(rng);
      st.ang_vel << u(rng), u(rng), u(rng);
      seg.states.push_back(st);
      seg.inputs.emplace_back(Eigen::VectorXd::NullaryExpr(
          input_dim, [&](int) { return u(rng); }));
    }
    ds.segments.push_back(seg);
  }
  return ds;
}

/// Adds a fixed offset to every non-angle dimension and a wrapped offset to
/// the angles after each step.
class OffsetModel : public RolloutModel {
 public:
  explicit OffsetModel(double e) : e_(e) {}
  std::string name() const override { return "offset"; }
  VehicleState step(const VehicleState& s, const ControlInput&) const override {
    VehicleState next = s;
    next.position.array() += e_;
    for (int i = 0; i < 3; ++i) next.euler(i) = wrap_angle(next.euler(i) + e_);
    next.lin_vel.array() += e_;
    next.ang_vel.array() += e_;
    return next;
  }

 private:
  double e_;
};

/// Naive reference: per-window step loop plus a two-loop RMSE accumulation.
RmseResult naive_rmse(const RolloutModel& model, const Dataset& ds,
                      int horizon) {
  double total = 0.0;
  int windows = 0;
  for (const auto& seg : ds.segments) {
    for (int start = 0; start + horizon <= seg.size() - 1; ++start) {
      VehicleState s = seg.states[start];
      for (int k = 0; k < horizon; ++k)
        s = model.step(s, seg.inputs[start + k]);
      const VehicleState& gt = seg.states[start + horizon];
      Vector12d err = s.to_vector() - gt.to_vector();
      for (int i = 3; i < 6; ++i)
        err(i) = angle_diff(s.to_vector()(i), gt.to_vector()(i));
      for (int i = 0; i < 12; ++i) total += err(i) * err(i);
      ++windows;
    }
  }
  RmseResult r;
  r.windows = windows;
  r.rmse = std::sqrt(total / (windows * 12.0));
  return r;
}

}  // namespace

TEST_CASE("rollout with H=0 returns the ground-truth start state") {
  Dataset ds = gt_dataset(20, 1, 2, 1);
  IdentityModel m;
  const VehicleState s = rollout(m, ds, 5, 0);
  CHECK(s.to_vector() == ds.segments[0].states[5].to_vector());
}

TEST_CASE("identity model endpoint equals the start state") {
  Dataset ds = gt_dataset(20, 1, 2, 2);
  IdentityModel m;
  const VehicleState s = rollout(m, ds, 3, 10);
  CHECK(s.to_vector() == ds.segments[0].states[3].to_vector());
}

TEST_CASE("rollout rejects windows that leave the segment") {
  Dataset ds = gt_dataset(20, 1, 2, 3);
  IdentityModel m;
  CHECK_THROWS_AS(rollout(m, ds, 15, 10), ConfigError);
  CHECK_NOTHROW(rollout(m, ds, 9, 10));
}

TEST_CASE("perfect model has zero RMSE") {
  // The identity model is exact on a dataset of constant states.
  Dataset ds = gt_dataset(1, 1, 2, 4);
  Segment seg;
  VehicleState st;
  st.position << 0.3, -0.2, 0.1;
  for (int i = 0; i < 30; ++i) {
    seg.states.push_back(st);
    seg.inputs.emplace_back(Eigen::VectorXd::Zero(2));
  }
  ds.segments = {seg};
  IdentityModel m;
  const RmseResult r = rmse_h(m, ds, 10);
  CHECK(r.rmse == 0.0);
  CHECK(r.windows == 20);
  CHECK(r.divergent == 0);
}

TEST_CASE("constant per-dimension offset e gives RMSE |e|") {
  // 5-window toy set: 6 constant samples, H = 1, model drifts by e each step.
  Dataset ds = gt_dataset(1, 1, 2, 5);
  Segment seg;
  VehicleState st;
  for (int i = 0; i < 6; ++i) {
    seg.states.push_back(st);
    seg.inputs.emplace_back(Eigen::VectorXd::Zero(2));
  }
  ds.segments = {seg};
  const double e = 0.37;
  OffsetModel m(e);
  const RmseResult r = rmse_h(m, ds, 1);
  CHECK(r.windows == 5);
  CHECK(r.rmse == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.rmse_p == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.rmse_mu == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.rmse_v == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.rmse_omega == doctest::Approx(e).epsilon(1e-12));
}

TEST_CASE("rmse_h equals the naive two-loop reference") {
  Dataset ds = gt_dataset(40, 2, 3, 6);
  OffsetModel m(0.05);
  for (int h : {1, 5, 10}) {
    const RmseResult fast = rmse_h(m, ds, h);
    const RmseResult slow = naive_rmse(m, ds, h);
    CHECK(fast.windows == slow.windows);
    CHECK(std::abs(fast.rmse - slow.rmse) < 1e-12);
  }
}

TEST_CASE("rmse_h scales exactly with the error magnitude") {
  Dataset ds = gt_dataset(1, 1, 2, 7);
  Segment seg;
  for (int i = 0; i < 25; ++i) {
    seg.states.push_back(VehicleState{});
    seg.inputs.emplace_back(Eigen::VectorXd::Zero(2));
  }
  ds.segments = {seg};
  const double base = rmse_h(OffsetModel(0.001), ds, 1).rmse;
  for (double s : {2.0, 5.0, 30.0}) {
    const double scaled = rmse_h(OffsetModel(0.001 * s), ds, 1).rmse;
    CHECK(scaled == doctest::Approx(s * base).epsilon(1e-12));
  }
}

TEST_CASE("angle errors use wrapped differences") {
  Dataset ds;
  ds.dt = 0.02;
  ds.input_dim = 1;
  Segment seg;
  VehicleState a, b;
  a.euler(2) = 3.1;   // near +pi
  b.euler(2) = -3.1;  // near -pi; wrapped difference is ~0.083, not 6.2
  seg.states = {a, b};
  seg.inputs = {ControlInput(Eigen::VectorXd::Zero(1)),
                ControlInput(Eigen::VectorXd::Zero(1))};
  ds.segments = {seg};
  IdentityModel m;
  const RmseResult r = rmse_h(m, ds, 1);
  const double expected =
      std::sqrt(std::pow(2 * kPi - 6.2, 2) / 12.0);
  CHECK(r.rmse == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("windows never cross segment boundaries") {
  Dataset ds = gt_dataset(15, 2, 2, 8);
  IdentityModel m;
  const RmseResult r = rmse_h(m, ds, 10);
  CHECK(r.windows == 2 * (15 - 10));  // 5 starts per segment, none bridging
  CHECK_THROWS_AS(rmse_h(m, ds, 20), DataError);  // horizon exceeds segments
}

TEST_CASE("divergent windows are excluded and counted") {
  // Blows up only from starts with positive x, so part of the window set
  // survives while the rest trips the bound.
  class BlowUpModel : public RolloutModel {
   public:
    std::string name() const override { return "blowup"; }
    VehicleState step(const VehicleState& s,
                      const ControlInput&) const override {
      VehicleState next = s;
      if (s.position.x() > 0.0) next.lin_vel.array() += 100.0;
      return next;
    }
  };
  Dataset ds = gt_dataset(30, 1, 2, 9);
  BlowUpModel m;
  m.divergence_bound = 10.0;
  const RmseResult r = rmse_h(m, ds, 10);
  CHECK(r.divergent > 0);
  CHECK(r.windows > 0);
  CHECK(r.windows + r.divergent == 20);
  CHECK(std::isfinite(r.rmse));
}

TEST_CASE("koopman batched windows match sequential rollouts") {
  // Fit a tiny lifted model, then cross-check the batched path.
  Dataset ds = gt_dataset(60, 1, 2, 10);
  // Replace the random walk with a smooth trajectory so the fit is sane.
  EdmdcOptions opts;
  opts.num_centers = 8;
  opts.lambda = 1e-3;
  KoopmanModel km = edmdc_fit(ds, opts, 4);
  KoopmanRolloutModel fast(km);
  const int h = 12;
  const Segment& seg = ds.segments[0];
  const RmseResult batched = rmse_h(fast, ds, h);
  // Sequential reference through rollout_one.
  double total = 0.0;
  int windows = 0;
  for (int start = 0; start + h <= seg.size() - 1; ++start) {
    const VehicleState end = fast.rollout_one(seg, start, h);
    Vector12d err = end.to_vector() - seg.states[start + h].to_vector();
    for (int i = 3; i < 6; ++i)
      err(i) = angle_diff(end.to_vector()(i),
                          seg.states[start + h].to_vector()(i));
    total += err.squaredNorm();
    ++windows;
  }
  CHECK(batched.windows == windows);
  CHECK(batched.rmse ==
        doctest::Approx(std::sqrt(total / (windows * 12.0))).epsilon(1e-9));
}

TEST_CASE("relift ablation differs from the lifted-propagation default") {
  Dataset ds = gt_dataset(60, 1, 2, 11);
  EdmdcOptions opts;
  opts.num_centers = 8;
  opts.lambda = 1e-3;
  KoopmanModel km = edmdc_fit(ds, opts, 5);
  KoopmanRolloutModel plain(km, false), relift(km, true);
  const VehicleState a = plain.rollout_one(ds.segments[0], 0, 20);
  const VehicleState b = relift.rollout_one(ds.segments[0], 0, 20);
  CHECK((a.to_vector() - b.to_vector()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("bench_timing enforces three repetitions and reports medians") {
  Dataset ds = gt_dataset(50, 1, 2, 12);
  IdentityModel m;
  CHECK_THROWS_AS(bench_timing(m, ds, 10, 2), ConfigError);
  const TimingResult t = bench_timing(m, ds, 10, 3);
  CHECK(t.median_s >= 0.0);
  CHECK(t.per_step_s == doctest::Approx(t.median_s / 10.0));
  CHECK(t.per_step_s < 1e-5);  // identity stepping is near-free
  CHECK(t.horizon == 10);
}

TEST_CASE("compare_models is deterministic and ordered") {
  Dataset ds = gt_dataset(40, 1, 2, 13);
  IdentityModel id;
  OffsetModel off(0.01);
  std::vector<const RolloutModel*> models = {&id, &off};
  auto a = compare_models(models, ds, {1, 5});
  auto b = compare_models(models, ds, {1, 5});
  REQUIRE(a.size() == 4);
  CHECK(a[0].model == "identity");
  CHECK(a[0].horizon == 1);
  CHECK(a[3].model == "offset");
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].rmse.rmse == b[i].rmse.rmse);
}

TEST_CASE("report renderers emit every model and horizon") {
  Dataset ds = gt_dataset(30, 1, 2, 14);
  IdentityModel id;
  auto records = compare_models({&id}, ds, {1, 10});
  const std::string text = render_report_text(records);
  CHECK(text.find("identity") != std::string::npos);
  CHECK(text.find("10") != std::string::npos);
  const std::string path = "/tmp/uwsysid_test_report.csv";
  write_report_csv(records, path, {"prov line"});
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("#", 0) == 0);
  int lines = 1;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines >= 3);  // provenance + header + 2 records
  std::remove(path.c_str());
}
