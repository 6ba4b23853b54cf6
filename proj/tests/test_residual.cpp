#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "uwsysid/residual.hpp"

using namespace uwsysid;

namespace {

// Ground-truth dataset rolled out under a known twist-derivative field.
Dataset rollout_dataset(const TwistDeriv& f, int samples, int input_dim,
                        std::uint64_t seed) {
  Dataset ds;
  ds.dt = 0.02;
  ds.input_dim = input_dim;
  Segment seg;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VehicleState s;
  s.lin_vel << 0.1, -0.2, 0.05;
  for (int i = 0; i < samples; ++i) {
    ControlInput in(Eigen::VectorXd::NullaryExpr(input_dim,
                                                 [&](int) { return u(rng); }));
    seg.states.push_back(s);
    seg.inputs.push_back(in);
    s = integrate_euler(f, s, in, ds.dt);
  }
  ds.segments.push_back(seg);
  return ds;
}

// Mildly damped linear twist field with input coupling.
TwistDeriv toy_field(double gain) {
  return [gain](const VehicleState& s, const ControlInput& u) {
    Vector6d a = -0.5 * s.twist();
    for (int i = 0; i < 6; ++i) a(i) += gain * u.channels(i % u.dim());
    return a;
  };
}

ResidualModel tiny_model(int input_dim, int width, std::uint64_t seed,
                         double weight_scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, weight_scale);
  ResidualModel model;
  model.config.hidden_width = width;
  model.config.hidden_layers = 2;
  const int in = 12 + input_dim;
  std::vector<int> dims = {in, width, width, 6};
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    model.weights.push_back(Eigen::MatrixXd::NullaryExpr(
        dims[l + 1], dims[l], [&](int, int) { return g(rng); }));
    model.biases.push_back(Eigen::VectorXd::NullaryExpr(
        dims[l + 1], [&](int) { return 0.1 * g(rng); }));
  }
  model.normalizer.input_mean = Eigen::VectorXd::Zero(input_dim);
  model.normalizer.input_std = Eigen::VectorXd::Ones(input_dim);
  model.normalizer.vel_mean.setZero();
  model.normalizer.vel_std.setOnes();
  model.normalizer.residual_mean.setZero();
  model.normalizer.residual_std.setOnes();
  model.instability_bound = 100.0;
  return model;
}

}  // namespace

// -------- activations and loss --------

TEST_CASE("silu values") {
  CHECK(silu(0.0) == 0.0);
  CHECK(silu(1.0) == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(silu(1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("huber loss values at the spec points, beta = 0.9") {
  auto vec = [](double norm) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(6);
    r(0) = norm;
    return r;
  };
  CHECK(huber_loss(vec(0.0), 0.9) == 0.0);
  CHECK(huber_loss(vec(0.0), 0.9, HuberForm::kAsWritten) == 0.0);
  CHECK(huber_loss(vec(0.5), 0.9) == doctest::Approx(0.125));
  CHECK(huber_loss(vec(0.5), 0.9, HuberForm::kAsWritten) ==
        doctest::Approx(0.25));
  CHECK(huber_loss(vec(2.0), 0.9) == doctest::Approx(1.395));
  CHECK(huber_loss(vec(2.0), 0.9, HuberForm::kAsWritten) ==
        doctest::Approx(1.395));
}

TEST_CASE("continuous huber is C0 and C1 at the breakpoint") {
  const double beta = 0.9, eps = 1e-9;
  auto f = [&](double norm) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(3);
    r(0) = norm;
    return huber_loss(r, beta);
  };
  CHECK(std::abs(f(beta + eps) - f(beta - eps)) < 1e-6);
  const double h = 1e-6;
  const double slope_below = (f(beta - eps) - f(beta - eps - h)) / h;
  const double slope_above = (f(beta + eps + h) - f(beta + eps)) / h;
  CHECK(std::abs(slope_below - slope_above) < 1e-4);
}

TEST_CASE("as-written huber jumps at the breakpoint") {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(3);
  r(0) = 0.9 - 1e-9;
  const double below = huber_loss(r, 0.9, HuberForm::kAsWritten);
  r(0) = 0.9 + 1e-9;
  const double above = huber_loss(r, 0.9, HuberForm::kAsWritten);
  CHECK(std::abs(below - above) > 0.3);  // 0.81 vs 0.405
}

TEST_CASE("per-element huber sums scalar losses") {
  Eigen::VectorXd r(2);
  r << 0.5, 2.0;
  const double expected = 0.125 + 0.9 * (2.0 - 0.45);
  CHECK(huber_loss(r, 0.9, HuberForm::kContinuous,
                   HuberReduction::kPerElement) == doctest::Approx(expected));
}

// -------- dataset assembly --------

TEST_CASE("exact nominal model makes all residuals zero and fails loudly") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 100, 3, 41);
  CHECK_THROWS_AS(build_residual_dataset(ds, f), DataError);
}

TEST_CASE("constant nominal offset produces constant residual b") {
  Vector6d b;
  b << 0.01, -0.02, 0.03, 0.004, -0.005, 0.006;
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 100, 3, 42);
  // Nominal is off by -b/dt in the derivative, i.e. by -b per step.
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(f(s, u) - b / ds.dt);
  };
  // A constant residual has zero variance; perturb one sample minutely so the
  // normalizer stays well-posed, then check the raw residuals directly.
  ds.segments[0].states[50].lin_vel += 1e-6 * Eigen::Vector3d::Ones();
  ds.segments[0].states[50].ang_vel += 1e-6 * Eigen::Vector3d::Ones();
  ResidualDataset rd = build_residual_dataset(ds, off);
  REQUIRE(rd.targets.cols() == 99);
  for (int j = 0; j < rd.targets.cols(); ++j) {
    const Vector6d raw =
        rd.normalizer.denormalize_residual(rd.targets.col(j));
    CHECK((raw - b).cwiseAbs().maxCoeff() < 2e-4);  // the one perturbed sample
  }
}

TEST_CASE("z-scored training targets have mean 0 and std 1") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 300, 3, 43);
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(0.9 * f(s, u));
  };
  ResidualDataset rd = build_residual_dataset(ds, off);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(rd.targets.row(i).mean()) < 1e-9);
    const double var = rd.targets.row(i).array().square().mean() -
                       std::pow(rd.targets.row(i).mean(), 2);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("samples never cross segment boundaries") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 50, 3, 44);
  ds.segments.push_back(ds.segments[0]);  // two segments of 50
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(0.9 * f(s, u));
  };
  ResidualDataset rd = build_residual_dataset(ds, off);
  CHECK(rd.targets.cols() == 2 * 49);
}

// -------- forward pass --------

TEST_CASE("all-zero weights predict exactly mu_delta") {
  ResidualModel model = tiny_model(3, 8, 1, 0.0);
  model.normalizer.residual_mean << 1, 2, 3, 4, 5, 6;
  model.normalizer.residual_std << 2, 2, 2, 2, 2, 2;
  for (auto& b : model.biases) b.setZero();
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(15, 4);
  Eigen::MatrixXd out = mlp_forward(model, z);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);  // normalized output
  const Vector6d un = model.normalizer.denormalize_residual(out.col(0));
  CHECK(un == model.normalizer.residual_mean);
}

TEST_CASE("batched forward equals per-sample forward") {
  ResidualModel model = tiny_model(3, 16, 2);
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(15, 20);
  Eigen::MatrixXd batch = mlp_forward(model, z);
  for (int j = 0; j < z.cols(); ++j) {
    Eigen::MatrixXd one = mlp_forward(model, z.col(j));
    CHECK((batch.col(j) - one.col(0)).cwiseAbs().maxCoeff() < 1e-13);
  }
  // Batch-order independence is exact: permuting columns permutes outputs.
  Eigen::MatrixXd rev = z.rowwise().reverse();
  Eigen::MatrixXd rev_out = mlp_forward(model, rev);
  CHECK(rev_out.rowwise().reverse() == batch);
}

// -------- training --------

TEST_CASE("training defaults follow the recipe") {
  TrainConfig c;
  CHECK(c.epochs == 2000);
  CHECK(c.batch_size == 768);
  CHECK(c.learning_rate == 3e-3);
  CHECK(c.weight_decay == 1e-5);
  CHECK(c.lr_gamma == 0.997);
  CHECK(c.huber_beta == 0.9);
  CHECK(c.hidden_width == 256);
  CHECK(c.hidden_layers == 4);
}

TEST_CASE("training learns a constant residual to below 1e-4") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 1001, 3, 45);
  Vector6d b;
  b << 0.02, -0.01, 0.03, 0.01, -0.02, 0.015;
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(f(s, u) - b / ds.dt);
  };
  ds.segments[0].states[500].lin_vel += 1e-7 * Eigen::Vector3d::Ones();  // sigma_delta > 0
  ds.segments[0].states[500].ang_vel += 1e-7 * Eigen::Vector3d::Ones();
  ResidualDataset rd = build_residual_dataset(ds, off);
  TrainConfig c;
  c.epochs = 60;
  c.hidden_width = 32;
  c.batch_size = 256;
  ResidualModel model = train_residual(rd, c, 7);
  Eigen::MatrixXd pred = mlp_forward(model, rd.features);
  double worst = 0.0;
  for (int j = 0; j < pred.cols(); ++j)
    worst = std::max(worst,
                     (model.normalizer.denormalize_residual(pred.col(j)) - b)
                         .cwiseAbs()
                         .maxCoeff());
  CHECK(worst < 1e-4);
}

TEST_CASE("training is bit-identical per seed") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 200, 3, 46);
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(0.8 * f(s, u));
  };
  ResidualDataset rd = build_residual_dataset(ds, off);
  TrainConfig c;
  c.epochs = 5;
  c.hidden_width = 16;
  ResidualModel a = train_residual(rd, c, 99);
  ResidualModel bm = train_residual(rd, c, 99);
  for (size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.weights[l] == bm.weights[l]);
    CHECK(a.biases[l] == bm.biases[l]);
  }
}

// -------- gradient check --------

TEST_CASE("gradient check on a linear single-layer model is below 1e-8") {
  ResidualModel model = tiny_model(3, 8, 3);
  model.weights = {0.1 * Eigen::MatrixXd::Random(6, 15)};
  model.biases = {0.1 * Eigen::VectorXd::Random(6)};
  // Uniform positive features and a constant error keep every gradient entry
  // well away from zero, so the relative comparison is not roundoff-bound.
  Eigen::MatrixXd z =
      Eigen::MatrixXd::Ones(15, 10) + 0.1 * Eigen::MatrixXd::Random(15, 10);
  Eigen::MatrixXd t =
      mlp_forward(model, z) - 0.5 * Eigen::MatrixXd::Ones(6, 10);
  CHECK(gradient_check(model, z, t, 5) < 1e-8);
}

TEST_CASE("gradient check on the full depth-4 model is below 1e-4") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    ResidualModel model = tiny_model(3, 24, seed);
    // Deepen to the production shape: 4 hidden blocks.
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> g(0.0, 0.3);
    model.weights.insert(model.weights.begin() + 1,
                         Eigen::MatrixXd::NullaryExpr(
                             24, 24, [&](int, int) { return g(rng); }));
    model.biases.insert(model.biases.begin() + 1, Eigen::VectorXd::Zero(24));
    model.weights.insert(model.weights.begin() + 1,
                         Eigen::MatrixXd::NullaryExpr(
                             24, 24, [&](int, int) { return g(rng); }));
    model.biases.insert(model.biases.begin() + 1, Eigen::VectorXd::Zero(24));
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(15, 16);
    Eigen::MatrixXd t = Eigen::MatrixXd::Random(6, 16);
    CHECK(gradient_check(model, z, t, seed) < 1e-4);
  }
}

TEST_CASE("loss is stationary at a zero-loss point") {
  ResidualModel model = tiny_model(2, 8, 6);
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(14, 8);
  Eigen::MatrixXd t = mlp_forward(model, z);  // targets = outputs, loss = 0
  auto loss = [&](const ResidualModel& m) {
    Eigen::MatrixXd err = mlp_forward(m, z) - t;
    double total = 0.0;
    for (int j = 0; j < err.cols(); ++j)
      total += huber_loss(err.col(j), 0.9);
    return total / err.cols();
  };
  CHECK(loss(model) == 0.0);
  // Quadratic bowl: a weight nudge of size h moves the loss by O(h^2), so the
  // finite-difference slope shrinks with h, i.e. the gradient is zero.
  ResidualModel nudged = model;
  const double h = 1e-5;
  for (auto& w : nudged.weights) w.array() += h;
  CHECK(loss(nudged) < 1e-6);
}

// -------- corrected stepping --------

TEST_CASE("zero model reproduces the nominal twist update bitwise") {
  ResidualModel model = tiny_model(3, 8, 8, 0.0);
  for (auto& b : model.biases) b.setZero();
  TwistDeriv f = toy_field(0.4);
  VehicleState s;
  s.lin_vel << 0.2, -0.1, 0.05;
  ControlInput u(Eigen::Vector3d(0.5, -0.5, 0.2));
  VehicleState corrected = s;
  for (int i = 0; i < 20; ++i) {
    // The twist update is bitwise the nominal Euler update; the pose then
    // advances with that updated twist.
    const Vector6d nu_next = corrected.twist() + model.dt * f(corrected, u);
    VehicleState expect = corrected;
    expect.set_twist(nu_next);
    expect = kinematic_step(expect, model.dt);
    corrected = corrected_step(model, f, corrected, u);
    CHECK(corrected.to_vector() == expect.to_vector());
  }
}

TEST_CASE("trained correction removes a constant one-step bias") {
  TwistDeriv f = toy_field(0.5);
  Dataset ds = rollout_dataset(f, 1001, 3, 47);
  Vector6d b;
  b << 0.02, -0.015, 0.01, 0.008, -0.012, 0.02;
  TwistDeriv off = [&](const VehicleState& s, const ControlInput& u) {
    return Vector6d(f(s, u) - b / ds.dt);
  };
  ds.segments[0].states[500].lin_vel += 1e-7 * Eigen::Vector3d::Ones();
  ds.segments[0].states[500].ang_vel += 1e-7 * Eigen::Vector3d::Ones();
  ResidualDataset rd = build_residual_dataset(ds, off);
  TrainConfig c;
  c.epochs = 60;
  c.hidden_width = 32;
  c.batch_size = 256;
  ResidualModel model = train_residual(rd, c, 11);

  const Segment& seg = ds.segments[0];
  double uncorrected = 0.0, corrected = 0.0;
  for (int k = 0; k < 100; ++k) {
    VehicleState s = seg.states[k];
    const Vector6d truth = seg.states[k + 1].twist();
    const Vector6d nom = nominal_next_twist(off, s, seg.inputs[k], ds.dt);
    const VehicleState cs = corrected_step(model, off, s, seg.inputs[k]);
    uncorrected += (nom - truth).norm();
    corrected += (cs.twist() - truth).norm();
  }
  // The nominal error per step is |b|; the corrector should recover ~all of it.
  CHECK(uncorrected / 100 == doctest::Approx(b.norm()).epsilon(1e-3));
  CHECK(corrected < 0.02 * uncorrected);
}

TEST_CASE("corrected twist beyond the instability bound throws") {
  ResidualModel model = tiny_model(2, 8, 9, 0.0);
  model.instability_bound = 0.1;
  for (auto& b : model.biases) b.setZero();
  model.biases.back().setConstant(5.0);  // huge predicted residual
  TwistDeriv f = toy_field(0.0);
  VehicleState s;
  CHECK_THROWS_AS(
      corrected_step(model, f, s, ControlInput(Eigen::Vector2d(0.1, 0.1))),
      NumericError);
}

TEST_CASE("residual model save/load round trip is bit exact") {
  ResidualModel model = tiny_model(3, 16, 10);
  model.normalizer.residual_mean << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const std::string path = "/tmp/uwsysid_test_residual.model";
  save_residual(model, path, "prov");
  ResidualModel back = load_residual(path);
  REQUIRE(back.weights.size() == model.weights.size());
  for (size_t l = 0; l < model.weights.size(); ++l) {
    CHECK(back.weights[l] == model.weights[l]);
    CHECK(back.biases[l] == model.biases[l]);
  }
  CHECK(back.normalizer.residual_mean == model.normalizer.residual_mean);
  CHECK(back.instability_bound == model.instability_bound);
  CHECK(back.dt == model.dt);
  std::remove(path.c_str());
}
