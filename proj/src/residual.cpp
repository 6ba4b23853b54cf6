#include "uwsysid/residual.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "uwsysid/serialize.hpp"

namespace uwsysid {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

namespace {

double huber_scalar(double a, double beta, HuberForm form) {
  const double r = std::abs(a);
  if (r <= beta)
    return form == HuberForm::kContinuous ? 0.5 * r * r : r * r;
  return beta * (r - 0.5 * beta);
}

}  // namespace

double huber_loss(const Eigen::VectorXd& r, double beta, HuberForm form,
                  HuberReduction reduction) {
  if (!(beta > 0)) throw ConfigError("huber_loss: beta must be > 0");
  if (reduction == HuberReduction::kPerSample)
    return huber_scalar(r.norm(), beta, form);
  double acc = 0.0;
  for (int i = 0; i < r.size(); ++i) acc += huber_scalar(r(i), beta, form);
  return acc;
}

namespace {

// Gradient of the per-sample Huber loss w.r.t. the error vector.
Eigen::VectorXd huber_grad(const Eigen::VectorXd& r, double beta,
                           HuberForm form, HuberReduction reduction) {
  if (reduction == HuberReduction::kPerSample) {
    const double nrm = r.norm();
    if (nrm <= beta)
      return form == HuberForm::kContinuous ? r : Eigen::VectorXd(2.0 * r);
    return (beta / std::max(nrm, 1e-300)) * r;
  }
  Eigen::VectorXd g(r.size());
  for (int i = 0; i < r.size(); ++i) {
    const double a = r(i);
    if (std::abs(a) <= beta)
      g(i) = form == HuberForm::kContinuous ? a : 2.0 * a;
    else
      g(i) = a > 0 ? beta : -beta;
  }
  return g;
}

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> pre;  // pre-activations per layer
  std::vector<Mat<Scalar>> act;  // act[0] is the input batch
};

// Training and the gradient check share this pass; training runs it in
// single precision for GEMM throughput, the check in double.
template <typename Scalar>
Mat<Scalar> forward(const std::vector<Mat<Scalar>>& w,
                    const std::vector<Vec<Scalar>>& b, const Mat<Scalar>& x,
                    ForwardCache<Scalar>* cache) {
  const int layers = static_cast<int>(w.size());
  Mat<Scalar> a = x;
  if (cache) {
    cache->pre.resize(layers);
    cache->act.resize(layers + 1);
    cache->act[0] = x;
  }
  for (int l = 0; l < layers; ++l) {
    Mat<Scalar> z = (w[l] * a).colwise() + b[l];
    if (l + 1 < layers)
      a = (z.array() / (Scalar(1) + (-z.array()).exp())).matrix();
    else
      a = z;
    if (cache) {
      cache->pre[l] = std::move(z);
      cache->act[l + 1] = a;
    }
  }
  return a;
}

// Mean Huber loss over the batch; fills weight/bias gradients when asked.
template <typename Scalar>
double loss_and_grad(const std::vector<Mat<Scalar>>& w,
                     const std::vector<Vec<Scalar>>& b, const Mat<Scalar>& x,
                     const Mat<Scalar>& y, const TrainConfig& cfg,
                     std::vector<Mat<Scalar>>* gw,
                     std::vector<Vec<Scalar>>* gb) {
  const int layers = static_cast<int>(w.size());
  const int n = static_cast<int>(x.cols());
  ForwardCache<Scalar> cache;
  Mat<Scalar> pred = forward(w, b, x, gw ? &cache : nullptr);

  double loss = 0.0;
  Mat<Scalar> dpred(pred.rows(), n);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd r =
        (pred.col(j) - y.col(j)).template cast<double>();
    loss += huber_loss(r, cfg.huber_beta, cfg.huber_form, cfg.huber_reduction);
    if (gw)
      dpred.col(j) =
          (huber_grad(r, cfg.huber_beta, cfg.huber_form, cfg.huber_reduction) /
           static_cast<double>(n))
              .template cast<Scalar>();
  }
  loss /= static_cast<double>(n);
  if (!gw) return loss;

  gw->resize(layers);
  gb->resize(layers);
  Mat<Scalar> delta = dpred;  // gradient w.r.t. the layer pre-activation
  for (int l = layers - 1; l >= 0; --l) {
    (*gw)[l].noalias() = delta * cache.act[l].transpose();
    (*gb)[l] = delta.rowwise().sum();
    if (l > 0) {
      Mat<Scalar> da = w[l].transpose() * delta;
      const auto pre = cache.pre[l - 1].array();
      const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> s =
          Scalar(1) / (Scalar(1) + (-pre).exp());
      delta = (da.array() * (s * (Scalar(1) + pre * (Scalar(1) - s))))
                  .matrix();
    }
  }
  return loss;
}

}  // namespace

Eigen::MatrixXd mlp_forward(const ResidualModel& model,
                            const Eigen::MatrixXd& z) {
  if (z.rows() != model.weights.front().cols())
    throw DataError("mlp_forward: feature dimension mismatch");
  return forward<double>(model.weights, model.biases, z, nullptr);
}

ResidualDataset build_residual_dataset(const Dataset& gt,
                                       const TwistDeriv& nominal) {
  const int m = gt.input_dim;
  int pairs = 0;
  for (const auto& seg : gt.segments) pairs += std::max(0, seg.size() - 1);
  if (pairs == 0) throw DataError("build_residual_dataset: no transitions");

  Eigen::MatrixXd prev(6, pairs), sim(6, pairs), u(m, pairs), delta(6, pairs);
  double max_twist = 0.0;
  int j = 0;
  for (const auto& seg : gt.segments) {
    for (int k = 0; k + 1 < seg.size(); ++k, ++j) {
      prev.col(j) = seg.states[k].twist();
      sim.col(j) = nominal_next_twist(nominal, seg.states[k], seg.inputs[k],
                                      gt.dt);
      u.col(j) = seg.inputs[k].channels;
      delta.col(j) = seg.states[k + 1].twist() - sim.col(j);
      max_twist = std::max(
          {max_twist, prev.col(j).cwiseAbs().maxCoeff(),
           seg.states[k + 1].twist().cwiseAbs().maxCoeff()});
    }
  }

  ResidualDataset out;
  try {
    out.normalizer = fit_normalizer_matrices(u, prev, sim, delta);
  } catch (const DataError& e) {
    if (std::string(e.what()).find("residual") != std::string::npos)
      throw DataError(
          "build_residual_dataset: degenerate target (zero residual "
          "variance)");
    throw;
  }
  out.input_dim = m;
  out.dt = gt.dt;
  out.max_abs_twist = max_twist;
  out.features.resize(12 + m, pairs);
  out.targets.resize(6, pairs);
  for (int k = 0; k < pairs; ++k) {
    out.features.col(k).head<6>() = out.normalizer.normalize_twist(prev.col(k));
    out.features.col(k).segment<6>(6) =
        out.normalizer.normalize_twist(sim.col(k));
    out.features.col(k).tail(m) = out.normalizer.normalize_input(u.col(k));
    out.targets.col(k) = out.normalizer.normalize_residual(delta.col(k));
  }
  return out;
}

ResidualModel train_residual(const ResidualDataset& data,
                             const TrainConfig& config, std::uint64_t seed) {
  const int n = static_cast<int>(data.features.cols());
  if (n == 0) throw DataError("train_residual: no samples");
  const int in_dim = static_cast<int>(data.features.rows());

  std::mt19937_64 rng(seed);
  std::vector<int> widths;
  widths.push_back(in_dim);
  for (int l = 0; l < config.hidden_layers; ++l)
    widths.push_back(config.hidden_width);
  widths.push_back(6);
  const int layers = static_cast<int>(widths.size()) - 1;

  // Optimization runs in single precision: the AdamW/MLP math is
  // GEMM-bound and float doubles the SIMD width; gradient_check exercises
  // the same templated pass in double on the stored float64 weights.
  std::vector<Mat<float>> w(layers);
  std::vector<Vec<float>> b(layers);
  for (int l = 0; l < layers; ++l) {
    const double s = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
    std::uniform_real_distribution<double> unif(-s, s);
    w[l].resize(widths[l + 1], widths[l]);
    for (int i = 0; i < w[l].rows(); ++i)
      for (int jj = 0; jj < w[l].cols(); ++jj)
        w[l](i, jj) = static_cast<float>(unif(rng));
    b[l] = Vec<float>::Zero(widths[l + 1]);
  }

  const Mat<float> feats = data.features.cast<float>();
  const Mat<float> targets = data.targets.cast<float>();

  // AdamW state
  std::vector<Mat<float>> mw(layers), vw(layers);
  std::vector<Vec<float>> mb(layers), vb(layers);
  for (int l = 0; l < layers; ++l) {
    mw[l] = Mat<float>::Zero(w[l].rows(), w[l].cols());
    vw[l] = mw[l];
    mb[l] = Vec<float>::Zero(b[l].size());
    vb[l] = mb[l];
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Mat<float>> best_w = w;
  std::vector<Vec<float>> best_b = b;
  double best_loss = std::numeric_limits<double>::infinity();

  long long t = 0;
  double lr = config.learning_rate;
  std::vector<Mat<float>> gw;
  std::vector<Vec<float>> gb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int bs = std::min(config.batch_size, n - start);
      Mat<float> x(in_dim, bs), y(6, bs);
      for (int k = 0; k < bs; ++k) {
        x.col(k) = feats.col(order[start + k]);
        y.col(k) = targets.col(order[start + k]);
      }
      const double loss = loss_and_grad(w, b, x, y, config, &gw, &gb);
      if (!std::isfinite(loss))
        throw NumericError("train_residual: NaN loss at epoch " +
                           std::to_string(epoch));
      epoch_loss += loss;
      ++batches;

      ++t;
      const float b1 = static_cast<float>(config.adam_beta1);
      const float b2 = static_cast<float>(config.adam_beta2);
      const float bc1 = static_cast<float>(1.0 - std::pow(config.adam_beta1, t));
      const float bc2 = static_cast<float>(1.0 - std::pow(config.adam_beta2, t));
      const float flr = static_cast<float>(lr);
      const float eps = static_cast<float>(config.adam_eps);
      const float wd = static_cast<float>(config.weight_decay);
      for (int l = 0; l < layers; ++l) {
        mw[l] = b1 * mw[l] + (1.0f - b1) * gw[l];
        vw[l] = b2 * vw[l] + (1.0f - b2) * gw[l].cwiseProduct(gw[l]);
        w[l] -= flr * ((mw[l] / bc1).cwiseQuotient(
                           ((vw[l] / bc2).cwiseSqrt().array() + eps).matrix()) +
                       wd * w[l]);
        mb[l] = b1 * mb[l] + (1.0f - b1) * gb[l];
        vb[l] = b2 * vb[l] + (1.0f - b2) * gb[l].cwiseProduct(gb[l]);
        b[l] -= flr * ((mb[l] / bc1).cwiseQuotient(
                           ((vb[l] / bc2).cwiseSqrt().array() + eps).matrix()) +
                       wd * b[l]);
      }
    }
    epoch_loss /= std::max(1, batches);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_w = w;
      best_b = b;
    }
    if (config.log_epochs)
      std::cerr << "epoch " << epoch << " loss " << epoch_loss << " lr " << lr
                << "\n";
    lr *= config.lr_gamma;
  }

  ResidualModel model;
  model.weights.resize(layers);
  model.biases.resize(layers);
  for (int l = 0; l < layers; ++l) {
    model.weights[l] = best_w[l].cast<double>();
    model.biases[l] = best_b[l].cast<double>();
  }
  model.normalizer = data.normalizer;
  model.config = config;
  model.dt = data.dt;
  model.instability_bound = 10.0 * std::max(data.max_abs_twist, 1e-6);
  return model;
}

double gradient_check(const ResidualModel& model, const Eigen::MatrixXd& z,
                      const Eigen::MatrixXd& targets, std::uint64_t seed,
                      int num_probes) {
  std::vector<Eigen::MatrixXd> w = model.weights;
  std::vector<Eigen::VectorXd> b = model.biases;
  std::vector<Eigen::MatrixXd> gw;
  std::vector<Eigen::VectorXd> gb;
  loss_and_grad(w, b, z, targets, model.config, &gw, &gb);

  std::mt19937_64 rng(seed);
  const double h = 1e-6;
  double max_rel = 0.0;
  const int layers = static_cast<int>(w.size());
  for (int probe = 0; probe < num_probes; ++probe) {
    const int l = static_cast<int>(rng() % layers);
    const int i = static_cast<int>(rng() % w[l].rows());
    const int j = static_cast<int>(rng() % w[l].cols());
    const double orig = w[l](i, j);
    w[l](i, j) = orig + h;
    const double lp = loss_and_grad<double>(w, b, z, targets, model.config,
                                            nullptr, nullptr);
    w[l](i, j) = orig - h;
    const double lm = loss_and_grad<double>(w, b, z, targets, model.config,
                                            nullptr, nullptr);
    w[l](i, j) = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = gw[l](i, j);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

Vector6d nominal_next_twist(const TwistDeriv& nominal,
                            const VehicleState& state,
                            const ControlInput& input, double dt) {
  return state.twist() + dt * nominal(state, input);
}

VehicleState corrected_step(const ResidualModel& model,
                            const TwistDeriv& nominal,
                            const VehicleState& state,
                            const ControlInput& input) {
  const int m = input.dim();
  const Vector6d nu_sim = nominal_next_twist(nominal, state, input, model.dt);

  Eigen::VectorXd z(12 + m);
  z.head<6>() = model.normalizer.normalize_twist(state.twist());
  z.segment<6>(6) = model.normalizer.normalize_twist(nu_sim);
  z.tail(m) = model.normalizer.normalize_input(input.channels);

  const Vector6d delta_hat =
      model.normalizer.denormalize_residual(mlp_forward(model, z).col(0));
  const Vector6d corrected = nu_sim + delta_hat;
  if (model.instability_bound > 0 &&
      (!corrected.allFinite() ||
       corrected.cwiseAbs().maxCoeff() > model.instability_bound))
    throw NumericError("corrected_step: twist exceeded instability bound");

  // Pose advances with the corrected twist, unlike the plain Euler path.
  VehicleState next = state;
  next.set_twist(corrected);
  return kinematic_step(next, model.dt);
}

void save_residual(const ResidualModel& model, const std::string& path,
                   const std::string& provenance) {
  ModelWriter w(path, "residual", 1);
  if (!provenance.empty()) w.text("provenance", provenance);
  w.integer("layers", static_cast<long long>(model.weights.size()));
  w.scalar("dt", model.dt);
  w.scalar("instability_bound", model.instability_bound);
  for (size_t l = 0; l < model.weights.size(); ++l) {
    w.integer("rows" + std::to_string(l), model.weights[l].rows());
    w.integer("cols" + std::to_string(l), model.weights[l].cols());
    w.array("w" + std::to_string(l), model.weights[l]);
    w.array("b" + std::to_string(l), model.biases[l]);
  }
  const Normalizer& nz = model.normalizer;
  w.integer("m", nz.input_mean.size());
  w.array("input_mean", nz.input_mean);
  w.array("input_std", nz.input_std);
  w.array("vel_mean", Eigen::VectorXd(nz.vel_mean));
  w.array("vel_std", Eigen::VectorXd(nz.vel_std));
  w.array("residual_mean", Eigen::VectorXd(nz.residual_mean));
  w.array("residual_std", Eigen::VectorXd(nz.residual_std));
  const TrainConfig& c = model.config;
  w.integer("epochs", c.epochs);
  w.integer("batch_size", c.batch_size);
  w.scalar("learning_rate", c.learning_rate);
  w.scalar("weight_decay", c.weight_decay);
  w.scalar("lr_gamma", c.lr_gamma);
  w.scalar("huber_beta", c.huber_beta);
  w.integer("huber_form", static_cast<long long>(c.huber_form));
  w.integer("huber_reduction", static_cast<long long>(c.huber_reduction));
  w.integer("hidden_width", c.hidden_width);
  w.integer("hidden_layers", c.hidden_layers);
}

ResidualModel load_residual(const std::string& path) {
  ModelReader r(path, "residual", 1);
  ResidualModel model;
  const int layers = static_cast<int>(r.integer("layers"));
  model.dt = r.scalar("dt");
  model.instability_bound = r.scalar("instability_bound");
  model.weights.resize(layers);
  model.biases.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const int rows = static_cast<int>(r.integer("rows" + std::to_string(l)));
    const int cols = static_cast<int>(r.integer("cols" + std::to_string(l)));
    model.weights[l] = r.array("w" + std::to_string(l), rows, cols);
    model.biases[l] = r.vector("b" + std::to_string(l), rows);
  }
  const int m = static_cast<int>(r.integer("m"));
  model.normalizer.input_mean = r.vector("input_mean", m);
  model.normalizer.input_std = r.vector("input_std", m);
  model.normalizer.vel_mean = r.vector("vel_mean", 6);
  model.normalizer.vel_std = r.vector("vel_std", 6);
  model.normalizer.residual_mean = r.vector("residual_mean", 6);
  model.normalizer.residual_std = r.vector("residual_std", 6);
  TrainConfig& c = model.config;
  c.epochs = static_cast<int>(r.integer("epochs"));
  c.batch_size = static_cast<int>(r.integer("batch_size"));
  c.learning_rate = r.scalar("learning_rate");
  c.weight_decay = r.scalar("weight_decay");
  c.lr_gamma = r.scalar("lr_gamma");
  c.huber_beta = r.scalar("huber_beta");
  c.huber_form = static_cast<HuberForm>(r.integer("huber_form"));
  c.huber_reduction = static_cast<HuberReduction>(r.integer("huber_reduction"));
  c.hidden_width = static_cast<int>(r.integer("hidden_width"));
  c.hidden_layers = static_cast<int>(r.integer("hidden_layers"));
  return model;
}

}  // namespace uwsysid
