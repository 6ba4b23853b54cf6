#include "uwsysid/koopman.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "uwsysid/serialize.hpp"

namespace uwsysid {

namespace {

// Squared distances between every point (column) and every center (column):
// result is K x N.
Eigen::MatrixXd sq_dists(const Eigen::MatrixXd& centers,
                         const Eigen::MatrixXd& points) {
  Eigen::VectorXd cn = centers.colwise().squaredNorm();
  Eigen::VectorXd pn = points.colwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * centers.transpose() * points;
  d.colwise() += cn;
  d.rowwise() += pn.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

Eigen::MatrixXd lift_batch(const Eigen::MatrixXd& xs,
                           const RbfDictionary& dict) {
  if (xs.rows() != dict.n)
    throw DataError("lift: state dimension mismatch");
  Eigen::MatrixXd z(dict.lifted_dim(), xs.cols());
  z.topRows(dict.n) = xs;
  if (dict.num_centers() > 0)
    z.bottomRows(dict.num_centers()) =
        (-dict.gamma * sq_dists(dict.centers, xs)).array().exp();
  return z;
}

Eigen::VectorXd lift(const Eigen::VectorXd& x, const RbfDictionary& dict) {
  return lift_batch(x, dict).col(0);
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, int k,
                       std::uint64_t seed, int max_iters) {
  const int n_pts = static_cast<int>(points.cols());
  if (k < 1 || k > n_pts)
    throw ConfigError("kmeans: need 1 <= K <= sample count");

  // Greedy farthest-point seeding from a seeded random start.
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(points.rows(), k);
  int first = static_cast<int>(rng() % static_cast<std::uint64_t>(n_pts));
  centers.col(0) = points.col(first);
  Eigen::VectorXd min_d =
      sq_dists(centers.leftCols(1), points).row(0).transpose();
  for (int i = 1; i < k; ++i) {
    int far = 0;
    min_d.maxCoeff(&far);
    centers.col(i) = points.col(far);
    Eigen::VectorXd d = sq_dists(centers.col(i), points).row(0).transpose();
    min_d = min_d.cwiseMin(d);
  }

  std::vector<int> assign(n_pts, -1), prev(n_pts, -2);
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::MatrixXd d = sq_dists(centers, points);
    for (int j = 0; j < n_pts; ++j) {
      int best = 0;
      d.col(j).minCoeff(&best);
      assign[j] = best;
    }
    if (assign == prev) break;
    prev = assign;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (int j = 0; j < n_pts; ++j) {
      sums.col(assign[j]) += points.col(j);
      counts(assign[j]) += 1.0;
    }
    for (int i = 0; i < k; ++i) {
      if (counts(i) > 0) {
        centers.col(i) = sums.col(i) / counts(i);
      } else {
        // re-seed to the point farthest from the stale center
        Eigen::VectorXd dd = sq_dists(centers.col(i), points).row(0).transpose();
        int far = 0;
        dd.maxCoeff(&far);
        centers.col(i) = points.col(far);
      }
    }
  }
  return centers;
}

KoopmanModel edmdc_fit(const Dataset& train, const EdmdcOptions& opts,
                       std::uint64_t seed) {
  if (train.total_samples() == 0) throw DataError("edmdc_fit: empty dataset");
  if (!(opts.gamma > 0)) throw ConfigError("edmdc_fit: gamma must be > 0");
  if (opts.lambda < 0) throw ConfigError("edmdc_fit: lambda must be >= 0");

  const int m = train.input_dim;
  int pairs = 0;
  for (const auto& seg : train.segments) pairs += std::max(0, seg.size() - 1);
  if (pairs == 0) throw DataError("edmdc_fit: no snapshot pairs");

  KoopmanModel model;
  model.dictionary.gamma = opts.gamma;
  model.dictionary.n = 12;
  model.lambda = opts.lambda;
  model.dt = train.dt;
  model.seed = seed;

  Eigen::MatrixXd states = train.state_matrix();
  if (opts.num_centers > 0)
    model.dictionary.centers =
        kmeans(states, opts.num_centers, seed, opts.kmeans_max_iters);
  else
    model.dictionary.centers.resize(12, 0);

  // Snapshot matrices, pairs taken only within segments.
  Eigen::MatrixXd x(12, pairs), y(12, pairs), u(m, pairs);
  int j = 0;
  for (const auto& seg : train.segments) {
    for (int k = 0; k + 1 < seg.size(); ++k, ++j) {
      x.col(j) = seg.states[k].to_vector();
      y.col(j) = seg.states[k + 1].to_vector();
      u.col(j) = seg.inputs[k].channels;
    }
  }

  const int d = model.dictionary.lifted_dim();
  Eigen::MatrixXd theta_x = lift_batch(x, model.dictionary);
  Eigen::MatrixXd theta_y = lift_batch(y, model.dictionary);
  Eigen::MatrixXd g(d + m, pairs);
  g.topRows(d) = theta_x;
  g.bottomRows(m) = u;

  Eigen::MatrixXd gram = g * g.transpose();
  if (opts.lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.eigenvalues().minCoeff() <
        1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw DataError("edmdc_fit: ill-posed (rank-deficient G, lambda = 0)");
  }
  gram.diagonal().array() += opts.lambda;

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  Eigen::MatrixXd ab;  // d x (d+m)
  if (llt.info() == Eigen::Success) {
    ab = llt.solve(g * theta_y.transpose()).transpose();
  } else {
    ab = gram.ldlt().solve(g * theta_y.transpose()).transpose();
  }
  if (!ab.allFinite()) throw NumericError("edmdc_fit: solve failed");

  model.a = ab.leftCols(d);
  model.b = ab.rightCols(m);
  return model;
}

Eigen::VectorXd koopman_step(const KoopmanModel& model,
                             const Eigen::VectorXd& z,
                             const ControlInput& u) {
  return model.a * z + model.b * u.channels;
}

Eigen::VectorXd decode(const KoopmanModel& model, const Eigen::VectorXd& z) {
  return z.head(model.dictionary.n);
}

void save_koopman(const KoopmanModel& model, const std::string& path,
                  const std::string& provenance) {
  ModelWriter w(path, "koopman", 1);
  if (!provenance.empty()) w.text("provenance", provenance);
  w.integer("n", model.dictionary.n);
  w.integer("K", model.dictionary.num_centers());
  w.integer("m", model.input_dim());
  w.scalar("gamma", model.dictionary.gamma);
  w.scalar("lambda", model.lambda);
  w.scalar("dt", model.dt);
  w.integer("seed", static_cast<long long>(model.seed));
  w.array("centers", model.dictionary.centers);
  w.array("A", model.a);
  w.array("B", model.b);
}

KoopmanModel load_koopman(const std::string& path) {
  ModelReader r(path, "koopman", 1);
  KoopmanModel model;
  const int n = static_cast<int>(r.integer("n"));
  const int k = static_cast<int>(r.integer("K"));
  const int m = static_cast<int>(r.integer("m"));
  model.dictionary.n = n;
  model.dictionary.gamma = r.scalar("gamma");
  model.dictionary.centers = r.array("centers", n, k);
  model.lambda = r.scalar("lambda");
  model.dt = r.scalar("dt");
  model.seed = static_cast<std::uint64_t>(r.integer("seed"));
  model.a = r.array("A", n + k, n + k);
  model.b = r.array("B", n + k, m);
  return model;
}

}  // namespace uwsysid
