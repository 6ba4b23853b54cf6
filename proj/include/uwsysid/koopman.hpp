#pragma once

#include <cstdint>
#include <string>

#include "uwsysid/ingest.hpp"

namespace uwsysid {

/// Gaussian RBF dictionary appended to the raw state:
///   phi_i(x) = exp(-gamma ||x - c_i||^2)
struct RbfDictionary {
  Eigen::MatrixXd centers;  // n x K, one center per column
  double gamma = 3.0;
  int n = 12;

  int num_centers() const { return static_cast<int>(centers.cols()); }
  int lifted_dim() const { return n + num_centers(); }
};

/// Lifted vector z = [x; phi_1(x); ...; phi_K(x)].
Eigen::VectorXd lift(const Eigen::VectorXd& x, const RbfDictionary& dict);

/// Column-wise lift of a batch of states.
Eigen::MatrixXd lift_batch(const Eigen::MatrixXd& xs, const RbfDictionary& dict);

/// Lifted linear model z' = A z + B u with fixed decoder C = [I_n 0].
struct KoopmanModel {
  RbfDictionary dictionary;
  Eigen::MatrixXd a;  // d x d
  Eigen::MatrixXd b;  // d x m
  double lambda = 0.1;
  double dt = 0.02;
  std::uint64_t seed = 0;

  int lifted_dim() const { return dictionary.lifted_dim(); }
  int input_dim() const { return static_cast<int>(b.cols()); }
};

/// Lloyd k-means with seeded greedy farthest-point initialization.
/// points: one sample per column. Deterministic per seed; empty clusters are
/// re-seeded to the point farthest from the cluster's previous center.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, int k,
                       std::uint64_t seed, int max_iters = 300);

struct EdmdcOptions {
  int num_centers = 500;
  double gamma = 3.0;
  double lambda = 0.1;
  int kmeans_max_iters = 300;
};

/// EDMDc with an RBF dictionary: k-means centers on the training states,
/// snapshot assembly within segments, closed-form ridge solve
///   [A B] = Theta(Y) G^T (G G^T + lambda I)^-1,  G = [Theta(X); U].
/// Throws DataError when lambda = 0 and G is rank-deficient.
KoopmanModel edmdc_fit(const Dataset& train, const EdmdcOptions& opts,
                       std::uint64_t seed);

/// One lifted step z' = A z + B u.
Eigen::VectorXd koopman_step(const KoopmanModel& model,
                             const Eigen::VectorXd& z,
                             const ControlInput& u);

/// Decoder C = [I_n 0]: the first n lifted coordinates.
Eigen::VectorXd decode(const KoopmanModel& model, const Eigen::VectorXd& z);

void save_koopman(const KoopmanModel& model, const std::string& path,
                  const std::string& provenance = "");
KoopmanModel load_koopman(const std::string& path);

}  // namespace uwsysid
