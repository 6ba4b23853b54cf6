#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwsysid/dynamics.hpp"
#include "uwsysid/ingest.hpp"

namespace uwsysid {

enum class HuberForm {
  kContinuous,  // 0.5 r^2 on the quadratic branch (C1 at the breakpoint)
  kAsWritten,   // r^2 on the quadratic branch
};

enum class HuberReduction {
  kPerSample,   // one Euclidean norm over the error vector
  kPerElement,  // scalar Huber per element, summed
};

/// Huber loss of an error vector.
double huber_loss(const Eigen::VectorXd& r, double beta,
                  HuberForm form = HuberForm::kContinuous,
                  HuberReduction reduction = HuberReduction::kPerSample);

/// SiLU activation x * sigmoid(x).
double silu(double x);

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 768;
  double learning_rate = 3e-3;
  double weight_decay = 1e-5;
  double lr_gamma = 0.997;   // per-epoch exponential decay
  double huber_beta = 0.9;
  HuberForm huber_form = HuberForm::kContinuous;
  HuberReduction huber_reduction = HuberReduction::kPerSample;
  int hidden_width = 256;
  int hidden_layers = 4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool log_epochs = false;
};

/// Normalized feature/target pairs for the one-step residual regression.
/// Feature layout per column: [gt twist at k (6); sim twist at k+1 (6);
/// input at k (m)], all z-scored.
struct ResidualDataset {
  Eigen::MatrixXd features;  // (12+m) x N
  Eigen::MatrixXd targets;   // 6 x N, z-scored residuals
  Normalizer normalizer;
  int input_dim = 0;
  double dt = 0.0;
  double max_abs_twist = 0.0;  // over the ground-truth twists, physical units
};

/// Assembles residual samples from ground truth and a nominal twist-derivative
/// model, one sample per in-segment transition; fits the normalizer on these
/// samples. Throws DataError when any residual element has zero variance.
ResidualDataset build_residual_dataset(const Dataset& gt,
                                       const TwistDeriv& nominal);

/// MLP weights plus the normalization statistics they were trained with.
struct ResidualModel {
  std::vector<Eigen::MatrixXd> weights;  // layer l: out x in
  std::vector<Eigen::VectorXd> biases;
  Normalizer normalizer;
  TrainConfig config;
  double dt = 0.02;
  double instability_bound = 0.0;  // on any corrected twist element

  int input_dim() const {
    return static_cast<int>(weights.front().cols()) - 12;
  }
};

/// Deterministic forward pass; columns are samples.
Eigen::MatrixXd mlp_forward(const ResidualModel& model,
                            const Eigen::MatrixXd& z);

/// Trains the residual MLP with decoupled-weight-decay Adam over seeded
/// shuffled minibatches; returns the best-so-far weights by epoch training
/// loss. Throws NumericError with the epoch index on NaN loss.
ResidualModel train_residual(const ResidualDataset& data,
                             const TrainConfig& config, std::uint64_t seed);

/// Max relative error between analytic weight gradients and central finite
/// differences (step 1e-6) on a seeded subsample of the weights.
double gradient_check(const ResidualModel& model, const Eigen::MatrixXd& z,
                      const Eigen::MatrixXd& targets, std::uint64_t seed,
                      int num_probes = 60);

/// One corrected step: nominal one-step Euler twist plus the un-normalized
/// predicted residual; pose advanced kinematically with the pre-update
/// (already corrected) twist. Throws NumericError when the corrected twist
/// exceeds the instability bound.
VehicleState corrected_step(const ResidualModel& model,
                            const TwistDeriv& nominal,
                            const VehicleState& state,
                            const ControlInput& input);

/// Nominal twist for the same step, exposed for dataset assembly and the
/// uncorrected baseline.
Vector6d nominal_next_twist(const TwistDeriv& nominal,
                            const VehicleState& state,
                            const ControlInput& input, double dt);

void save_residual(const ResidualModel& model, const std::string& path,
                   const std::string& provenance = "");
ResidualModel load_residual(const std::string& path);

}  // namespace uwsysid
