#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uwsysid/core.hpp"

namespace uwsysid {

/// One raw log row: timestamp, 12 state fields, m input channels, optional
/// manual segment id.
struct RawRow {
  double t = 0.0;
  Vector12d state = Vector12d::Zero();
  Eigen::VectorXd input;
  int segment = 0;
  int source_line = 0;  // 1-based line in the source file
};

struct CleaningReport {
  int rows_in = 0;
  int duplicates_dropped = 0;
  int nans_dropped = 0;
  int segments_out = 0;
  std::string summary() const;
};

struct RawLog {
  std::vector<RawRow> rows;
  int input_dim = 0;
  bool has_segment_column = false;
  std::string source;
  CleaningReport report;
};

/// Contiguous uniformly sampled trajectory.
struct Segment {
  std::vector<VehicleState> states;
  std::vector<ControlInput> inputs;
  double t0 = 0.0;
  int size() const { return static_cast<int>(states.size()); }
};

struct Dataset {
  std::vector<Segment> segments;
  double dt = 0.0;
  int input_dim = 0;
  std::string provenance;

  int total_samples() const;
  /// All states flattened, one column per sample.
  Eigen::MatrixXd state_matrix() const;
};

/// Column schema for the CSV log format. Required columns:
/// t, x, y, z, phi, theta, psi, u, v, w, p, q, r, u1..um; optional `segment`.
struct LogSchema {
  int input_dim = 8;
};

/// Parses a CSV log. Non-numeric cells and missing columns raise DataError
/// naming the offending line. Lines starting with '#' are ignored.
RawLog load_log(const std::string& path, const LogSchema& schema = {});

/// Sorts by timestamp, collapses duplicate timestamps to the last occurrence,
/// drops NaN rows. Throws DataError if nothing survives.
RawLog clean(const RawLog& log);

struct ResampleOptions {
  double rate_hz = 50.0;
  /// Gaps longer than this many output periods split the log into segments.
  double gap_periods = 5.0;
  double gimbal_margin = kDefaultGimbalMargin;
};

/// Zero-order-hold resampling to a uniform rate; honors manual segment ids
/// and splits on long gaps. Throws DataError on an effectively empty log.
Dataset resample(const RawLog& log, const ResampleOptions& opts = {});

/// Chronological split: first floor(fraction * total) samples to train,
/// the rest to test. The straddling segment is split in two.
std::pair<Dataset, Dataset> split_chronological(const Dataset& ds,
                                                double train_fraction);

/// z-score statistics for residual-model features and targets.
struct Normalizer {
  Eigen::VectorXd input_mean, input_std;        // per channel, length m
  Vector6d vel_mean, vel_std;                   // joint over real + sim twists
  Vector6d residual_mean, residual_std;         // mu_delta, sigma_delta

  Vector6d normalize_twist(const Vector6d& nu) const {
    return (nu - vel_mean).cwiseQuotient(vel_std);
  }
  Eigen::VectorXd normalize_input(const Eigen::VectorXd& u) const {
    return (u - input_mean).cwiseQuotient(input_std);
  }
  Vector6d normalize_residual(const Vector6d& d) const {
    return (d - residual_mean).cwiseQuotient(residual_std);
  }
  Vector6d denormalize_residual(const Vector6d& d) const {
    return d.cwiseProduct(residual_std) + residual_mean;
  }
};

/// Fits z-score statistics: input stats per channel over ds, velocity stats
/// jointly over the real twists of ds and the aligned simulated twists, and
/// element-wise residual stats over (real - sim). sim_twists must hold one
/// column per sample of ds, in dataset order. Throws DataError on any
/// zero standard deviation, naming the feature.
Normalizer fit_normalizer(const Dataset& ds, const Eigen::MatrixXd& sim_twists);

/// Matrix form of fit_normalizer: inputs (m x N), real and simulated twists
/// (6 x N each, pooled for the joint velocity statistics), residuals (6 x N).
Normalizer fit_normalizer_matrices(const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& real_twists,
                                   const Eigen::MatrixXd& sim_twists,
                                   const Eigen::MatrixXd& residuals);

/// Writes a dataset in the CSV log schema. `header_comment` lines (without
/// leading '#') are emitted first as comments.
void write_dataset_csv(const Dataset& ds, const std::string& path,
                       const std::vector<std::string>& header_comment = {});

}  // namespace uwsysid
