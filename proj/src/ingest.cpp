#include "uwsysid/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uwsysid {

namespace {

const char* kStateNames[12] = {"x", "y", "z", "phi", "theta", "psi",
                               "u", "v", "w", "p", "q", "r"};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim
    size_t a = cell.find_first_not_of(" \t\r");
    size_t b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

double parse_cell(const std::string& s, int line_no, const std::string& col) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": column '" + col +
                    "' has non-numeric value '" + s + "'");
  }
}

}  // namespace

std::string CleaningReport::summary() const {
  std::ostringstream os;
  os << "rows in: " << rows_in << "\n"
     << "duplicates dropped: " << duplicates_dropped << "\n"
     << "NaN rows dropped: " << nans_dropped << "\n"
     << "segments out: " << segments_out << "\n";
  return os.str();
}

int Dataset::total_samples() const {
  int n = 0;
  for (const auto& s : segments) n += s.size();
  return n;
}

Eigen::MatrixXd Dataset::state_matrix() const {
  Eigen::MatrixXd x(12, total_samples());
  int j = 0;
  for (const auto& seg : segments)
    for (const auto& s : seg.states) x.col(j++) = s.to_vector();
  return x;
}

RawLog load_log(const std::string& path, const LogSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open log file: " + path);

  RawLog log;
  log.source = path;
  log.input_dim = schema.input_dim;

  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.empty()) throw DataError(path + ": empty file, no header row");

  // Resolve column indices by name.
  auto col = [&](const std::string& name, bool required) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required)
        throw DataError(path + ": missing required column '" + name + "'");
      return -1;
    }
    return static_cast<int>(it - header.begin());
  };

  int ct = col("t", true);
  int cstate[12];
  for (int i = 0; i < 12; ++i) cstate[i] = col(kStateNames[i], true);
  std::vector<int> cinput(schema.input_dim);
  for (int i = 0; i < schema.input_dim; ++i)
    cinput[i] = col("u" + std::to_string(i + 1), true);
  int cseg = col("segment", false);
  log.has_segment_column = cseg >= 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) < static_cast<int>(header.size()))
      throw DataError("line " + std::to_string(line_no) +
                      ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    RawRow row;
    row.source_line = line_no;
    row.t = parse_cell(cells[ct], line_no, "t");
    for (int i = 0; i < 12; ++i)
      row.state(i) = parse_cell(cells[cstate[i]], line_no, kStateNames[i]);
    row.input.resize(schema.input_dim);
    for (int i = 0; i < schema.input_dim; ++i)
      row.input(i) =
          parse_cell(cells[cinput[i]], line_no, "u" + std::to_string(i + 1));
    if (cseg >= 0)
      row.segment =
          static_cast<int>(parse_cell(cells[cseg], line_no, "segment"));
    log.rows.push_back(std::move(row));
  }
  return log;
}

RawLog clean(const RawLog& log) {
  RawLog out = log;
  out.rows.clear();
  out.report = CleaningReport{};
  out.report.rows_in = static_cast<int>(log.rows.size());

  std::vector<RawRow> rows = log.rows;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.t < b.t; });

  for (const auto& row : rows) {
    bool has_nan = !std::isfinite(row.t) || !row.state.allFinite() ||
                   !row.input.allFinite();
    if (has_nan) {
      ++out.report.nans_dropped;
      continue;
    }
    if (!out.rows.empty() && out.rows.back().t == row.t &&
        out.rows.back().segment == row.segment) {
      // duplicate timestamp: keep the last occurrence
      out.rows.back() = row;
      ++out.report.duplicates_dropped;
      continue;
    }
    out.rows.push_back(row);
  }
  if (out.rows.empty()) throw DataError("clean: no rows left after cleaning");
  return out;
}

Dataset resample(const RawLog& log, const ResampleOptions& opts) {
  if (!(opts.rate_hz > 0)) throw ConfigError("resample: rate must be > 0");
  const double dt = 1.0 / opts.rate_hz;
  const double gap = opts.gap_periods * dt;

  if (log.rows.empty() || log.rows.back().t - log.rows.front().t < dt)
    throw DataError("resample: log shorter than one sample period");

  Dataset ds;
  ds.dt = dt;
  ds.input_dim = log.input_dim;
  ds.provenance = "resampled from " + log.source;

  // Partition rows by manual segment id first.
  std::vector<std::vector<const RawRow*>> groups;
  for (const auto& row : log.rows) {
    if (groups.empty() || groups.back().back()->segment != row.segment)
      groups.emplace_back();
    groups.back().push_back(&row);
  }

  for (const auto& group : groups) {
    size_t i = 0;  // index of the latest row at-or-before the current tick
    while (i < group.size()) {
      Segment seg;
      seg.t0 = group[i]->t;
      double tick = seg.t0;
      while (true) {
        // advance the zero-order hold
        while (i + 1 < group.size() && group[i + 1]->t <= tick) ++i;
        if (tick - group[i]->t > gap || tick > group.back()->t) break;
        const RawRow& r = *group[i];
        VehicleState s = VehicleState::from_vector(r.state);
        for (int k = 3; k < 6; ++k) s.euler(k - 3) = wrap_angle(s.euler(k - 3));
        s.validate(opts.gimbal_margin);
        ControlInput u(r.input);
        u.validate();
        seg.states.push_back(s);
        seg.inputs.push_back(std::move(u));
        tick = seg.t0 + seg.size() * dt;
      }
      if (seg.size() > 0) ds.segments.push_back(std::move(seg));
      // skip ahead to the row after the gap
      if (tick <= group.back()->t) {
        while (i < group.size() && group[i]->t <= tick) ++i;
      } else {
        break;
      }
    }
  }

  if (ds.total_samples() == 0)
    throw DataError("resample: log shorter than one sample period");
  return ds;
}

std::pair<Dataset, Dataset> split_chronological(const Dataset& ds,
                                                double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split_chronological: fraction must be in (0, 1)");
  const int total = ds.total_samples();
  const int n_train = static_cast<int>(std::floor(train_fraction * total));

  Dataset train, test;
  train.dt = test.dt = ds.dt;
  train.input_dim = test.input_dim = ds.input_dim;
  train.provenance = ds.provenance + " [train]";
  test.provenance = ds.provenance + " [test]";

  int seen = 0;
  for (const auto& seg : ds.segments) {
    if (seen >= n_train) {
      test.segments.push_back(seg);
    } else if (seen + seg.size() <= n_train) {
      train.segments.push_back(seg);
    } else {
      const int head = n_train - seen;
      Segment a, b;
      a.t0 = seg.t0;
      a.states.assign(seg.states.begin(), seg.states.begin() + head);
      a.inputs.assign(seg.inputs.begin(), seg.inputs.begin() + head);
      b.t0 = seg.t0 + head * ds.dt;
      b.states.assign(seg.states.begin() + head, seg.states.end());
      b.inputs.assign(seg.inputs.begin() + head, seg.inputs.end());
      if (a.size() > 0) train.segments.push_back(std::move(a));
      if (b.size() > 0) test.segments.push_back(std::move(b));
    }
    seen += seg.size();
  }
  return {std::move(train), std::move(test)};
}

namespace {

void mean_std(const Eigen::MatrixXd& cols, Eigen::VectorXd& mean,
              Eigen::VectorXd& std, const std::string& what) {
  const double n = static_cast<double>(cols.cols());
  mean = cols.rowwise().mean();
  Eigen::VectorXd var =
      (cols.colwise() - mean).array().square().rowwise().sum() / n;
  std = var.array().sqrt();
  for (int i = 0; i < std.size(); ++i)
    if (!(std(i) > 1e-12 * (std::abs(mean(i)) + 1.0)))
      throw DataError("fit_normalizer: degenerate feature " + what + "[" +
                      std::to_string(i) + "] has zero standard deviation");
}

}  // namespace

Normalizer fit_normalizer_matrices(const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& real_twists,
                                   const Eigen::MatrixXd& sim_twists,
                                   const Eigen::MatrixXd& residuals) {
  Eigen::MatrixXd twists(6, real_twists.cols() + sim_twists.cols());
  twists << real_twists, sim_twists;
  Normalizer nz;
  Eigen::VectorXd m, s;
  mean_std(inputs, nz.input_mean, nz.input_std, "input");
  mean_std(twists, m, s, "velocity");
  nz.vel_mean = m;
  nz.vel_std = s;
  mean_std(residuals, m, s, "residual");
  nz.residual_mean = m;
  nz.residual_std = s;
  return nz;
}

Normalizer fit_normalizer(const Dataset& ds, const Eigen::MatrixXd& sim_twists) {
  const int total = ds.total_samples();
  if (total == 0) throw DataError("fit_normalizer: empty dataset");
  if (sim_twists.rows() != 6 || sim_twists.cols() != total)
    throw DataError("fit_normalizer: sim twists not aligned with dataset");

  Eigen::MatrixXd inputs(ds.input_dim, total);
  Eigen::MatrixXd real(6, total);
  Eigen::MatrixXd residuals(6, total);
  int j = 0;
  for (const auto& seg : ds.segments) {
    for (int k = 0; k < seg.size(); ++k, ++j) {
      inputs.col(j) = seg.inputs[k].channels;
      real.col(j) = seg.states[k].twist();
      residuals.col(j) = seg.states[k].twist() - sim_twists.col(j);
    }
  }
  return fit_normalizer_matrices(inputs, real, sim_twists, residuals);
}

void write_dataset_csv(const Dataset& ds, const std::string& path,
                       const std::vector<std::string>& header_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  for (const auto& c : header_comment) out << "# " << c << "\n";
  out << "t";
  for (const char* n : kStateNames) out << "," << n;
  for (int i = 1; i <= ds.input_dim; ++i) out << ",u" << i;
  out << ",segment\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  int seg_id = 0;
  for (const auto& seg : ds.segments) {
    for (int k = 0; k < seg.size(); ++k) {
      put(seg.t0 + k * ds.dt);
      Vector12d x = seg.states[k].to_vector();
      for (int i = 0; i < 12; ++i) {
        out << ",";
        put(x(i));
      }
      for (int i = 0; i < ds.input_dim; ++i) {
        out << ",";
        put(seg.inputs[k].channels(i));
      }
      out << "," << seg_id << "\n";
    }
    ++seg_id;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace uwsysid
