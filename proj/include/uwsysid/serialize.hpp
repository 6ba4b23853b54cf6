#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "uwsysid/errors.hpp"

namespace uwsysid {

/// Line-based text container for model files: a version header followed by
/// named scalars, strings and row-major float64 arrays. Doubles are printed
/// with 17 significant digits, which round-trips bit-exactly.
class ModelWriter {
 public:
  ModelWriter(const std::string& path, const std::string& kind, int version);
  ~ModelWriter();
  void scalar(const std::string& name, double v);
  void integer(const std::string& name, long long v);
  void text(const std::string& name, const std::string& v);
  void array(const std::string& name, const Eigen::MatrixXd& m);  // row-major
  void array(const std::string& name, const Eigen::VectorXd& v);

 private:
  struct Impl;
  Impl* impl_;
};

class ModelReader {
 public:
  /// Throws IoError on open failure, ConfigError on kind/version mismatch.
  ModelReader(const std::string& path, const std::string& kind, int version);
  double scalar(const std::string& name) const;
  long long integer(const std::string& name) const;
  std::string text(const std::string& name) const;
  Eigen::MatrixXd array(const std::string& name, int rows, int cols) const;
  Eigen::VectorXd vector(const std::string& name, int n) const;

 private:
  std::map<std::string, std::vector<double>> arrays_;
  std::map<std::string, std::string> texts_;
  std::string path_;
  const std::vector<double>& find(const std::string& name, int n) const;
};

/// FNV-1a digest of a file's bytes, for provenance headers.
std::string file_digest(const std::string& path);

}  // namespace uwsysid
