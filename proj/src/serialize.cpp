#include "uwsysid/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace uwsysid {

struct ModelWriter::Impl {
  std::ofstream out;
  std::string path;
};

ModelWriter::ModelWriter(const std::string& path, const std::string& kind,
                         int version)
    : impl_(new Impl{std::ofstream(path), path}) {
  if (!impl_->out) {
    delete impl_;
    impl_ = nullptr;
    throw IoError("cannot write model file: " + path);
  }
  impl_->out << "uwsysid-model " << kind << " " << version << "\n";
}

ModelWriter::~ModelWriter() { delete impl_; }

namespace {
void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}
}  // namespace

void ModelWriter::scalar(const std::string& name, double v) {
  impl_->out << name << " ";
  put(impl_->out, v);
  impl_->out << "\n";
}

void ModelWriter::integer(const std::string& name, long long v) {
  impl_->out << name << " " << v << "\n";
}

void ModelWriter::text(const std::string& name, const std::string& v) {
  impl_->out << name << " =" << v << "\n";
}

void ModelWriter::array(const std::string& name, const Eigen::MatrixXd& m) {
  impl_->out << name;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      impl_->out << " ";
      put(impl_->out, m(i, j));
    }
  impl_->out << "\n";
  if (!impl_->out) throw IoError("write failed: " + impl_->path);
}

void ModelWriter::array(const std::string& name, const Eigen::VectorXd& v) {
  array(name, Eigen::MatrixXd(v.transpose()));
}

ModelReader::ModelReader(const std::string& path, const std::string& kind,
                         int version)
    : path_(path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError(path + ": empty model file");
  std::istringstream head(line);
  std::string magic, k;
  int v = -1;
  head >> magic >> k >> v;
  if (magic != "uwsysid-model" || k != kind || v != version)
    throw ConfigError(path + ": expected '" + kind + "' model, version " +
                      std::to_string(version) + ", found '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    ss >> name;
    if (ss.peek() == ' ') ss.get();
    if (ss.peek() == '=') {
      ss.get();
      std::string rest;
      std::getline(ss, rest);
      texts_[name] = rest;
      continue;
    }
    std::vector<double> vals;
    double x;
    while (ss >> x) vals.push_back(x);
    arrays_[name] = std::move(vals);
  }
}

const std::vector<double>& ModelReader::find(const std::string& name,
                                             int n) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end())
    throw ConfigError(path_ + ": missing field '" + name + "'");
  if (n >= 0 && static_cast<int>(it->second.size()) != n)
    throw ConfigError(path_ + ": field '" + name + "' expects " +
                      std::to_string(n) + " values, found " +
                      std::to_string(it->second.size()));
  return it->second;
}

double ModelReader::scalar(const std::string& name) const {
  return find(name, 1)[0];
}

long long ModelReader::integer(const std::string& name) const {
  return static_cast<long long>(find(name, 1)[0]);
}

std::string ModelReader::text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end())
    throw ConfigError(path_ + ": missing field '" + name + "'");
  return it->second;
}

Eigen::MatrixXd ModelReader::array(const std::string& name, int rows,
                                   int cols) const {
  const auto& v = find(name, rows * cols);
  Eigen::MatrixXd m(rows, cols);
  int k = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = v[k++];
  return m;
}

Eigen::VectorXd ModelReader::vector(const std::string& name, int n) const {
  const auto& v = find(name, n);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for digest: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

}  // namespace uwsysid
