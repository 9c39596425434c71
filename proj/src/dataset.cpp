#include "hekf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hekf/errors.hpp"

namespace hekf {

namespace {

constexpr int kColumns = 1 + idx::kAugmented + 3 + 3;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& dataset_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"time"};
    for (const auto& s : state_names()) c.push_back("true_" + s);
    for (const char* s : {"input_delta1", "input_vx2", "input_fz2", "meas_vx2", "meas_yaw_rate2",
                          "meas_fz2"}) {
      c.emplace_back(s);
    }
    return c;
  }();
  return cols;
}

Eigen::MatrixXd ManeuverDataset::ann_inputs() const {
  Eigen::MatrixXd u(rows(), 3);
  u.col(0) = measured.col(meas_col::kVx2);
  u.col(1) = measured.col(meas_col::kFz2);
  u.col(2) = measured.col(meas_col::kYawRate2);
  return u;
}

std::string ManeuverDataset::meta(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return fallback;
}

void ManeuverDataset::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

void ManeuverDataset::validate() const {
  const Eigen::Index n = rows();
  if (n < 1) throw ConfigError("dataset: no samples");
  if (!(dt > 0.0)) throw ConfigError("dataset: dt must be positive");
  if (truth.rows() != n || truth.cols() != idx::kAugmented || inputs.rows() != n ||
      inputs.cols() != 3 || measured.rows() != n || measured.cols() != 3) {
    throw ConfigError("dataset: column blocks do not match the time base");
  }
  if (!time.allFinite() || !truth.allFinite() || !inputs.allFinite() || !measured.allFinite()) {
    throw ConfigError("dataset: non-finite entries");
  }
  for (Eigen::Index i = 1; i < n; ++i) {
    const double expected = time[0] + static_cast<double>(i) * dt;
    if (std::abs(time[i] - expected) > 1e-6 * std::max(1.0, std::abs(expected))) {
      throw ConfigError("dataset: time base is not uniform at row " + std::to_string(i));
    }
  }
}

std::string format_sig9(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

double quantize_sig9(double value) { return std::strtod(format_sig9(value).c_str(), nullptr); }

void write_dataset(const ManeuverDataset& data, std::ostream& out) {
  data.validate();
  out << "# dt = " << format_sig9(data.dt) << '\n';
  for (const auto& [k, v] : data.metadata) {
    if (k == "dt") continue;
    out << "# " << k << " = " << v << '\n';
  }
  const auto& cols = dataset_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    line = format_sig9(data.time[r]);
    for (int c = 0; c < idx::kAugmented; ++c) line += ',' + format_sig9(data.truth(r, c));
    for (int c = 0; c < 3; ++c) line += ',' + format_sig9(data.inputs(r, c));
    for (int c = 0; c < 3; ++c) line += ',' + format_sig9(data.measured(r, c));
    out << line << '\n';
  }
}

void save_dataset(const ManeuverDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_dataset(data, out);
  if (!out) throw ConfigError("failed writing " + path.string());
}

ManeuverDataset read_dataset(std::istream& in, const std::string& origin) {
  ManeuverDataset d;
  std::string line;
  bool have_header = false;
  bool have_dt = false;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(line.substr(1, eq - 1));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "dt") {
        d.dt = std::strtod(value.c_str(), nullptr);
        have_dt = true;
      } else {
        d.metadata.emplace_back(key, value);
      }
      continue;
    }
    if (!have_header) {
      std::vector<std::string> names;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) names.push_back(trim(cell));
      if (names != dataset_columns()) {
        throw ConfigError(origin + ": unexpected CSV header");
      }
      have_header = true;
      continue;
    }
    std::vector<double> values;
    values.reserve(kColumns);
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      values.push_back(std::strtod(p, &end));
      if (end == p) throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad number");
      p = end;
      if (*p == ',') ++p;
    }
    if (values.size() != static_cast<std::size_t>(kColumns)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(kColumns) + " columns");
    }
    rows.push_back(std::move(values));
  }
  if (!have_header) throw ConfigError(origin + ": missing CSV header");
  if (!have_dt) throw ConfigError(origin + ": missing '# dt' metadata");
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.time.resize(n);
  d.truth.resize(n, idx::kAugmented);
  d.inputs.resize(n, 3);
  d.measured.resize(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& v = rows[static_cast<std::size_t>(r)];
    d.time[r] = v[0];
    for (int c = 0; c < idx::kAugmented; ++c) d.truth(r, c) = v[static_cast<std::size_t>(1 + c)];
    for (int c = 0; c < 3; ++c) d.inputs(r, c) = v[static_cast<std::size_t>(13 + c)];
    for (int c = 0; c < 3; ++c) d.measured(r, c) = v[static_cast<std::size_t>(16 + c)];
  }
  d.validate();
  return d;
}

ManeuverDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_dataset(in, path.string());
}

std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace hekf
