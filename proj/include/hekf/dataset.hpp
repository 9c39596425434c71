#pragma once

// One maneuver on a uniform time base: ground truth, true inputs and the
// noisy sensor channels, stored as CSV with `#` metadata lines.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hekf/vehicle_model.hpp"

namespace hekf {

namespace input_col {
enum : int { kDelta1 = 0, kVx2, kFz2 };
}
namespace meas_col {
enum : int { kVx2 = 0, kYawRate2, kFz2 };
}

struct ManeuverDataset {
  double dt = 0.01;
  std::vector<std::pair<std::string, std::string>> metadata;
  Eigen::VectorXd time;
  Eigen::MatrixXd truth;     // N x 12 augmented state
  Eigen::MatrixXd inputs;    // N x 3 true [delta1, vx2, fz2]
  Eigen::MatrixXd measured;  // N x 3 noisy [vx2, yaw_rate2, fz2]

  Eigen::Index rows() const { return time.size(); }
  // Soft-sensor input rows [vx2, fz2, yaw_rate2] from the sensor channels.
  Eigen::MatrixXd ann_inputs() const;
  std::string meta(const std::string& key, const std::string& fallback = "") const;
  void set_meta(const std::string& key, const std::string& value);
  // Throws ConfigError on shape mismatch, gaps or non-finite entries.
  void validate() const;
};

const std::vector<std::string>& dataset_columns();

// Values are written with 9 significant digits.
std::string format_sig9(double value);
double quantize_sig9(double value);

void write_dataset(const ManeuverDataset& data, std::ostream& out);
void save_dataset(const ManeuverDataset& data, const std::filesystem::path& path);
ManeuverDataset read_dataset(std::istream& in, const std::string& origin = "<stream>");
ManeuverDataset load_dataset(const std::filesystem::path& path);

// All *.csv files of a directory in lexicographic order.
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir);

}  // namespace hekf
