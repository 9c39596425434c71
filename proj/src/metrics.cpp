#include "hekf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hekf/errors.hpp"
#include "hekf/vehicle_model.hpp"

namespace hekf {

const std::array<int, kNumReportQuantities>& report_states() {
  static const std::array<int, kNumReportQuantities> s = {idx::kTheta, idx::kFy21, idx::kFy23, idx::kDelta1};
  return s;
}

const std::array<std::string, kNumReportQuantities>& report_names() {
  static const std::array<std::string, kNumReportQuantities> s = {"theta", "fy21", "fy23", "delta1"};
  return s;
}

const std::array<double, kNumReportQuantities>& report_units() {
  static const std::array<double, kNumReportQuantities> s = {1.0, 1e-3, 1e-3, 1.0};
  return s;
}

double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, Eigen::Index warmup) {
  if (estimate.size() != truth.size()) throw ConfigError("rmse: series lengths differ");
  if (warmup < 0 || warmup >= truth.size()) throw ConfigError("rmse: no samples after the warm-up");
  const Eigen::Index n = truth.size() - warmup;
  return std::sqrt((estimate.tail(n) - truth.tail(n)).squaredNorm() / static_cast<double>(n));
}

std::array<double, kNumReportQuantities> report_rmse(const Eigen::MatrixXd& estimate,
                                                     const Eigen::MatrixXd& truth, Eigen::Index warmup) {
  if (estimate.rows() != truth.rows()) throw ConfigError("report_rmse: time bases differ");
  std::array<double, kNumReportQuantities> out{};
  for (int q = 0; q < kNumReportQuantities; ++q) {
    const int s = report_states()[static_cast<std::size_t>(q)];
    out[static_cast<std::size_t>(q)] =
        report_units()[static_cast<std::size_t>(q)] * rmse(estimate.col(s), truth.col(s), warmup);
  }
  return out;
}

double median(Eigen::VectorXd values) {
  if (values.size() == 0) throw ConfigError("median: empty input");
  std::sort(values.data(), values.data() + values.size());
  const Eigen::Index n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace hekf
