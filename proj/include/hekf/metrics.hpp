#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

namespace hekf {

// Quantities of the RMSE report: theta [rad], fy21 [kN], fy23 [kN], delta1 [rad].
inline constexpr int kNumReportQuantities = 4;
const std::array<int, kNumReportQuantities>& report_states();
const std::array<std::string, kNumReportQuantities>& report_names();
// Factor applied before the RMSE (1e-3 for forces so they come out in kN).
const std::array<double, kNumReportQuantities>& report_units();

// Root mean square of estimate - truth over samples [warmup, N).
double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, Eigen::Index warmup = 0);

// Per-quantity RMSE from full state matrices (N x 12), report units.
std::array<double, kNumReportQuantities> report_rmse(const Eigen::MatrixXd& estimate,
                                                     const Eigen::MatrixXd& truth, Eigen::Index warmup);

double median(Eigen::VectorXd values);

}  // namespace hekf
