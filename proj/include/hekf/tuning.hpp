#pragma once

// Noise tuning for the model-based EKF and the hybrid filter.

#include <array>
#include <string>
#include <vector>

#include "hekf/dataset.hpp"
#include "hekf/hybrid_filter.hpp"
#include "hekf/metrics.hpp"

namespace hekf {

// Variance of the measured yaw rate over the straight lead-in [0, lead_in).
double static_yaw_rate_variance(const ManeuverDataset& data, double lead_in = 2.0);

// Mean NEES of an EKF run against the dataset truth, samples [warmup, N).
double mean_nees(const ManeuverDataset& data, const VehicleParams& params, const NoiseConfig& noise,
                 const FilterInit& init = {}, Eigen::Index warmup = 2);

struct EkfTuningOptions {
  std::vector<double> q_scales = {0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> random_walk = {1e-8, 1e-6, 1e-4};  // delta1 and l_cog, per step
};

struct EkfTuningResult {
  NoiseConfig noise;
  double q_scale = 1.0;
  double random_walk = 1e-4;
  double mean_nees = 0.0;
};

// Grid over a global Q scale and the random-walk variances, minimizing
// |log(mean NEES / 12)| on held-out maneuvers.
EkfTuningResult tune_ekf_noise(const std::vector<ManeuverDataset>& data, const VehicleParams& params,
                               const NoiseConfig& base, const EkfTuningOptions& options = {});

struct HekfTuningOptions {
  // Multiplicative moves tried per coordinate, one list per pass.
  std::vector<std::vector<double>> passes = {{0.1, 10.0}, {0.3, 3.0}};
  int whiteness_lags = 10;
  double whiteness_bound = 0.95;  // max |autocorrelation| of the yaw-rate innovation
  double tracking_bound = 0.5;    // max normalized RMSE of soft states vs soft outputs
  Eigen::Index warmup = 2;
};

struct HekfTuningResult {
  NoiseConfig noise;
  std::array<double, kNumReportQuantities> rmse_default{};
  std::array<double, kNumReportQuantities> rmse_tuned{};
  double objective = 1.0;  // mean RMSE ratio to the default
  double whiteness = 0.0;
  double tracking = 0.0;
  int runs = 0;
};

struct StabilityCheck {
  double whiteness = 0.0;
  double tracking = 0.0;
  bool passed = false;
};

StabilityCheck check_stability(const EstimateRun& run, const HekfTuningOptions& options);

// Coordinate search over Q groups and the soft R0 entries with tau = 1;
// a move is kept only when no report quantity gets worse and the run
// passes the stability check. soft[i] holds the soft-sensor outputs for
// data[i].
HekfTuningResult tune_full_confidence(const HekfConfig& config, const std::vector<ManeuverDataset>& data,
                                      const std::vector<Eigen::MatrixXd>& soft, const VehicleParams& params,
                                      const HekfTuningOptions& options = {});

}  // namespace hekf
