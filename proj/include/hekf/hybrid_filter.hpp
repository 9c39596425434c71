#pragma once

// Hybrid EKF: soft-sensor outputs enter the correction step as additional
// measurements whose covariance grows as the confidence tau drops.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hekf/confidence.hpp"
#include "hekf/dataset.hpp"
#include "hekf/narx.hpp"
#include "hekf/vehicle_filter.hpp"

namespace hekf {

struct HekfConfig {
  double c = 1.0e4;  // inflation at zero confidence
  NoiseConfig noise = default_noise(MeasurementMode::kHybrid);
  bool scale_wholesale = false;  // also scale the yaw-rate entry
  CovarianceUpdate form = CovarianceUpdate::kStandard;

  void validate() const;
};

// c (tau - 1)^2 + 1
double covariance_scale_factor(double tau, double c);

// Scales the soft block of R0 (rows/columns 1..5) by the factor above; the
// yaw-rate entry is left alone unless wholesale is set.
Eigen::MatrixXd scale_measurement_covariance(const Eigen::MatrixXd& R0, double tau, double c,
                                             bool wholesale = false);

struct HekfStepRecord {
  double time = 0.0;
  GaussianBelief belief;
  Eigen::Matrix<double, kNumSoft, 1> y_ann = Eigen::Matrix<double, kNumSoft, 1>::Zero();
  double d_k = 0.0;
  double tau = 0.0;
  double scale = 1.0;
  Eigen::VectorXd r_diag;
  double yaw_innovation = 0.0;  // normalized
  bool warmup = false;
};

class HybridFilter {
 public:
  HybridFilter(const VehicleParams& params, double dt, const FilterInit& init, HekfConfig config,
               SoftSensorBank bank, std::shared_ptr<const ConfidenceModel> confidence);

  // Pins tau for every step (including warm-up); nullopt restores the
  // confidence model.
  void force_tau(std::optional<double> tau);

  // sample = [vx2, fz2, yaw_rate2] from the sensors.
  HekfStepRecord step(double time, const Eigen::Vector3d& sample);

  const GaussianBelief& belief() const { return filter_.belief(); }
  const HekfConfig& config() const { return config_; }

 private:
  ModelFilter filter_;
  HekfConfig config_;
  SoftSensorBank bank_;
  std::shared_ptr<const ConfidenceModel> confidence_;
  std::optional<double> forced_tau_;
};

// Estimates of one method over one maneuver, one row per sample. Columns a
// method does not produce hold NaN.
struct EstimateRun {
  std::string method;
  Eigen::VectorXd time;
  Eigen::MatrixXd mean;      // N x 12
  Eigen::MatrixXd variance;  // N x 12
  Eigen::MatrixXd soft;      // N x 5 soft-sensor outputs
  Eigen::VectorXd d_k;
  Eigen::VectorXd tau;
  Eigen::VectorXd scale;
  // Yaw-rate innovation divided by its predicted standard deviation.
  Eigen::VectorXd yaw_innovation;
};

EstimateRun run_ekf(const ManeuverDataset& data, const VehicleParams& params, const NoiseConfig& noise,
                    const FilterInit& init = {}, CovarianceUpdate form = CovarianceUpdate::kStandard);

EstimateRun run_ann(const ManeuverDataset& data, SoftSensorBank bank);

EstimateRun run_hekf(const ManeuverDataset& data, const VehicleParams& params, const HekfConfig& config,
                     SoftSensorBank bank, std::shared_ptr<const ConfidenceModel> confidence,
                     const FilterInit& init = {}, std::optional<double> forced_tau = std::nullopt);

// HEKF with soft outputs supplied up front and a fixed tau.
EstimateRun run_hekf_fixed(const ManeuverDataset& data, const VehicleParams& params,
                           const HekfConfig& config, const Eigen::MatrixXd& soft, double tau,
                           const FilterInit& init = {});

// Step-record CSV: time, 12 means, 12 variances, 5 soft outputs, d_k, tau, scale.
void write_run_csv(const EstimateRun& run, std::ostream& out);
void save_run_csv(const EstimateRun& run, const std::string& path);

}  // namespace hekf
