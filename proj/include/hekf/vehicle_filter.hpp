#pragma once

// Glue between the vehicle model and the generic EKF: augmented process
// model, measurement selection, noise defaults and the model-based filter.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hekf/ekf.hpp"
#include "hekf/kv_file.hpp"
#include "hekf/vehicle_model.hpp"

namespace hekf {

enum class MeasurementMode {
  kEkf,     // [yaw_rate2]
  kHybrid,  // [yaw_rate2, yaw_rate1, theta, fy21, fy23, delta1]
};

inline constexpr int kNumSoft = 5;

// State indices selected by each measurement row.
const std::vector<int>& measured_states(MeasurementMode mode);
// Column names of the measurement rows.
const std::vector<std::string>& measurement_names(MeasurementMode mode);
// State indices of the soft-sensor channels [yaw_rate1, theta, fy21, fy23, delta1].
const std::array<int, kNumSoft>& soft_channel_states();
const std::array<std::string, kNumSoft>& soft_channel_names();

Eigen::VectorXd measurement(const AugmentedState& x, MeasurementMode mode);
Eigen::MatrixXd measurement_jacobian(MeasurementMode mode);

// Filter input u = [vx2, fz2].
ProcessModel make_process_model(const VehicleParams& params, double dt);
MeasurementModel make_measurement_model(MeasurementMode mode);

struct NoiseConfig {
  Eigen::MatrixXd Q;   // 12x12 process covariance per step
  Eigen::MatrixXd R0;  // p x p baseline measurement covariance

  void validate() const;
};

// Documented default magnitudes (diagonal).
Eigen::VectorXd default_process_variances();
NoiseConfig default_noise(MeasurementMode mode, double yaw_rate_variance = 0.005 * 0.005);

// Noise files hold diagonals: `Q.<state> = v` and `R0.<channel> = v`.
NoiseConfig noise_from(const KeyValueFile& kv, MeasurementMode mode);
KeyValueFile to_key_values(const NoiseConfig& noise, MeasurementMode mode);
NoiseConfig load_noise(const std::filesystem::path& path, MeasurementMode mode);
void save_noise(const NoiseConfig& noise, MeasurementMode mode, const std::filesystem::path& path);

struct FilterInit {
  double l_cog = 5.5;
  Eigen::VectorXd sd;  // initial standard deviations, empty -> defaults

  GaussianBelief belief() const;
};

// Model-based EKF on the augmented truck-semitrailer state.
class ModelFilter {
 public:
  ModelFilter(VehicleParams params, double dt, const FilterInit& init,
              CovarianceUpdate form = CovarianceUpdate::kStandard);

  // Time update with the previous input sample; the first call only
  // records the input.
  void predict(double vx2, double fz2, const Eigen::MatrixXd& Q);
  Correction correct(const Eigen::VectorXd& y, MeasurementMode mode, const Eigen::MatrixXd& R);

  const GaussianBelief& belief() const { return belief_; }
  GaussianBelief& belief() { return belief_; }
  const VehicleParams& params() const { return params_; }
  double dt() const { return dt_; }

 private:
  VehicleParams params_;
  double dt_;
  CovarianceUpdate form_;
  ProcessModel process_;
  MeasurementModel ekf_meas_;
  MeasurementModel hybrid_meas_;
  GaussianBelief belief_;
  bool has_input_ = false;
  Eigen::Vector2d last_input_ = Eigen::Vector2d::Zero();
};

// Keeps l_cog inside [0.5, l_agg].
void clamp_lcog(GaussianBelief& belief, double l_agg);

}  // namespace hekf
