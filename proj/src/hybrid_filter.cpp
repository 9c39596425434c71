#include "hekf/hybrid_filter.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "hekf/errors.hpp"

namespace hekf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
auto staged(const char* stage, double time, Fn&& fn) -> decltype(fn()) {
  const auto label = [&](const std::exception& e) {
    return std::string("hekf step t=") + std::to_string(time) + " [" + stage + "]: " + e.what();
  };
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(label(e));
  } catch (const DomainError& e) {
    throw DomainError(label(e));
  } catch (const ConfigError& e) {
    throw ConfigError(label(e));
  }
}

EstimateRun empty_run(const std::string& method, const ManeuverDataset& data) {
  const Eigen::Index n = data.rows();
  EstimateRun r;
  r.method = method;
  r.time = data.time;
  r.mean = Eigen::MatrixXd::Constant(n, idx::kAugmented, kNaN);
  r.variance = Eigen::MatrixXd::Constant(n, idx::kAugmented, kNaN);
  r.soft = Eigen::MatrixXd::Constant(n, kNumSoft, kNaN);
  r.d_k = Eigen::VectorXd::Constant(n, kNaN);
  r.tau = Eigen::VectorXd::Constant(n, kNaN);
  r.scale = Eigen::VectorXd::Constant(n, kNaN);
  r.yaw_innovation = Eigen::VectorXd::Constant(n, kNaN);
  return r;
}

void store_belief(EstimateRun& r, Eigen::Index k, const GaussianBelief& b) {
  r.mean.row(k) = b.mean.transpose();
  r.variance.row(k) = b.covariance.diagonal().transpose();
}

}  // namespace

void HekfConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("HEKF: c must be positive and finite");
  noise.validate();
  if (noise.R0.rows() != 1 + kNumSoft) throw ConfigError("HEKF: R0 must be 6x6");
}

double covariance_scale_factor(double tau, double c) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("confidence tau must lie in [0, 1]");
  return c * (tau - 1.0) * (tau - 1.0) + 1.0;
}

Eigen::MatrixXd scale_measurement_covariance(const Eigen::MatrixXd& R0, double tau, double c,
                                             bool wholesale) {
  const double s = covariance_scale_factor(tau, c);
  if (wholesale) return s * R0;
  // D R0 D with D = diag(1, sqrt(s), ...) keeps the matrix PSD and scales
  // the soft block by exactly s.
  Eigen::MatrixXd R = R0;
  const double r = std::sqrt(s);
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    for (Eigen::Index j = 0; j < R.cols(); ++j) {
      if (i == 0 && j == 0) continue;
      if (i == 0 || j == 0) {
        R(i, j) *= r;
      } else {
        R(i, j) *= s;
      }
    }
  }
  return R;
}

HybridFilter::HybridFilter(const VehicleParams& params, double dt, const FilterInit& init,
                           HekfConfig config, SoftSensorBank bank,
                           std::shared_ptr<const ConfidenceModel> confidence)
    : filter_(params, dt, init, config.form),
      config_(std::move(config)),
      bank_(std::move(bank)),
      confidence_(std::move(confidence)) {
  config_.validate();
  if (!confidence_) throw ConfigError("HEKF: confidence model missing");
  if (confidence_->standardizer() != bank_.input_standardizer() &&
      (confidence_->standardizer()->mean() != bank_.input_standardizer()->mean() ||
       confidence_->standardizer()->scale() != bank_.input_standardizer()->scale())) {
    throw ConfigError("HEKF: confidence model and soft sensor use different standardization");
  }
  bank_.reset();
}

void HybridFilter::force_tau(std::optional<double> tau) {
  if (tau) covariance_scale_factor(*tau, config_.c);
  forced_tau_ = tau;
}

HekfStepRecord HybridFilter::step(double time, const Eigen::Vector3d& sample) {
  HekfStepRecord rec;
  rec.time = time;
  rec.warmup = bank_.warming_up();
  rec.y_ann = staged("soft sensor", time, [&] { return bank_.predict_step(sample); });
  rec.d_k = staged("confidence", time, [&] { return confidence_->mean_knn_distance(sample); });
  if (forced_tau_) {
    rec.tau = *forced_tau_;
  } else {
    rec.tau = rec.warmup ? 0.0 : confidence_->confidence(rec.d_k);
  }
  rec.scale = covariance_scale_factor(rec.tau, config_.c);
  const Eigen::MatrixXd R =
      scale_measurement_covariance(config_.noise.R0, rec.tau, config_.c, config_.scale_wholesale);
  rec.r_diag = R.diagonal();
  staged("ekf predict", time, [&] {
    filter_.predict(sample[0], sample[1], config_.noise.Q);
    return 0;
  });
  Eigen::VectorXd y(1 + kNumSoft);
  y << sample[2], rec.y_ann;
  const Correction c = staged("ekf correct", time, [&] { return filter_.correct(y, MeasurementMode::kHybrid, R); });
  rec.yaw_innovation = c.innovation[0] / std::sqrt(c.innovation_covariance(0, 0));
  rec.belief = filter_.belief();
  return rec;
}

EstimateRun run_ekf(const ManeuverDataset& data, const VehicleParams& params, const NoiseConfig& noise,
                    const FilterInit& init, CovarianceUpdate form) {
  noise.validate();
  if (noise.R0.rows() != 1) throw ConfigError("EKF: R0 must be 1x1");
  EstimateRun r = empty_run("ekf", data);
  ModelFilter f(params, data.dt, init, form);
  Eigen::VectorXd y(1);
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    const double t = data.time[k];
    staged("ekf predict", t, [&] {
      f.predict(data.measured(k, meas_col::kVx2), data.measured(k, meas_col::kFz2), noise.Q);
      return 0;
    });
    y[0] = data.measured(k, meas_col::kYawRate2);
    const Correction c = staged("ekf correct", t, [&] { return f.correct(y, MeasurementMode::kEkf, noise.R0); });
    r.yaw_innovation[k] = c.innovation[0] / std::sqrt(c.innovation_covariance(0, 0));
    store_belief(r, k, f.belief());
  }
  return r;
}

EstimateRun run_ann(const ManeuverDataset& data, SoftSensorBank bank) {
  EstimateRun r = empty_run("ann", data);
  r.soft = predict_sequence(bank, data.ann_inputs());
  const auto& states = soft_channel_states();
  for (int c = 0; c < kNumSoft; ++c) r.mean.col(states[static_cast<std::size_t>(c)]) = r.soft.col(c);
  return r;
}

EstimateRun run_hekf(const ManeuverDataset& data, const VehicleParams& params, const HekfConfig& config,
                     SoftSensorBank bank, std::shared_ptr<const ConfidenceModel> confidence,
                     const FilterInit& init, std::optional<double> forced_tau) {
  EstimateRun r = empty_run("hekf", data);
  HybridFilter f(params, data.dt, init, config, std::move(bank), std::move(confidence));
  f.force_tau(forced_tau);
  const Eigen::MatrixXd u = data.ann_inputs();
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    const HekfStepRecord rec = f.step(data.time[k], u.row(k).transpose());
    store_belief(r, k, rec.belief);
    r.soft.row(k) = rec.y_ann.transpose();
    r.d_k[k] = rec.d_k;
    r.tau[k] = rec.tau;
    r.scale[k] = rec.scale;
    r.yaw_innovation[k] = rec.yaw_innovation;
  }
  return r;
}

EstimateRun run_hekf_fixed(const ManeuverDataset& data, const VehicleParams& params,
                           const HekfConfig& config, const Eigen::MatrixXd& soft, double tau,
                           const FilterInit& init) {
  config.validate();
  if (soft.rows() != data.rows() || soft.cols() != kNumSoft) {
    throw ConfigError("run_hekf_fixed: soft outputs do not match the dataset");
  }
  EstimateRun r = empty_run("hekf", data);
  ModelFilter f(params, data.dt, init, config.form);
  const double s = covariance_scale_factor(tau, config.c);
  const Eigen::MatrixXd R = scale_measurement_covariance(config.noise.R0, tau, config.c, config.scale_wholesale);
  Eigen::VectorXd y(1 + kNumSoft);
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    const double t = data.time[k];
    staged("ekf predict", t, [&] {
      f.predict(data.measured(k, meas_col::kVx2), data.measured(k, meas_col::kFz2), config.noise.Q);
      return 0;
    });
    y << data.measured(k, meas_col::kYawRate2), soft.row(k).transpose();
    const Correction c = staged("ekf correct", t, [&] { return f.correct(y, MeasurementMode::kHybrid, R); });
    r.yaw_innovation[k] = c.innovation[0] / std::sqrt(c.innovation_covariance(0, 0));
    store_belief(r, k, f.belief());
  }
  r.soft = soft;
  r.tau.setConstant(tau);
  r.scale.setConstant(s);
  return r;
}

void write_run_csv(const EstimateRun& run, std::ostream& out) {
  out << "time";
  for (const auto& s : state_names()) out << ",mean_" << s;
  for (const auto& s : state_names()) out << ",var_" << s;
  for (const auto& s : soft_channel_names()) out << ",ann_" << s;
  out << ",d_k,tau,scale\n";
  std::string line;
  for (Eigen::Index k = 0; k < run.time.size(); ++k) {
    line = format_sig9(run.time[k]);
    for (int c = 0; c < idx::kAugmented; ++c) line += ',' + format_sig9(run.mean(k, c));
    for (int c = 0; c < idx::kAugmented; ++c) line += ',' + format_sig9(run.variance(k, c));
    for (int c = 0; c < kNumSoft; ++c) line += ',' + format_sig9(run.soft(k, c));
    line += ',' + format_sig9(run.d_k[k]);
    line += ',' + format_sig9(run.tau[k]);
    line += ',' + format_sig9(run.scale[k]);
    out << line << '\n';
  }
}

void save_run_csv(const EstimateRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_run_csv(run, out);
  if (!out) throw ConfigError("failed writing " + path);
}

}  // namespace hekf
