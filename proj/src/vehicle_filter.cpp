#include "hekf/vehicle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hekf/errors.hpp"

namespace hekf {

const std::vector<int>& measured_states(MeasurementMode mode) {
  static const std::vector<int> ekf = {idx::kYawRate2};
  static const std::vector<int> hybrid = {idx::kYawRate2, idx::kYawRate1, idx::kTheta,
                                          idx::kFy21,     idx::kFy23,     idx::kDelta1};
  return mode == MeasurementMode::kEkf ? ekf : hybrid;
}

const std::vector<std::string>& measurement_names(MeasurementMode mode) {
  static const std::vector<std::string> ekf = {"yaw_rate2"};
  static const std::vector<std::string> hybrid = {"yaw_rate2", "yaw_rate1", "theta",
                                                  "fy21",      "fy23",      "delta1"};
  return mode == MeasurementMode::kEkf ? ekf : hybrid;
}

const std::array<int, kNumSoft>& soft_channel_states() {
  static const std::array<int, kNumSoft> s = {idx::kYawRate1, idx::kTheta, idx::kFy21, idx::kFy23,
                                              idx::kDelta1};
  return s;
}

const std::array<std::string, kNumSoft>& soft_channel_names() {
  static const std::array<std::string, kNumSoft> s = {"yaw_rate1", "theta", "fy21", "fy23",
                                                      "delta1"};
  return s;
}

Eigen::VectorXd measurement(const AugmentedState& x, MeasurementMode mode) {
  const auto& rows = measured_states(mode);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = x[rows[i]];
  return y;
}

Eigen::MatrixXd measurement_jacobian(MeasurementMode mode) {
  const auto& rows = measured_states(mode);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), idx::kAugmented);
  for (std::size_t i = 0; i < rows.size(); ++i) C(static_cast<Eigen::Index>(i), rows[i]) = 1.0;
  return C;
}

ProcessModel make_process_model(const VehicleParams& params, double dt) {
  ProcessModel m;
  m.transition = [params, dt](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const AugmentedState xs = x;
    return Eigen::VectorXd(augmented_step(xs, u[0], u[1], params, dt));
  };
  return m;
}

MeasurementModel make_measurement_model(MeasurementMode mode) {
  MeasurementModel m;
  m.observe = [mode](const Eigen::VectorXd& x) {
    const AugmentedState xs = x;
    return measurement(xs, mode);
  };
  const Eigen::MatrixXd C = measurement_jacobian(mode);
  m.jacobian = [C](const Eigen::VectorXd&) { return C; };
  return m;
}

void NoiseConfig::validate() const {
  auto check_psd = [](const Eigen::MatrixXd& M, const char* name) {
    if (M.rows() != M.cols() || M.rows() == 0) {
      throw ConfigError(std::string(name) + " must be square and non-empty");
    }
    if (!M.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 0.0) {
      throw ConfigError(std::string(name) + " must be symmetric");
    }
    if ((M.diagonal().array() < 0.0).any()) {
      throw ConfigError(std::string(name) + " has negative variances");
    }
  };
  check_psd(Q, "Q");
  check_psd(R0, "R0");
  if (Q.rows() != idx::kAugmented) throw ConfigError("Q must be 12x12");
  if (!(Q(idx::kDelta1, idx::kDelta1) > 0.0) || !(Q(idx::kLcog, idx::kLcog) > 0.0)) {
    throw ConfigError("Q random-walk variances for delta1 and l_cog must be positive");
  }
}

Eigen::VectorXd default_process_variances() {
  Eigen::VectorXd q(idx::kAugmented);
  q << 0.02 * 0.02,   // vy1 [m^2/s^2]
      0.003 * 0.003,  // yaw_rate1 [rad^2/s^2]
      0.02 * 0.02,    // vy2
      0.003 * 0.003,  // yaw_rate2
      5e-4 * 5e-4,    // theta [rad^2]
      300.0 * 300.0,  // tire forces [N^2]
      300.0 * 300.0, 300.0 * 300.0, 300.0 * 300.0, 300.0 * 300.0,
      1e-4,   // delta1 random walk [rad^2 per step]
      1e-4;   // l_cog random walk [m^2 per step]
  return q;
}

NoiseConfig default_noise(MeasurementMode mode, double yaw_rate_variance) {
  NoiseConfig n;
  n.Q = default_process_variances().asDiagonal();
  if (mode == MeasurementMode::kEkf) {
    n.R0 = Eigen::MatrixXd::Constant(1, 1, yaw_rate_variance);
  } else {
    Eigen::VectorXd r(6);
    r << yaw_rate_variance, 0.01 * 0.01, 0.01 * 0.01, 2000.0 * 2000.0, 2000.0 * 2000.0,
        0.01 * 0.01;
    n.R0 = r.asDiagonal();
  }
  return n;
}

NoiseConfig noise_from(const KeyValueFile& kv, MeasurementMode mode) {
  std::set<std::string> known;
  for (const auto& s : state_names()) known.insert("Q." + s);
  for (const auto& s : measurement_names(mode)) known.insert("R0." + s);
  kv.reject_unknown(known, {"c", "tune."});
  NoiseConfig n = default_noise(mode);
  for (int i = 0; i < idx::kAugmented; ++i) {
    n.Q(i, i) = kv.number_or("Q." + state_names()[i], n.Q(i, i));
  }
  const auto& names = measurement_names(mode);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    n.R0(k, k) = kv.number_or("R0." + names[i], n.R0(k, k));
  }
  n.validate();
  return n;
}

KeyValueFile to_key_values(const NoiseConfig& noise, MeasurementMode mode) {
  KeyValueFile kv;
  for (int i = 0; i < idx::kAugmented; ++i) kv.set("Q." + state_names()[i], noise.Q(i, i));
  const auto& names = measurement_names(mode);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    kv.set("R0." + names[i], noise.R0(k, k));
  }
  return kv;
}

NoiseConfig load_noise(const std::filesystem::path& path, MeasurementMode mode) {
  return noise_from(KeyValueFile::load(path), mode);
}

void save_noise(const NoiseConfig& noise, MeasurementMode mode, const std::filesystem::path& path) {
  to_key_values(noise, mode).save(path);
}

GaussianBelief FilterInit::belief() const {
  Eigen::VectorXd s = sd;
  if (s.size() == 0) {
    s.resize(idx::kAugmented);
    s << 0.1, 0.02, 0.1, 0.02, 0.02, 2000.0, 2000.0, 2000.0, 2000.0, 2000.0, 0.02, 1.0;
  }
  if (s.size() != idx::kAugmented) throw ConfigError("FilterInit: sd must have 12 entries");
  GaussianBelief b;
  b.mean = Eigen::VectorXd::Zero(idx::kAugmented);
  b.mean[idx::kLcog] = l_cog;
  b.covariance = s.array().square().matrix().asDiagonal();
  return b;
}

ModelFilter::ModelFilter(VehicleParams params, double dt, const FilterInit& init,
                         CovarianceUpdate form)
    : params_(std::move(params)),
      dt_(dt),
      form_(form),
      process_(make_process_model(params_, dt)),
      ekf_meas_(make_measurement_model(MeasurementMode::kEkf)),
      hybrid_meas_(make_measurement_model(MeasurementMode::kHybrid)),
      belief_(init.belief()) {
  params_.validate();
  if (!(dt > 0.0)) throw ConfigError("ModelFilter: dt must be positive");
}

void ModelFilter::predict(double vx2, double fz2, const Eigen::MatrixXd& Q) {
  if (has_input_) belief_ = hekf::predict(belief_, last_input_, process_, Q);
  last_input_ = Eigen::Vector2d(vx2, fz2);
  has_input_ = true;
}

Correction ModelFilter::correct(const Eigen::VectorXd& y, MeasurementMode mode,
                                const Eigen::MatrixXd& R) {
  const auto& model = mode == MeasurementMode::kEkf ? ekf_meas_ : hybrid_meas_;
  Correction c = hekf::correct(belief_, y, model, R, form_);
  clamp_lcog(c.posterior, params_.l_agg);
  belief_ = c.posterior;
  return c;
}

void clamp_lcog(GaussianBelief& belief, double l_agg) {
  belief.mean[idx::kLcog] = std::clamp(belief.mean[idx::kLcog], 0.5, l_agg);
}

}  // namespace hekf
