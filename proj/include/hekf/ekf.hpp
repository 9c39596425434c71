#pragma once

// Discrete-time extended Kalman filter with additive Gaussian noise.
//
//   x_k = f(x_{k-1}, u_{k-1}) + v,   v ~ N(0, Q)
//   y_k = g(x_k) + w,                w ~ N(0, R)
//
// The filter is model-agnostic; Jacobians come from a supplied analytic
// function or from central finite differences.

#include <functional>
#include <optional>

#include <Eigen/Core>

namespace hekf {

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  Eigen::Index size() const { return mean.size(); }
  // Throws NumericalError when non-finite, asymmetric or clearly indefinite.
  void check() const;
};

using TransitionFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using TransitionJacobianFn =
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using ObservationFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ObservationJacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct ProcessModel {
  TransitionFn transition;
  TransitionJacobianFn jacobian;  // empty -> finite differences
};

struct MeasurementModel {
  ObservationFn observe;
  ObservationJacobianFn jacobian;  // empty -> finite differences
};

enum class CovarianceUpdate {
  kStandard,  // (I - K C) P, re-symmetrized
  kJoseph,    // (I - K C) P (I - K C)^T + K R K^T
};

// Central differences with per-coordinate step max(1e-6, 1e-6 |x_i|).
Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                 const Eigen::VectorXd& x);

Eigen::MatrixXd jacobian_state(const ProcessModel& model, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& input);
Eigen::MatrixXd jacobian_output(const MeasurementModel& model, const Eigen::VectorXd& mean);

GaussianBelief predict(const GaussianBelief& belief, const Eigen::VectorXd& input,
                       const ProcessModel& model, const Eigen::MatrixXd& Q);

struct Correction {
  GaussianBelief posterior;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_covariance;
  Eigen::MatrixXd gain;
};

Correction correct(const GaussianBelief& prior, const Eigen::VectorXd& y,
                   const MeasurementModel& model, const Eigen::MatrixXd& R,
                   CovarianceUpdate form = CovarianceUpdate::kStandard);

void symmetrize(Eigen::MatrixXd& m);

// Normalized estimation error squared e^T P^-1 e.
double nees(const GaussianBelief& belief, const Eigen::VectorXd& truth);

}  // namespace hekf
