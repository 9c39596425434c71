#include "hekf/ekf.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hekf/errors.hpp"

namespace hekf {
namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

void symmetrize(Eigen::MatrixXd& m) {
  const Eigen::MatrixXd t = m.transpose();
  m = 0.5 * (m + t);
}

void GaussianBelief::check() const {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw NumericalError("belief: covariance shape does not match mean");
  }
  if (!mean.allFinite() || !covariance.allFinite()) {
    throw NumericalError("belief: non-finite mean or covariance");
  }
  const double scale = covariance.cwiseAbs().maxCoeff();
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(scale, 1e-300)) {
    throw NumericalError("belief: covariance is not symmetric");
  }
  // Definiteness is judged on the correlation matrix so that states with
  // very different units are weighed equally.
  Eigen::VectorXd d = covariance.diagonal();
  if ((d.array() < 0.0).any()) {
    throw NumericalError("belief: negative variance on the covariance diagonal");
  }
  const Eigen::VectorXd inv_sd =
      d.array().sqrt().unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 0.0; });
  const Eigen::MatrixXd corr = inv_sd.asDiagonal() * covariance * inv_sd.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
    std::ostringstream msg;
    msg << "belief: covariance is indefinite (min correlation eigenvalue "
        << eig.eigenvalues().minCoeff() << ")";
    throw NumericalError(msg.str());
  }
}

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                 const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd J;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = std::max(1e-6, 1e-6 * std::abs(x[i]));
    xp[i] = x[i] + h;
    const Eigen::VectorXd fp = fn(xp);
    xp[i] = x[i] - h;
    const Eigen::VectorXd fm = fn(xp);
    xp[i] = x[i];
    if (i == 0) J.resize(fp.size(), n);
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  if (!all_finite(J)) throw NumericalError("numeric_jacobian: non-finite entries");
  return J;
}

Eigen::MatrixXd jacobian_state(const ProcessModel& model, const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& input) {
  Eigen::MatrixXd A;
  if (model.jacobian) {
    A = model.jacobian(mean, input);
  } else {
    A = numeric_jacobian([&](const Eigen::VectorXd& x) { return model.transition(x, input); },
                         mean);
  }
  if (!all_finite(A)) throw NumericalError("jacobian_state: non-finite entries");
  return A;
}

Eigen::MatrixXd jacobian_output(const MeasurementModel& model, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd C = model.jacobian ? model.jacobian(mean) : numeric_jacobian(model.observe, mean);
  if (!all_finite(C)) throw NumericalError("jacobian_output: non-finite entries");
  return C;
}

GaussianBelief predict(const GaussianBelief& belief, const Eigen::VectorXd& input,
                       const ProcessModel& model, const Eigen::MatrixXd& Q) {
  const Eigen::MatrixXd A = jacobian_state(model, belief.mean, input);
  GaussianBelief out;
  out.mean = model.transition(belief.mean, input);
  out.covariance = A * belief.covariance * A.transpose() + Q;
  symmetrize(out.covariance);
  if (!out.mean.allFinite() || !all_finite(out.covariance)) {
    throw NumericalError("predict: non-finite prediction");
  }
  return out;
}

Correction correct(const GaussianBelief& prior, const Eigen::VectorXd& y,
                   const MeasurementModel& model, const Eigen::MatrixXd& R,
                   CovarianceUpdate form) {
  const Eigen::MatrixXd C = jacobian_output(model, prior.mean);
  const Eigen::MatrixXd PCt = prior.covariance * C.transpose();
  Eigen::MatrixXd S = C * PCt + R;
  symmetrize(S);

  // Conditioning is judged on the unit-diagonal form of S so that channels
  // with very different units do not trip the check.
  const Eigen::VectorXd sd = S.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!(sd.array() > 0.0).all()) {
    throw NumericalError("correct: innovation covariance has a zero variance");
  }
  const Eigen::VectorXd inv_sd = sd.cwiseInverse();
  const Eigen::MatrixXd Sn = inv_sd.asDiagonal() * S * inv_sd.asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Sn);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || !(rcond > 1e-15)) {
    std::ostringstream msg;
    msg << "correct: singular innovation covariance (rcond " << rcond << ", size " << S.rows()
        << ")";
    throw NumericalError(msg.str());
  }

  Correction c;
  // K = P C^T S^-1 with S^-1 = D Sn^-1 D.
  const Eigen::MatrixXd rhs = inv_sd.asDiagonal() * PCt.transpose();
  c.gain = (inv_sd.asDiagonal() * lu.solve(rhs)).transpose();
  c.innovation = y - model.observe(prior.mean);
  c.innovation_covariance = S;

  const Eigen::Index n = prior.size();
  const Eigen::MatrixXd IKC = Eigen::MatrixXd::Identity(n, n) - c.gain * C;
  c.posterior.mean = prior.mean + c.gain * c.innovation;
  if (form == CovarianceUpdate::kJoseph) {
    c.posterior.covariance =
        IKC * prior.covariance * IKC.transpose() + c.gain * R * c.gain.transpose();
  } else {
    c.posterior.covariance = IKC * prior.covariance;
  }
  symmetrize(c.posterior.covariance);
  if (!c.posterior.mean.allFinite() || !all_finite(c.posterior.covariance)) {
    throw NumericalError("correct: non-finite posterior");
  }
  return c;
}

double nees(const GaussianBelief& belief, const Eigen::VectorXd& truth) {
  const Eigen::VectorXd e = truth - belief.mean;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(belief.covariance);
  return e.dot(ldlt.solve(e));
}

}  // namespace hekf
