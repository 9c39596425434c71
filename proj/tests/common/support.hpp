#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hekf/ekf.hpp"
#include "hekf/narx.hpp"
#include "hekf/vehicle_filter.hpp"
#include "hekf/vehicle_model.hpp"

namespace hekf::testing {

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Constant-velocity model, position measured.
struct LinearCase {
  double dt = 0.1;
  Eigen::Matrix2d F;
  Eigen::Matrix2d Q;
  Eigen::Matrix<double, 1, 2> H;
  Eigen::Matrix<double, 1, 1> R;

  LinearCase() {
    F << 1.0, dt, 0.0, 1.0;
    const double q = 0.5;
    Q << q * dt * dt * dt / 3.0, q * dt * dt / 2.0, q * dt * dt / 2.0, q * dt;
    H << 1.0, 0.0;
    R << 0.25;
  }

  ProcessModel process() const {
    ProcessModel m;
    const Eigen::MatrixXd Fd = F;
    m.transition = [Fd](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return Eigen::VectorXd(Fd * x); };
    m.jacobian = [Fd](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Fd; };
    return m;
  }
  MeasurementModel measurement(bool analytic) const {
    MeasurementModel m;
    const Eigen::MatrixXd Hd = H;
    m.observe = [Hd](const Eigen::VectorXd& x) { return Eigen::VectorXd(Hd * x); };
    if (analytic) m.jacobian = [Hd](const Eigen::VectorXd&) { return Hd; };
    return m;
  }
};

// Runs the library filter and a written-out Kalman filter side by side for
// `steps` steps; returns the worst relative difference of mean or covariance.
inline double kf_oracle_worst(bool analytic_measurement_jacobian, int steps = 500, std::uint64_t seed = 17) {
  const LinearCase lc;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Eigen::LLT<Eigen::Matrix2d> qchol(lc.Q);
  const ProcessModel proc = lc.process();
  const MeasurementModel meas = lc.measurement(analytic_measurement_jacobian);
  const Eigen::VectorXd u(0);

  Eigen::Vector2d truth(0.0, 1.0);
  Eigen::Vector2d m_ref(0.5, 0.0);
  Eigen::Matrix2d P_ref = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  GaussianBelief b{m_ref, P_ref};
  double worst = 0.0;
  for (int k = 0; k < steps; ++k) {
    truth = lc.F * truth + qchol.matrixL() * Eigen::Vector2d(n01(rng), n01(rng));
    const double y = truth[0] + 0.5 * n01(rng);

    const Eigen::Vector2d mp = lc.F * m_ref;
    const Eigen::Matrix2d Pp = lc.F * P_ref * lc.F.transpose() + lc.Q;
    const double s = Pp(0, 0) + lc.R(0, 0);
    const Eigen::Vector2d K = Pp.col(0) / s;
    m_ref = mp + K * (y - mp[0]);
    P_ref = Pp - K * Pp.row(0);

    b = predict(b, u, proc, lc.Q);
    b = correct(b, Eigen::VectorXd::Constant(1, y), meas, lc.R).posterior;
    worst = std::max({worst, rel_diff(b.mean, m_ref), rel_diff(b.covariance, P_ref)});
  }
  return worst;
}

// Central-difference column, then one Richardson extrapolation step.
inline Eigen::MatrixXd richardson_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, const Eigen::VectorXd& scale) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = f(x).size();
  Eigen::MatrixXd J(m, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto central = [&](double h) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      return Eigen::VectorXd((f(xp) - f(xm)) / (2.0 * h));
    };
    const double h = 1e-3 * scale[i];
    J.col(i) = (4.0 * central(h / 2.0) - central(h)) / 3.0;
  }
  return J;
}

// Typical magnitude of each augmented state; used to compare Jacobians in
// dimensionless form.
inline Eigen::VectorXd state_scale() {
  Eigen::VectorXd s(idx::kAugmented);
  s << 1.0, 0.2, 1.0, 0.2, 0.1, 1e4, 1e4, 1e4, 1e4, 1e4, 0.1, 1.0;
  return s;
}

// Worst scaled relative difference between the filter Jacobian and the
// Richardson oracle over `trials` random operating points.
inline double jacobian_oracle_worst(int trials, std::uint64_t seed = 23) {
  const VehicleParams p;
  const ProcessModel proc = make_process_model(p, 0.01);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u11(-1.0, 1.0);
  const Eigen::VectorXd scale = state_scale();
  const Eigen::VectorXd inv = scale.cwiseInverse();
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::VectorXd xr(idx::kAugmented);
    for (int i = 0; i < idx::kAugmented; ++i) xr[i] = 0.5 * scale[i] * u11(rng);
    xr[idx::kLcog] = 5.0 + u11(rng);
    const Eigen::Vector2d ur(8.0 + 6.0 * (u11(rng) + 1.0), 1.0e5 + 5e4 * u11(rng));
    const auto f = [&](const Eigen::VectorXd& v) { return proc.transition(v, ur); };
    const Eigen::MatrixXd J = inv.asDiagonal() * jacobian_state(proc, xr, ur) * scale.asDiagonal();
    const Eigen::MatrixXd R = inv.asDiagonal() * richardson_jacobian(f, xr, scale) * scale.asDiagonal();
    worst = std::max(worst, rel_diff(J, R));
  }
  return worst;
}

inline NarxNetwork random_net(int layers, int neurons, std::uint64_t seed, double gain = 1.0) {
  NarxConfig c;
  c.hidden_layers = layers;
  c.total_neurons = neurons;
  NarxNetwork net(c);
  std::mt19937_64 rng(seed);
  net.initialize(rng);
  net.set_params(gain * net.params());
  return net;
}

// Smooth random excitation in standardized units.
inline Eigen::MatrixXd smooth_inputs(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd u(n, 3);
  Eigen::RowVector3d state = Eigen::RowVector3d::Zero();
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int c = 0; c < 3; ++c) state[c] = 0.95 * state[c] + 0.3 * n01(rng);
    u.row(t) = state;
  }
  return u;
}

inline std::vector<NarxSequence> teacher_data(const NarxNetwork& teacher, int count, Eigen::Index n) {
  std::vector<NarxSequence> data;
  for (int i = 0; i < count; ++i) {
    NarxSequence s;
    s.inputs = smooth_inputs(n, 100 + static_cast<std::uint64_t>(i));
    s.targets = simulate_closed_loop(teacher, s.inputs);
    s.train_end = n * 4 / 5;
    data.push_back(std::move(s));
  }
  return data;
}

// Worst relative error of the analytic parameter and feature gradients
// against central differences, over every grid shape.
inline double narx_gradient_worst(std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst = 0.0;
  for (int layers = 1; layers <= 3; ++layers) {
    for (int neurons : {5, 10, 15, 20, 25, 30}) {
      NarxNetwork net = random_net(layers, neurons, static_cast<std::uint64_t>(layers * 100 + neurons));
      const int nf = net.config().feature_size();
      std::vector<double> f(static_cast<std::size_t>(nf));
      for (double& v : f) v = n01(rng);
      Eigen::VectorXd dp(net.num_params());
      Eigen::VectorXd df(nf);
      net.forward_with_gradient(f, dp, df);
      const Eigen::VectorXd p0 = net.params();
      Eigen::VectorXd fd(net.num_params());
      for (Eigen::Index i = 0; i < p0.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(p0[i]));
        Eigen::VectorXd p = p0;
        p[i] += h;
        net.set_params(p);
        const double up = net.forward(f);
        p[i] -= 2.0 * h;
        net.set_params(p);
        const double down = net.forward(f);
        fd[i] = (up - down) / (2.0 * h);
      }
      net.set_params(p0);
      worst = std::max(worst, (dp - fd).norm() / fd.norm());

      Eigen::VectorXd ff(nf);
      for (int j = 0; j < nf; ++j) {
        std::vector<double> g = f;
        g[static_cast<std::size_t>(j)] += 1e-6;
        const double up = net.forward(g);
        g[static_cast<std::size_t>(j)] -= 2e-6;
        ff[j] = (up - net.forward(g)) / 2e-6;
      }
      worst = std::max(worst, (df - ff).norm() / ff.norm());
    }
  }
  return worst;
}

// Closed-loop epochs actually run when 5000 are requested on a noise target
// that keeps the optimizer moving.
inline int epochs_for_oversized_request() {
  NarxSequence noise;
  noise.inputs = smooth_inputs(60, 8);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  noise.targets = Eigen::VectorXd(60);
  for (Eigen::Index i = 0; i < 60; ++i) noise.targets[i] = 0.3 * n01(rng);
  noise.train_end = 60;
  NarxConfig c;
  c.hidden_layers = 2;
  c.total_neurons = 10;
  TrainingOptions huge;
  huge.max_epochs = 5000;
  huge.patience = 1 << 30;
  huge.mu_max = 1e300;
  huge.lambda = 0.0;
  TrainingReport rep;
  train_closed_loop(train_open_loop({noise}, c, 1, huge), {noise}, huge, &rep);
  return rep.epochs;
}

// Largest per-state deviation relative to that state's range in `b`.
inline double max_rel_state_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (Eigen::Index s = 0; s < a.cols(); ++s) {
    const double range = std::max(b.col(s).cwiseAbs().maxCoeff(), 1e-12);
    worst = std::max(worst, (a.col(s) - b.col(s)).cwiseAbs().maxCoeff() / range);
  }
  return worst;
}

}  // namespace hekf::testing
