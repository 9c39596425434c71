#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "hekf/errors.hpp"
#include "hekf/kv_file.hpp"
#include "hekf/vehicle_model.hpp"

using namespace hekf;

namespace {

SsmState zero_state() { return SsmState::Zero(); }

SsmState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SsmState s;
  s << 0.5 * u(rng), 0.2 * u(rng), 0.5 * u(rng), 0.2 * u(rng), 0.2 * u(rng), 2e4 * u(rng), 2e4 * u(rng),
      1e4 * u(rng), 1e4 * u(rng), 1e4 * u(rng);
  return s;
}

SsmState simulate(SsmState s, const ModelInput& in, const VehicleParams& p, double dt, double t_end) {
  const int n = static_cast<int>(std::lround(t_end / dt));
  for (int k = 0; k < n; ++k) s = discretize_step(s, in, p, dt);
  return s;
}

}  // namespace

TEST_CASE("vertical axle forces split evenly") {
  const auto a = vertical_axle_forces(90000.0);
  for (double f : a) CHECK(f == 30000.0);
  for (double f : vertical_axle_forces(0.0)) CHECK(f == 0.0);
  for (double f : vertical_axle_forces(75000.0)) CHECK(f == 25000.0);
  const auto odd = vertical_axle_forces(100001.0);
  CHECK(std::abs(odd[0] + odd[1] + odd[2] - 100001.0) <= std::nextafter(100001.0, 2e5) - 100001.0);
  CHECK_THROWS_AS(vertical_axle_forces(-1.0), DomainError);
}

TEST_CASE("semitrailer mass from the static load") {
  CHECK(semitrailer_mass(98100.0, 5.0, 5.0, 9.81) == doctest::Approx(10000.0).epsilon(1e-14));
  CHECK(semitrailer_mass(0.0, 3.0, 7.0, 9.81) == 0.0);
  CHECK(semitrailer_mass(98100.0, 4.0, 6.0, 9.81) == doctest::Approx(15000.0).epsilon(1e-14));
  CHECK_THROWS_AS(semitrailer_mass(1e5, 0.0, 5.0, 9.81), DomainError);
}

TEST_CASE("steady tire force: pinned value and shape") {
  const TireParams t{1.5, 1.0, 8e4, 4e4, 0.8};
  // Independent evaluation in long double.
  const long double fz = 3e4L;
  const long double b = 8e4L * std::sin(2.0L * std::atan(fz / 4e4L)) / (1.5L * 1.0L);
  const long double expected = 0.9L * fz * std::sin(1.5L * std::atan(b * std::tan(0.05L)));
  CHECK(mftm_steady_force(0.05, 3e4, t, 0.9) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  CHECK(mftm_steady_force(0.0, 3e4, t, 0.9) == 0.0);
  CHECK(mftm_steady_force(-0.05, 3e4, t, 0.9) == -mftm_steady_force(0.05, 3e4, t, 0.9));
  CHECK_THROWS_AS(mftm_steady_force(std::numbers::pi / 2.0, 3e4, t, 0.9), DomainError);
  CHECK_THROWS_AS(mftm_steady_force(0.1, -1.0, t, 0.9), DomainError);

  // Monotone increasing near zero.
  const TireParams d{};
  double prev = mftm_steady_force(-0.01, 5e4, d, 0.9);
  for (int i = -9; i <= 10; ++i) {
    const double f = mftm_steady_force(0.001 * i, 5e4, d, 0.9);
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("steady tire force bound and symmetry over random draws") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> alpha(-1.5, 1.5);
  std::uniform_real_distribution<double> fz(0.0, 1.5e5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const TireParams t{0.5 + 2.0 * unit(rng), 0.5 + unit(rng), 1.0 + 20.0 * unit(rng), 1e4 + 1e5 * unit(rng),
                       0.2 + 1.5 * unit(rng)};
    const double mu = 0.1 + 1.9 * unit(rng);
    const double a = alpha(rng);
    const double z = fz(rng);
    const double f = mftm_steady_force(a, z, t, mu);
    REQUIRE(std::abs(f) <= mu * z);
    REQUIRE(std::abs(f + mftm_steady_force(-a, z, t, mu)) <= 1e-12 * std::max(1.0, std::abs(f)));
    REQUIRE(std::abs(tire_force_derivative(f, a, z, 10.0, t, mu)) < 1e-9);
  }
}

TEST_CASE("tire relaxation") {
  const TireParams t{};
  const double f_ss = mftm_steady_force(0.03, 5e4, t, 0.9);
  CHECK(tire_force_derivative(f_ss, 0.03, 5e4, 12.0, t, 0.9) == 0.0);
  CHECK(tire_force_derivative(0.0, 0.0, 5e4, 12.0, t, 0.9) == 0.0);
  const double d1 = tire_force_derivative(100.0, 0.03, 5e4, 5.0, t, 0.9);
  const double d2 = tire_force_derivative(100.0, 0.03, 5e4, 10.0, t, 0.9);
  CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-14));
  CHECK_THROWS_AS(tire_force_derivative(0.0, 0.0, 5e4, 0.0, t, 0.9), DomainError);
}

TEST_CASE("slip angles") {
  const VehicleParams p;
  ModelInput in;
  for (double a : slip_angles(zero_state(), in, p)) CHECK(a == 0.0);
  in.delta1 = 0.1;
  const auto s = slip_angles(zero_state(), in, p);
  // Steering alone turns the front wheel 0.1 rad left of its velocity.
  CHECK(s[kAxle11] == doctest::Approx(0.1));
  for (int a = 1; a < kNumAxles; ++a) CHECK(s[a] == 0.0);
  in.vx2 = 0.0;
  CHECK_THROWS_AS(slip_angles(zero_state(), in, p), DomainError);
}

TEST_CASE("slip angles match the contact-point velocity of the moving bodies") {
  const VehicleParams p;
  std::mt19937_64 rng(3);
  ModelInput in{0.05, 12.0, 1.5e5, 5.0};
  for (int trial = 0; trial < 20; ++trial) {
    const SsmState s = random_state(rng);
    const auto alpha = slip_angles(s, in, p);
    // World-frame position of a body-fixed point, rigid motion with
    // constant body velocities; central difference at t = 0.
    const double h = 1e-6;
    const auto point_velocity = [&](double vy, double r, double x_body) {
      const auto pos = [&](double t) {
        const double psi = r * t;
        const double cx = in.vx2 * t;  // body velocity is constant in the body frame; psi small over h
        const double cy = vy * t;
        return Eigen::Vector2d(cx + std::cos(psi) * x_body, cy + std::sin(psi) * x_body);
      };
      return Eigen::Vector2d((pos(h) - pos(-h)) / (2.0 * h));
    };
    const auto check = [&](int axle, double vy, double r, double x_body, double heading) {
      const Eigen::Vector2d v = point_velocity(vy, r, x_body);
      CHECK(alpha[axle] == doctest::Approx(heading - std::atan(v.y() / v.x())).epsilon(1e-6));
    };
    check(kAxle11, s[idx::kVy1], s[idx::kYawRate1], p.l11, in.delta1);
    check(kAxle12, s[idx::kVy1], s[idx::kYawRate1], -p.l12, 0.0);
    for (int j = 0; j < 3; ++j) {
      check(kAxle21 + j, s[idx::kVy2], s[idx::kYawRate2], -(p.l2[static_cast<std::size_t>(j)] - in.l_cog), 0.0);
    }
  }
}

TEST_CASE("continuous dynamics identities") {
  const VehicleParams p;
  const ModelInput in{0.0, 15.0, 1.2e5, 5.5};
  CHECK(continuous_dynamics(zero_state(), in, p).isZero(0.0));

  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const SsmState s = random_state(rng);
    ModelInput q = in;
    q.delta1 = 0.2 * (static_cast<double>(i % 7) - 3.0) / 3.0;
    const SsmState d = continuous_dynamics(s, q, p);
    REQUIRE(d[idx::kTheta] == s[idx::kYawRate2] - s[idx::kYawRate1]);
  }

  SsmState bad = zero_state();
  bad[idx::kTheta] = 1.6;
  CHECK_THROWS_AS(continuous_dynamics(bad, in, p), DomainError);
}

TEST_CASE("straight driving from rest stays at rest") {
  const VehicleParams p;
  const ModelInput in{0.0, 20.0, 2.0e5, 5.0};
  const SsmState s = simulate(zero_state(), in, p, 0.01, 10.0);
  CHECK(s.isZero(0.0));
}

TEST_CASE("steady cornering balances the centripetal terms") {
  const VehicleParams p;
  const ModelInput in{0.04, 10.0, 1.5e5, 5.5};
  const SsmState s = simulate(zero_state(), in, p, 0.01, 60.0);
  const SsmState d = continuous_dynamics(s, in, p);
  REQUIRE(d.head<5>().cwiseAbs().maxCoeff() < 1e-8);
  CHECK(s[idx::kYawRate1] == doctest::Approx(s[idx::kYawRate2]).epsilon(1e-8));
  const double fc = coupling_force(s, in, p);
  const double truck = s[idx::kFy11] * std::cos(in.delta1) + s[idx::kFy12] - fc;
  const double m2 = semitrailer_mass(in.fz2, in.l_cog, p.l_agg, p.g);
  const double trailer = s[idx::kFy21] + s[idx::kFy22] + s[idx::kFy23] + fc;
  CHECK(truck == doctest::Approx(p.m1 * in.vx2 * s[idx::kYawRate1]).epsilon(1e-6));
  CHECK(trailer == doctest::Approx(m2 * in.vx2 * s[idx::kYawRate2]).epsilon(1e-6));
}

TEST_CASE("RK4 step") {
  const Eigen::Matrix<double, 1, 1> x0(1.0);
  const auto x1 = rk4_step(x0, 0.01, [](const Eigen::Matrix<double, 1, 1>& x) { return Eigen::Matrix<double, 1, 1>(-x); });
  CHECK(std::abs(x1[0] - std::exp(-0.01)) < 1e-8);

  const VehicleParams p;
  const ModelInput in{0.05, 12.0, 1.5e5, 5.0};
  std::mt19937_64 rng(9);
  const SsmState s = random_state(rng);

  // Forward difference approaches the derivative with O(dt) error.
  const SsmState d = continuous_dynamics(s, in, p);
  const double e1 = ((discretize_step(s, in, p, 1e-4) - s) / 1e-4 - d).norm();
  const double e2 = ((discretize_step(s, in, p, 5e-5) - s) / 5e-5 - d).norm();
  CHECK(e2 < 0.6 * e1);

  // Step halving: one step vs two half steps differ at O(dt^5).
  const auto diff = [&](double dt) {
    return (discretize_step(s, in, p, dt) -
            discretize_step(discretize_step(s, in, p, dt / 2.0), in, p, dt / 2.0))
        .norm();
  };
  const double r = diff(0.004) / diff(0.002);
  CHECK(r > 20.0);
  CHECK(r < 45.0);

  CHECK_THROWS_AS(discretize_step(s, in, p, 0.0), DomainError);
}

TEST_CASE("RK4 global error converges at fourth order") {
  const VehicleParams p;
  const ModelInput in{0.05, 12.0, 1.5e5, 5.0};
  const SsmState ref = simulate(zero_state(), in, p, 0.00125, 10.0);
  const double e1 = (simulate(zero_state(), in, p, 0.02, 10.0) - ref).norm();
  const double e2 = (simulate(zero_state(), in, p, 0.01, 10.0) - ref).norm();
  const double order = std::log2(e1 / e2);
  CHECK(order > 3.5);
  CHECK(order < 4.5);
}

TEST_CASE("augmented step holds the random-walk states") {
  const VehicleParams p;
  AugmentedState x = AugmentedState::Zero();
  x[idx::kDelta1] = 0.05;
  x[idx::kLcog] = 5.0;
  const AugmentedState y = augmented_step(x, 10.0, 1.5e5, p, 0.01);
  CHECK(y[idx::kDelta1] == 0.05);
  CHECK(y[idx::kLcog] == 5.0);
  CHECK(y[idx::kYawRate1] != 0.0);
}

TEST_CASE("parameter files round trip and reject unknown keys") {
  VehicleParams p;
  p.tire[kAxle22].c1 = 7.25;
  p.J2 = 2.6e5;
  const VehicleParams q = vehicle_params_from(KeyValueFile::parse(to_key_values(p).to_string()));
  CHECK(q.J2 == p.J2);
  CHECK(q.tire[kAxle22].c1 == 7.25);
  CHECK(q.tire[kAxle11].C == p.tire[kAxle11].C);
  CHECK_THROWS_AS(vehicle_params_from(KeyValueFile::parse("m1 = 9000\nbogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(vehicle_params_from(KeyValueFile::parse("m1 = -5\n")), ConfigError);
  CHECK_THROWS_AS(vehicle_params_from(KeyValueFile::parse("mu_max = 2.5\n")), ConfigError);
}
