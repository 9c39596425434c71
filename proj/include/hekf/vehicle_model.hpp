#pragma once

// Nonlinear single-track model of a truck-semitrailer combination.
//
// Two planar rigid bodies (truck i=1, semitrailer i=2) coupled at the king
// pin by a lateral constraint force. Lateral tire forces follow a Magic
// Formula steady-state curve with first-order relaxation. Coordinates are
// ISO vehicle axes: x forward, y left, yaw counterclockwise positive.
// The derivation is written up in docs/model.md.

#include <array>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "hekf/kv_file.hpp"

namespace hekf {

struct TireParams {
  double C = 1.5;          // shape factor
  double D = 1.0;          // peak factor
  double c1 = 10.0;        // stiffness-curve scale
  double c2 = 6.0e4;       // stiffness-curve load scale [N]
  double l_relax = 0.8;    // relaxation length [m]

  void validate() const;
};

// Axle order used throughout: truck front, truck rear, semitrailer 1..3.
enum Axle : int { kAxle11 = 0, kAxle12, kAxle21, kAxle22, kAxle23, kNumAxles };

struct VehicleParams {
  double m1 = 9000.0;       // truck mass [kg]
  double J1 = 3.5e4;        // truck yaw inertia about its CoG [kg m^2]
  double J2 = 2.5e5;        // semitrailer yaw inertia about its CoG [kg m^2]
  double l11 = 1.3;         // truck front axle ahead of truck CoG [m]
  double l12 = 2.5;         // truck rear axle behind truck CoG [m]
  double l_k = 2.1;         // king pin behind truck CoG [m]
  // Semitrailer axles behind the king pin [m].
  std::array<double, 3> l2 = {6.5, 7.8, 9.1};
  double l_agg = 7.8;       // king pin to running-gear center [m]
  double mu_max = 0.9;
  double g = 9.81;
  std::array<double, 2> fz1 = {6.0e4, 1.1e5};  // truck axle vertical forces [N]
  std::array<TireParams, kNumAxles> tire = {
      TireParams{1.4, 1.0, 9.0, 5.0e4, 0.7}, TireParams{1.5, 1.0, 9.0, 8.0e4, 0.8},
      TireParams{}, TireParams{}, TireParams{}};

  void validate() const;
};

// Continuous model state x_SSM.
using SsmState = Eigen::Matrix<double, 10, 1>;
// x_SSM augmented with the random-walk states delta1 and l_cog.
using AugmentedState = Eigen::Matrix<double, 12, 1>;

namespace idx {
enum : int {
  kVy1 = 0,
  kYawRate1,
  kVy2,
  kYawRate2,
  kTheta,
  kFy11,
  kFy12,
  kFy21,
  kFy22,
  kFy23,
  kDelta1,
  kLcog,
};
inline constexpr int kSsm = 10;
inline constexpr int kAugmented = 12;
}  // namespace idx

// Canonical short names of the augmented state entries, in index order.
const std::array<std::string, 12>& state_names();

struct ModelInput {
  double delta1 = 0.0;  // truck steering angle [rad]
  double vx2 = 10.0;    // semitrailer longitudinal velocity [m/s]
  double fz2 = 1.0e5;   // summed semitrailer axle load [N]
  double l_cog = 5.0;   // king pin to semitrailer CoG [m]
};

std::array<double, 3> vertical_axle_forces(double fz2);

double semitrailer_mass(double fz2, double l_cog, double l_agg, double g);

double mftm_steady_force(double alpha, double fz, const TireParams& tire, double mu_max);

double tire_force_derivative(double fy, double alpha, double fz, double vx,
                             const TireParams& tire, double mu_max);

// Slip angles are heading minus velocity direction, so a positive slip
// angle produces a positive (leftward) lateral force.
std::array<double, kNumAxles> slip_angles(const SsmState& state, const ModelInput& input,
                                          const VehicleParams& params);

std::array<double, kNumAxles> axle_vertical_forces(const ModelInput& input,
                                                   const VehicleParams& params);

// King pin lateral force acting on the semitrailer (the truck receives its
// negative), solved from the acceleration-level coupling constraint.
double coupling_force(const SsmState& state, const ModelInput& input, const VehicleParams& params);

SsmState continuous_dynamics(const SsmState& state, const ModelInput& input,
                             const VehicleParams& params);

// Classic fixed-step fourth-order Runge-Kutta step.
template <typename Vec, typename Fn>
Vec rk4_step(const Vec& x, double dt, Fn&& f) {
  const Vec k1 = f(x);
  const Vec k2 = f(Vec(x + 0.5 * dt * k1));
  const Vec k3 = f(Vec(x + 0.5 * dt * k2));
  const Vec k4 = f(Vec(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

SsmState discretize_step(const SsmState& state, const ModelInput& input,
                         const VehicleParams& params, double dt);

// Augmented transition: RK4 on the model part, random walks held.
AugmentedState augmented_step(const AugmentedState& x, double vx2, double fz2,
                              const VehicleParams& params, double dt);

inline SsmState ssm_part(const AugmentedState& x) { return x.head<idx::kSsm>(); }

// Parameter files ------------------------------------------------------------

VehicleParams vehicle_params_from(const KeyValueFile& kv);
KeyValueFile to_key_values(const VehicleParams& params);
VehicleParams load_vehicle_params(const std::filesystem::path& path);
void save_vehicle_params(const VehicleParams& params, const std::filesystem::path& path);

}  // namespace hekf
