#pragma once

// Synthetic maneuvers: loading states, steering and speed profiles, truth
// simulation and sensor noise.

#include <cstdint>
#include <string>
#include <vector>

#include "hekf/dataset.hpp"
#include "hekf/vehicle_model.hpp"

namespace hekf {

struct TrailerBody {
  double unladen_mass = 7500.0;  // [kg]
  double unladen_cog = 5.8;      // behind the king pin [m]
  double bed_length = 13.6;      // [m]
};

struct LoadingState {
  std::string id;
  double payload = 0.0;           // [kg]
  double payload_position = 0.0;  // payload CoG behind the king pin [m]

  void validate(const TrailerBody& body) const;
};

// Combined CoG distance and summed axle load from the static model.
double loaded_cog(const LoadingState& load, const TrailerBody& body);
double loaded_fz2(const LoadingState& load, const TrailerBody& body, const VehicleParams& params);

// no_load, partial_load_1, full_load and the evaluation-only partial_load_2.
std::vector<LoadingState> default_loading_states();
const LoadingState& find_loading_state(const std::vector<LoadingState>& states, const std::string& id);

enum class SteeringKind { kSine, kStep, kRamp };
std::string to_string(SteeringKind kind);
SteeringKind steering_kind_from(const std::string& name);

struct ManeuverSpec {
  std::string name;
  SteeringKind kind = SteeringKind::kSine;
  double amplitude = 0.1;       // steering amplitude [rad], at most 30 deg
  double frequency = 0.2;       // sine: start frequency [Hz]
  double frequency_end = 0.5;   // sine: end frequency [Hz]
  double hold = 4.0;            // step/ramp: time between level changes [s]
  double ramp_time = 2.0;       // ramp: duration of each ramp [s]
  double steer_rate = 0.3;      // step: steering rate limit [rad/s]
  double speed_start = 10.0;    // [m/s]
  double speed_end = 10.0;      // [m/s]
  double duration = 60.0;       // [s]
  double lead_in = 2.0;         // straight driving before the profile [s]
  double max_lateral_accel = 3.0;  // caps the amplitude at high speed [m/s^2]
  std::string loading = "full_load";
  std::uint64_t seed = 1;

  void validate() const;
  // Amplitude actually used after the lateral-acceleration cap.
  double effective_amplitude(const VehicleParams& params) const;
};

struct SensorNoise {
  double yaw_rate2 = 0.005;  // [rad/s]
  double vx2 = 0.05;         // [m/s]
  double fz2 = 500.0;        // [N]
  bool wheel_speed_yaw = false;
  double track_width = 2.04;      // [m]
  double wheel_speed = 0.0025;    // per-wheel speed noise [m/s]
};

// Steering angle samples k*dt, k in [0, n), for a given amplitude.
std::vector<double> steering_profile(const ManeuverSpec& spec, double amplitude, double dt, Eigen::Index n);
double speed_at(const ManeuverSpec& spec, double t);

// Nominal tire parameters scaled by (1 +- fraction) per group and field
// (truck front, truck rear, semitrailer), signs drawn from the seed.
VehicleParams perturb_tire_params(const VehicleParams& nominal, double fraction, std::uint64_t seed);

ManeuverDataset generate_maneuver(const ManeuverSpec& spec, const LoadingState& load,
                                  const TrailerBody& body, const VehicleParams& truth_params,
                                  const SensorNoise& noise, double dt = 0.01);

}  // namespace hekf
