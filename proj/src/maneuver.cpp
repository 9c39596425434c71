#include "hekf/maneuver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hekf/errors.hpp"

namespace hekf {

namespace {

constexpr double kMaxSteer = 30.0 * std::numbers::pi / 180.0;
constexpr double kMinSpeed = 3.0;
constexpr double kMaxSpeed = 22.0;

}  // namespace

void LoadingState::validate(const TrailerBody& body) const {
  if (id.empty()) throw ConfigError("loading state: empty id");
  if (payload < 0.0) throw ConfigError("loading state " + id + ": negative payload");
  if (payload > 0.0 && (payload_position < 0.0 || payload_position > body.bed_length)) {
    throw ConfigError("loading state " + id + ": payload position outside the trailer bed");
  }
}

double loaded_cog(const LoadingState& load, const TrailerBody& body) {
  const double m = body.unladen_mass + load.payload;
  return (body.unladen_mass * body.unladen_cog + load.payload * load.payload_position) / m;
}

double loaded_fz2(const LoadingState& load, const TrailerBody& body, const VehicleParams& params) {
  const double m = body.unladen_mass + load.payload;
  return m * params.g * loaded_cog(load, body) / params.l_agg;
}

std::vector<LoadingState> default_loading_states() {
  return {
      {"no_load", 0.0, 0.0},
      {"partial_load_1", 16000.0, 5.0},
      {"full_load", 21600.0, 4.5},
      {"partial_load_2", 16000.0, 8.5},
  };
}

const LoadingState& find_loading_state(const std::vector<LoadingState>& states, const std::string& id) {
  for (const auto& s : states) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown loading state '" + id + "'");
}

std::string to_string(SteeringKind kind) {
  switch (kind) {
    case SteeringKind::kSine: return "sine";
    case SteeringKind::kStep: return "step";
    case SteeringKind::kRamp: return "ramp";
  }
  return "?";
}

SteeringKind steering_kind_from(const std::string& name) {
  if (name == "sine") return SteeringKind::kSine;
  if (name == "step") return SteeringKind::kStep;
  if (name == "ramp") return SteeringKind::kRamp;
  throw ConfigError("unknown steering profile '" + name + "' (expected sine, step or ramp)");
}

void ManeuverSpec::validate() const {
  const std::string who = "maneuver " + name + ": ";
  if (!(amplitude >= 0.0 && amplitude <= kMaxSteer + 1e-12)) {
    throw ConfigError(who + "amplitude must be within [0, 30 deg]");
  }
  for (double v : {speed_start, speed_end}) {
    if (!(v >= kMinSpeed && v <= kMaxSpeed)) throw ConfigError(who + "speeds must be within [3, 22] m/s");
  }
  if (!(duration > lead_in) || lead_in < 0.0) throw ConfigError(who + "duration must exceed the lead-in");
  if (!(frequency > 0.0) || !(frequency_end > 0.0)) throw ConfigError(who + "frequencies must be positive");
  if (!(hold > 0.0) || !(ramp_time > 0.0) || ramp_time > hold) {
    throw ConfigError(who + "need 0 < ramp_time <= hold");
  }
  if (!(steer_rate > 0.0)) throw ConfigError(who + "steer_rate must be positive");
  if (!(max_lateral_accel > 0.0)) throw ConfigError(who + "max_lateral_accel must be positive");
}

double ManeuverSpec::effective_amplitude(const VehicleParams& params) const {
  const double v = std::max(speed_start, speed_end);
  const double wheelbase = params.l11 + params.l12;
  return std::min(amplitude, max_lateral_accel * wheelbase / (v * v));
}

double speed_at(const ManeuverSpec& spec, double t) {
  if (t <= spec.lead_in) return spec.speed_start;
  const double s = std::min(1.0, (t - spec.lead_in) / (spec.duration - spec.lead_in));
  return spec.speed_start + s * (spec.speed_end - spec.speed_start);
}

std::vector<double> steering_profile(const ManeuverSpec& spec, double amplitude, double dt, Eigen::Index n) {
  std::vector<double> delta(static_cast<std::size_t>(n), 0.0);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> mag(0.4, 1.0);
  const double span = spec.duration - spec.lead_in;
  const auto segments = static_cast<std::size_t>(std::ceil(span / spec.hold)) + 2;
  std::vector<double> levels(segments, 0.0);
  const double sign0 = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < segments; ++i) {
    const double sign = (i % 2 == 0) ? sign0 : -sign0;
    levels[i] = sign * amplitude * mag(rng);
  }

  double current = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double tp = static_cast<double>(k) * dt - spec.lead_in;
    double value = 0.0;
    if (tp > 0.0) {
      switch (spec.kind) {
        case SteeringKind::kSine: {
          const double phase = spec.frequency * tp + 0.5 * (spec.frequency_end - spec.frequency) * tp * tp / span;
          value = amplitude * std::sin(2.0 * std::numbers::pi * phase);
          break;
        }
        case SteeringKind::kStep: {
          const auto seg = static_cast<std::size_t>(tp / spec.hold);
          // Alternate between a level and straight driving.
          const double target = seg % 2 == 0 ? levels[std::min(seg / 2, segments - 1)] : 0.0;
          const double step = spec.steer_rate * dt;
          current += std::clamp(target - current, -step, step);
          value = current;
          break;
        }
        case SteeringKind::kRamp: {
          const auto seg = static_cast<std::size_t>(tp / spec.hold);
          const double local = tp - static_cast<double>(seg) * spec.hold;
          const double from = seg % 2 == 0 ? 0.0 : levels[std::min(seg / 2, segments - 1)];
          const double to = seg % 2 == 0 ? levels[std::min(seg / 2, segments - 1)] : 0.0;
          const double s = std::min(1.0, local / spec.ramp_time);
          value = from + s * (to - from);
          break;
        }
      }
    }
    delta[static_cast<std::size_t>(k)] = value;
  }
  return delta;
}

VehicleParams perturb_tire_params(const VehicleParams& nominal, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ConfigError("perturbation fraction must be in [0, 1)");
  VehicleParams p = nominal;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  // Groups: truck front, truck rear, semitrailer (shared by its three axles).
  const std::array<std::vector<int>, 3> groups = {std::vector<int>{kAxle11}, std::vector<int>{kAxle12},
                                                  std::vector<int>{kAxle21, kAxle22, kAxle23}};
  for (const auto& g : groups) {
    std::array<double, 5> f{};
    for (double& x : f) x = 1.0 + (coin(rng) ? fraction : -fraction);
    for (int a : g) {
      TireParams& t = p.tire[static_cast<std::size_t>(a)];
      t.C *= f[0];
      t.D *= f[1];
      t.c1 *= f[2];
      t.c2 *= f[3];
      t.l_relax *= f[4];
    }
  }
  return p;
}

ManeuverDataset generate_maneuver(const ManeuverSpec& spec, const LoadingState& load,
                                  const TrailerBody& body, const VehicleParams& truth_params,
                                  const SensorNoise& noise, double dt) {
  spec.validate();
  load.validate(body);
  truth_params.validate();
  if (!(dt > 0.0)) throw ConfigError("generate_maneuver: dt must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(spec.duration / dt)) + 1;
  const double amplitude = spec.effective_amplitude(truth_params);
  const std::vector<double> delta = steering_profile(spec, amplitude, dt, n);
  const double l_cog = loaded_cog(load, body);
  const double fz2 = loaded_fz2(load, body, truth_params);

  ManeuverDataset d;
  d.dt = dt;
  d.time.resize(n);
  d.truth.resize(n, idx::kAugmented);
  d.inputs.resize(n, 3);
  d.measured.resize(n, 3);

  SsmState x = SsmState::Zero();
  try {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      ModelInput in;
      in.delta1 = delta[static_cast<std::size_t>(k)];
      in.vx2 = speed_at(spec, t);
      in.fz2 = fz2;
      in.l_cog = l_cog;
      d.time[k] = t;
      d.truth.row(k).head<idx::kSsm>() = x.transpose();
      d.truth(k, idx::kDelta1) = in.delta1;
      d.truth(k, idx::kLcog) = l_cog;
      d.inputs.row(k) << in.delta1, in.vx2, in.fz2;
      if (k + 1 < n) {
        x = discretize_step(x, in, truth_params, dt);
        if (!x.allFinite() || std::abs(x[idx::kTheta]) >= std::numbers::pi / 2) {
          throw GenerationError("state left the validity envelope at t = " + std::to_string(t));
        }
      }
    }
  } catch (const DomainError& e) {
    throw GenerationError("maneuver " + spec.name + " on " + load.id + ": " + e.what());
  } catch (const GenerationError& e) {
    throw GenerationError("maneuver " + spec.name + " on " + load.id + ": " + e.what());
  }

  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double vx = d.inputs(k, input_col::kVx2);
    const double yaw = d.truth(k, idx::kYawRate2);
    double vx_meas;
    double yaw_meas;
    if (noise.wheel_speed_yaw) {
      const double half = 0.5 * noise.track_width;
      const double vl = vx - yaw * half + noise.wheel_speed * gauss(rng);
      const double vr = vx + yaw * half + noise.wheel_speed * gauss(rng);
      yaw_meas = (vr - vl) / noise.track_width;
      vx_meas = 0.5 * (vr + vl);
    } else {
      yaw_meas = yaw + noise.yaw_rate2 * gauss(rng);
      vx_meas = vx + noise.vx2 * gauss(rng);
    }
    const double fz_meas = fz2 + noise.fz2 * gauss(rng);
    d.measured.row(k) << vx_meas, yaw_meas, fz_meas;
  }

  d.time = d.time.unaryExpr(&quantize_sig9);
  d.truth = d.truth.unaryExpr(&quantize_sig9);
  d.inputs = d.inputs.unaryExpr(&quantize_sig9);
  d.measured = d.measured.unaryExpr(&quantize_sig9);

  d.set_meta("name", spec.name);
  d.set_meta("profile", to_string(spec.kind));
  d.set_meta("loading", load.id);
  d.set_meta("payload", format_sig9(load.payload));
  d.set_meta("payload_position", format_sig9(load.payload_position));
  d.set_meta("l_cog", format_sig9(l_cog));
  d.set_meta("fz2", format_sig9(fz2));
  d.set_meta("amplitude", format_sig9(spec.amplitude));
  d.set_meta("effective_amplitude", format_sig9(amplitude));
  d.set_meta("speed_start", format_sig9(spec.speed_start));
  d.set_meta("speed_end", format_sig9(spec.speed_end));
  d.set_meta("duration", format_sig9(spec.duration));
  d.set_meta("seed", std::to_string(spec.seed));
  d.set_meta("noise_seed", std::to_string(spec.seed ^ 0x9E3779B97F4A7C15ULL));
  d.set_meta("sigma_yaw_rate2", format_sig9(noise.yaw_rate2));
  d.set_meta("sigma_vx2", format_sig9(noise.vx2));
  d.set_meta("sigma_fz2", format_sig9(noise.fz2));
  d.set_meta("wheel_speed_yaw", noise.wheel_speed_yaw ? "1" : "0");
  return d;
}

}  // namespace hekf
