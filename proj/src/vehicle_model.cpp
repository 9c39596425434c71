#include "hekf/vehicle_model.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "hekf/errors.hpp"

namespace hekf {
namespace {

// Baumgarte rate [1/s] pulling the king pin velocity constraint back to zero
// after filter corrections or speed changes.
constexpr double kConstraintRate = 20.0;

constexpr std::array<const char*, kNumAxles> kAxleKeys = {"tire11", "tire12", "tire21", "tire22",
                                                          "tire23"};

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("vehicle parameter '") + name + "' must be positive and finite");
  }
}

}  // namespace

void TireParams::validate() const {
  require_positive(C, "C");
  require_positive(D, "D");
  require_positive(c1, "c1");
  require_positive(c2, "c2");
  require_positive(l_relax, "l_relax");
}

void VehicleParams::validate() const {
  require_positive(m1, "m1");
  require_positive(J1, "J1");
  require_positive(J2, "J2");
  require_positive(l11, "l11");
  require_positive(l12, "l12");
  require_positive(l_k, "l_k");
  for (double l : l2) require_positive(l, "l2j");
  require_positive(l_agg, "l_agg");
  require_positive(g, "g");
  if (!(mu_max > 0.0 && mu_max <= 2.0)) throw ConfigError("mu_max must lie in (0, 2]");
  for (double f : fz1) require_positive(f, "fz1j");
  for (const auto& t : tire) t.validate();
}

const std::array<std::string, 12>& state_names() {
  static const std::array<std::string, 12> names = {
      "vy1", "yaw_rate1", "vy2", "yaw_rate2", "theta", "fy11",
      "fy12", "fy21", "fy22", "fy23", "delta1", "l_cog"};
  return names;
}

std::array<double, 3> vertical_axle_forces(double fz2) {
  if (!(fz2 >= 0.0)) throw DomainError("vertical_axle_forces: F_z2 must be non-negative");
  const double each = fz2 / 3.0;
  return {each, each, each};
}

double semitrailer_mass(double fz2, double l_cog, double l_agg, double g) {
  if (!(l_cog > 0.0)) throw DomainError("semitrailer_mass: l_cog must be positive");
  return l_agg * fz2 / (l_cog * g);
}

double mftm_steady_force(double alpha, double fz, const TireParams& tire, double mu_max) {
  if (!(std::abs(alpha) < std::numbers::pi / 2.0)) {
    throw DomainError("mftm_steady_force: |alpha| must be below pi/2");
  }
  if (!(fz >= 0.0)) throw DomainError("mftm_steady_force: F_z must be non-negative");
  const double B = tire.c1 * std::sin(2.0 * std::atan(fz / tire.c2)) / (tire.C * tire.D);
  return mu_max * fz * std::sin(tire.C * std::atan(B * std::tan(alpha)));
}

double tire_force_derivative(double fy, double alpha, double fz, double vx,
                             const TireParams& tire, double mu_max) {
  if (!(vx > 0.0)) throw DomainError("tire_force_derivative: v_x must be positive");
  return (vx / tire.l_relax) * (mftm_steady_force(alpha, fz, tire, mu_max) - fy);
}

std::array<double, kNumAxles> slip_angles(const SsmState& s, const ModelInput& in,
                                          const VehicleParams& p) {
  if (!(in.vx2 > 0.0)) throw DomainError("slip_angles: v_x must be positive");
  // Small articulation: both bodies share the longitudinal speed.
  const double vx = in.vx2;
  const double vy1 = s[idx::kVy1];
  const double r1 = s[idx::kYawRate1];
  const double vy2 = s[idx::kVy2];
  const double r2 = s[idx::kYawRate2];
  std::array<double, kNumAxles> alpha{};
  alpha[kAxle11] = in.delta1 - std::atan((vy1 + p.l11 * r1) / vx);
  alpha[kAxle12] = -std::atan((vy1 - p.l12 * r1) / vx);
  for (int j = 0; j < 3; ++j) {
    alpha[kAxle21 + j] = -std::atan((vy2 - (p.l2[j] - in.l_cog) * r2) / vx);
  }
  return alpha;
}

std::array<double, kNumAxles> axle_vertical_forces(const ModelInput& in, const VehicleParams& p) {
  const auto fz2j = vertical_axle_forces(in.fz2);
  return {p.fz1[0], p.fz1[1], fz2j[0], fz2j[1], fz2j[2]};
}

namespace {

struct BodyLoads {
  double f1, m1, f2, m2_moment, cos_delta;
};

BodyLoads body_loads(const SsmState& s, const ModelInput& in, const VehicleParams& p) {
  BodyLoads b{};
  b.cos_delta = std::cos(in.delta1);
  const double fy11 = s[idx::kFy11] * b.cos_delta;
  const double fy12 = s[idx::kFy12];
  b.f1 = fy11 + fy12;
  b.m1 = p.l11 * fy11 - p.l12 * fy12;
  b.f2 = 0.0;
  b.m2_moment = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double f = s[idx::kFy21 + j];
    b.f2 += f;
    b.m2_moment += (p.l2[j] - in.l_cog) * f;
  }
  return b;
}

double solve_coupling(const SsmState& s, const ModelInput& in, const VehicleParams& p,
                      const BodyLoads& b, double m2) {
  const double vx = in.vx2;
  const double violation = (s[idx::kVy1] - p.l_k * s[idx::kYawRate1] - vx * s[idx::kTheta]) -
                           (s[idx::kVy2] + in.l_cog * s[idx::kYawRate2]);
  const double compliance =
      1.0 / p.m1 + p.l_k * p.l_k / p.J1 + 1.0 / m2 + in.l_cog * in.l_cog / p.J2;
  const double free_mismatch =
      b.f1 / p.m1 - p.l_k * b.m1 / p.J1 - b.f2 / m2 + in.l_cog * b.m2_moment / p.J2;
  return (free_mismatch + kConstraintRate * violation) / compliance;
}

double checked_mass(const ModelInput& in, const VehicleParams& p) {
  const double m2 = semitrailer_mass(in.fz2, in.l_cog, p.l_agg, p.g);
  if (!(m2 > 0.0) || !std::isfinite(m2)) {
    throw DomainError("continuous_dynamics: semitrailer mass must be positive");
  }
  return m2;
}

}  // namespace

double coupling_force(const SsmState& s, const ModelInput& in, const VehicleParams& p) {
  const double m2 = checked_mass(in, p);
  return solve_coupling(s, in, p, body_loads(s, in, p), m2);
}

SsmState continuous_dynamics(const SsmState& s, const ModelInput& in, const VehicleParams& p) {
  if (!(std::abs(s[idx::kTheta]) < std::numbers::pi / 2.0)) {
    throw DomainError("continuous_dynamics: articulation angle outside validity envelope");
  }
  const double m2 = checked_mass(in, p);
  const double vx = in.vx2;
  const auto alpha = slip_angles(s, in, p);
  const auto fz = axle_vertical_forces(in, p);
  const BodyLoads b = body_loads(s, in, p);
  const double fc = solve_coupling(s, in, p, b, m2);

  SsmState d;
  d[idx::kVy1] = (b.f1 - fc) / p.m1 - vx * s[idx::kYawRate1];
  d[idx::kYawRate1] = (b.m1 + p.l_k * fc) / p.J1;
  d[idx::kVy2] = (b.f2 + fc) / m2 - vx * s[idx::kYawRate2];
  d[idx::kYawRate2] = (in.l_cog * fc - b.m2_moment) / p.J2;
  d[idx::kTheta] = s[idx::kYawRate2] - s[idx::kYawRate1];
  for (int a = 0; a < kNumAxles; ++a) {
    d[idx::kFy11 + a] = tire_force_derivative(s[idx::kFy11 + a], alpha[a], fz[a], vx, p.tire[a],
                                              p.mu_max);
  }
  return d;
}

SsmState discretize_step(const SsmState& state, const ModelInput& input,
                         const VehicleParams& params, double dt) {
  if (!(dt > 0.0)) throw DomainError("discretize_step: dt must be positive");
  return rk4_step(state, dt,
                  [&](const SsmState& x) { return continuous_dynamics(x, input, params); });
}

AugmentedState augmented_step(const AugmentedState& x, double vx2, double fz2,
                              const VehicleParams& params, double dt) {
  const ModelInput in{x[idx::kDelta1], vx2, fz2, x[idx::kLcog]};
  AugmentedState next = x;
  next.head<idx::kSsm>() = discretize_step(x.head<idx::kSsm>(), in, params, dt);
  return next;
}

// Parameter files -------------------------------------------------------------

namespace {

void read_tire(const KeyValueFile& kv, const std::string& prefix, TireParams& t) {
  t.C = kv.number_or(prefix + ".C", t.C);
  t.D = kv.number_or(prefix + ".D", t.D);
  t.c1 = kv.number_or(prefix + ".c1", t.c1);
  t.c2 = kv.number_or(prefix + ".c2", t.c2);
  t.l_relax = kv.number_or(prefix + ".l_relax", t.l_relax);
}

}  // namespace

VehicleParams vehicle_params_from(const KeyValueFile& kv) {
  std::set<std::string> known = {"m1", "J1", "J2", "l11", "l12", "l_k", "l21", "l22",
                                 "l23", "l_agg", "mu_max", "g", "fz11", "fz12"};
  for (const char* group : {"tire_front", "tire_rear", "tire_trailer"}) {
    for (const char* f : {".C", ".D", ".c1", ".c2", ".l_relax"}) known.insert(std::string(group) + f);
  }
  for (const char* axle : kAxleKeys) {
    for (const char* f : {".C", ".D", ".c1", ".c2", ".l_relax"}) known.insert(std::string(axle) + f);
  }
  kv.reject_unknown(known);

  VehicleParams p;
  p.m1 = kv.number_or("m1", p.m1);
  p.J1 = kv.number_or("J1", p.J1);
  p.J2 = kv.number_or("J2", p.J2);
  p.l11 = kv.number_or("l11", p.l11);
  p.l12 = kv.number_or("l12", p.l12);
  p.l_k = kv.number_or("l_k", p.l_k);
  p.l2[0] = kv.number_or("l21", p.l2[0]);
  p.l2[1] = kv.number_or("l22", p.l2[1]);
  p.l2[2] = kv.number_or("l23", p.l2[2]);
  p.l_agg = kv.number_or("l_agg", p.l_agg);
  p.mu_max = kv.number_or("mu_max", p.mu_max);
  p.g = kv.number_or("g", p.g);
  p.fz1[0] = kv.number_or("fz11", p.fz1[0]);
  p.fz1[1] = kv.number_or("fz12", p.fz1[1]);
  // Group keys first, per-axle keys override.
  read_tire(kv, "tire_front", p.tire[kAxle11]);
  read_tire(kv, "tire_rear", p.tire[kAxle12]);
  for (int a = kAxle21; a <= kAxle23; ++a) read_tire(kv, "tire_trailer", p.tire[a]);
  for (int a = 0; a < kNumAxles; ++a) read_tire(kv, kAxleKeys[a], p.tire[a]);
  p.validate();
  return p;
}

KeyValueFile to_key_values(const VehicleParams& p) {
  KeyValueFile kv;
  kv.set("m1", p.m1);
  kv.set("J1", p.J1);
  kv.set("J2", p.J2);
  kv.set("l11", p.l11);
  kv.set("l12", p.l12);
  kv.set("l_k", p.l_k);
  kv.set("l21", p.l2[0]);
  kv.set("l22", p.l2[1]);
  kv.set("l23", p.l2[2]);
  kv.set("l_agg", p.l_agg);
  kv.set("mu_max", p.mu_max);
  kv.set("g", p.g);
  kv.set("fz11", p.fz1[0]);
  kv.set("fz12", p.fz1[1]);
  for (int a = 0; a < kNumAxles; ++a) {
    const std::string k = kAxleKeys[a];
    kv.set(k + ".C", p.tire[a].C);
    kv.set(k + ".D", p.tire[a].D);
    kv.set(k + ".c1", p.tire[a].c1);
    kv.set(k + ".c2", p.tire[a].c2);
    kv.set(k + ".l_relax", p.tire[a].l_relax);
  }
  return kv;
}

VehicleParams load_vehicle_params(const std::filesystem::path& path) {
  return vehicle_params_from(KeyValueFile::load(path));
}

void save_vehicle_params(const VehicleParams& params, const std::filesystem::path& path) {
  to_key_values(params).save(path);
}

}  // namespace hekf
