#include "hekf/identification.hpp"

#include <cmath>
#include <fstream>

#include "hekf/errors.hpp"

namespace hekf {

namespace {

constexpr std::array<const char*, 3> kGroups = {"front", "rear", "trailer"};
constexpr std::array<const char*, 5> kFields = {"C", "D", "c1", "c2", "l_relax"};

double& field(TireParams& t, int f) {
  switch (f) {
    case 0: return t.C;
    case 1: return t.D;
    case 2: return t.c1;
    case 3: return t.c2;
    default: return t.l_relax;
  }
}

// Blowup guard for the open-loop simulation.
constexpr double kStateLimit = 1.0e7;

}  // namespace

const std::array<std::string, kNumIdentParams>& ident_parameter_names() {
  static const auto names = [] {
    std::array<std::string, kNumIdentParams> n;
    for (int g = 0; g < 3; ++g) {
      for (int f = 0; f < 5; ++f) n[static_cast<std::size_t>(5 * g + f)] = std::string(kGroups[g]) + "." + kFields[f];
    }
    return n;
  }();
  return names;
}

Eigen::VectorXd ident_parameter_vector(const VehicleParams& params) {
  Eigen::VectorXd v(kNumIdentParams);
  const std::array<int, 3> axle = {kAxle11, kAxle12, kAxle21};
  for (int g = 0; g < 3; ++g) {
    TireParams t = params.tire[static_cast<std::size_t>(axle[static_cast<std::size_t>(g)])];
    for (int f = 0; f < 5; ++f) v[5 * g + f] = field(t, f);
  }
  return v;
}

VehicleParams apply_parameters(const VehicleParams& base, const Eigen::VectorXd& theta) {
  if (theta.size() != kNumIdentParams) throw ConfigError("parameter vector must have 15 entries");
  VehicleParams p = base;
  for (int a = 0; a < kNumAxles; ++a) {
    const int g = a < kAxle21 ? a : 2;
    for (int f = 0; f < 5; ++f) field(p.tire[static_cast<std::size_t>(a)], f) = theta[5 * g + f];
  }
  return p;
}

PsoConfig pso_config_from(const KeyValueFile& kv) {
  std::set<std::string> known = {"pso.swarm_size", "pso.iterations", "pso.inertia", "pso.cognitive",
                                 "pso.social",     "pso.velocity_clamp", "pso.seed"};
  PsoConfig c;
  c.lower.resize(kNumIdentParams);
  c.upper.resize(kNumIdentParams);
  const auto& names = ident_parameter_names();
  for (int i = 0; i < kNumIdentParams; ++i) {
    const std::string& n = names[static_cast<std::size_t>(i)];
    c.lower[i] = kv.number("lower." + n);
    c.upper[i] = kv.number("upper." + n);
    known.insert("lower." + n);
    known.insert("upper." + n);
  }
  kv.reject_unknown(known);
  c.swarm_size = static_cast<int>(kv.integer_or("pso.swarm_size", c.swarm_size));
  c.iterations = static_cast<int>(kv.integer_or("pso.iterations", c.iterations));
  c.inertia = kv.number_or("pso.inertia", c.inertia);
  c.cognitive = kv.number_or("pso.cognitive", c.cognitive);
  c.social = kv.number_or("pso.social", c.social);
  c.velocity_clamp = kv.number_or("pso.velocity_clamp", c.velocity_clamp);
  c.seed = static_cast<std::uint64_t>(kv.integer_or("pso.seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

double channel_nmse(const Eigen::Ref<const Eigen::VectorXd>& sim, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  if (sim.size() != truth.size() || sim.size() == 0) throw ConfigError("channel_nmse: length mismatch");
  const double var = (truth.array() - truth.mean()).square().sum();
  const double err = (sim - truth).squaredNorm();
  if (!(var > 0.0)) throw ConfigError("channel_nmse: truth channel is constant");
  return err / var;
}

Eigen::MatrixXd simulate_open_loop(const VehicleParams& params, const ManeuverDataset& data) {
  if (data.truth.cols() != idx::kAugmented || data.inputs.cols() != 3 || data.rows() < 2) {
    throw ConfigError("identification dataset lacks truth or input channels");
  }
  const Eigen::Index n = data.rows();
  Eigen::MatrixXd sim(n, idx::kSsm);
  SsmState x = data.truth.row(0).head<idx::kSsm>().transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    sim.row(k) = x.transpose();
    if (k + 1 == n) break;
    ModelInput in;
    in.delta1 = data.inputs(k, input_col::kDelta1);
    in.vx2 = data.inputs(k, input_col::kVx2);
    in.fz2 = data.inputs(k, input_col::kFz2);
    in.l_cog = data.truth(k, idx::kLcog);
    x = discretize_step(x, in, params, data.dt);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kStateLimit || std::abs(x[idx::kTheta]) > 1.5) {
      throw NumericalError("open-loop simulation diverged");
    }
  }
  return sim;
}

double nmse_cost(const VehicleParams& params, const std::vector<ManeuverDataset>& data) {
  if (data.empty()) throw ConfigError("nmse_cost: no datasets");
  for (const auto& d : data) {
    if (d.truth.cols() != idx::kAugmented) throw ConfigError("nmse_cost: dataset missing truth channels");
  }
  double total = 0.0;
  for (const auto& d : data) {
    Eigen::MatrixXd sim;
    try {
      sim = simulate_open_loop(params, d);
    } catch (const NumericalError&) {
      return kDivergencePenalty;
    } catch (const DomainError&) {
      return kDivergencePenalty;
    }
    for (int c : kIdentChannels) total += channel_nmse(sim.col(c), d.truth.col(c));
  }
  const double cost = total / static_cast<double>(data.size() * kIdentChannels.size());
  return std::isfinite(cost) ? std::min(cost, kDivergencePenalty) : kDivergencePenalty;
}

IdentResult identify(const PsoConfig& config, const VehicleParams& base, const std::vector<ManeuverDataset>& data) {
  config.validate();
  if (config.lower.size() != kNumIdentParams) throw ConfigError("identify: bounds must cover 15 parameters");
  if (data.empty()) throw ConfigError("identify: no datasets");
  const auto cost = [&](const Eigen::VectorXd& theta) {
    VehicleParams p;
    try {
      p = apply_parameters(base, theta);
      p.validate();
    } catch (const ConfigError&) {
      return kDivergencePenalty;
    }
    return nmse_cost(p, data);
  };
  PsoConfig c = config;
  c.infeasible_cost = kDivergencePenalty;
  const PsoResult r = pso_minimize(cost, c);
  IdentResult out;
  out.best = r.best;
  out.params = apply_parameters(base, r.best);
  out.best_cost = r.best_cost;
  out.history = r.history;
  out.evaluations = r.evaluations;
  return out;
}

void save_cost_history(const std::vector<double>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "iteration,best_nmse\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ',' << format_double(history[i]) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace hekf
