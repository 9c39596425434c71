#include "hekf/pso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hekf/errors.hpp"
#include "hekf/parallel.hpp"

namespace hekf {

void PsoConfig::validate() const {
  if (swarm_size < 2) throw ConfigError("PSO: swarm size must be at least 2");
  if (iterations < 1) throw ConfigError("PSO: need at least one iteration");
  if (lower.size() == 0 || lower.size() != upper.size()) throw ConfigError("PSO: bounds missing or mismatched");
  if (!lower.allFinite() || !upper.allFinite()) throw ConfigError("PSO: bounds must be finite");
  if (!(lower.array() < upper.array()).all()) throw ConfigError("PSO: every lower bound must be below its upper bound");
  if (!(velocity_clamp > 0.0)) throw ConfigError("PSO: velocity clamp must be positive");
}

namespace {

// Reflects x into [lo, hi] and flips the velocity on a bounce.
void reflect(double& x, double& v, double lo, double hi) {
  for (int i = 0; i < 4 && (x < lo || x > hi); ++i) {
    if (x < lo) x = lo + (lo - x);
    if (x > hi) x = hi - (x - hi);
    v = -v;
  }
  x = std::clamp(x, lo, hi);
}

double safe(double c) { return std::isfinite(c) ? c : std::numeric_limits<double>::infinity(); }

}  // namespace

PsoResult pso_minimize(const std::function<double(const Eigen::VectorXd&)>& cost, const PsoConfig& config) {
  config.validate();
  const Eigen::Index dim = config.lower.size();
  const auto n = static_cast<std::size_t>(config.swarm_size);
  const Eigen::VectorXd range = config.upper - config.lower;
  const Eigen::VectorXd vmax = config.velocity_clamp * range;

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Eigen::VectorXd> x(n, Eigen::VectorXd(dim));
  std::vector<Eigen::VectorXd> v(n, Eigen::VectorXd(dim));
  for (std::size_t p = 0; p < n; ++p) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      x[p][d] = config.lower[d] + unit(rng) * range[d];
      v[p][d] = (2.0 * unit(rng) - 1.0) * vmax[d];
    }
  }
  std::vector<double> costs(n);
  const auto evaluate_all = [&] {
    parallel_for(n, [&](std::size_t p) { costs[p] = safe(cost(x[p])); });
  };

  PsoResult r;
  evaluate_all();
  r.evaluations += static_cast<long>(n);
  std::vector<Eigen::VectorXd> pbest = x;
  std::vector<double> pcost = costs;
  std::size_t g = static_cast<std::size_t>(std::min_element(pcost.begin(), pcost.end()) - pcost.begin());
  r.best = pbest[g];
  r.best_cost = pcost[g];

  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t p = 0; p < n; ++p) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double vel = config.inertia * v[p][d] + config.cognitive * r1 * (pbest[p][d] - x[p][d]) +
                     config.social * r2 * (r.best[d] - x[p][d]);
        vel = std::clamp(vel, -vmax[d], vmax[d]);
        double pos = x[p][d] + vel;
        reflect(pos, vel, config.lower[d], config.upper[d]);
        x[p][d] = pos;
        v[p][d] = vel;
      }
    }
    evaluate_all();
    r.evaluations += static_cast<long>(n);
    for (std::size_t p = 0; p < n; ++p) {
      if (costs[p] < pcost[p]) {
        pcost[p] = costs[p];
        pbest[p] = x[p];
      }
      if (costs[p] < r.best_cost) {
        r.best_cost = costs[p];
        r.best = x[p];
      }
    }
    r.history.push_back(r.best_cost);
  }
  if (!(r.best_cost < config.infeasible_cost)) {
    throw IdentificationError("PSO: no feasible particle in any iteration");
  }
  return r;
}

}  // namespace hekf
