#pragma once

// Global-best particle swarm optimization with velocity clamping and
// reflection at the bounds.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace hekf {

struct PsoConfig {
  int swarm_size = 40;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  int iterations = 300;
  double velocity_clamp = 0.2;  // fraction of each bound range
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::uint64_t seed = 1;
  // Costs at or above this value count as infeasible.
  double infeasible_cost = 1e6;

  void validate() const;
};

struct PsoResult {
  Eigen::VectorXd best;
  double best_cost = 0.0;
  std::vector<double> history;  // global-best cost after each iteration
  long evaluations = 0;
};

// Cost evaluations of one iteration run concurrently; the bookkeeping is
// sequential in particle order, so results depend only on the seed.
PsoResult pso_minimize(const std::function<double(const Eigen::VectorXd&)>& cost, const PsoConfig& config);

}  // namespace hekf
