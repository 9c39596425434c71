#pragma once

// Tire-parameter identification: open-loop simulation against truth
// trajectories, NMSE cost, particle swarm search.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hekf/dataset.hpp"
#include "hekf/pso.hpp"
#include "hekf/vehicle_model.hpp"

namespace hekf {

// 15 identifiable parameters: group.field for groups front, rear, trailer
// and fields C, D, c1, c2, l_relax. The trailer group drives all three
// semitrailer axles.
inline constexpr int kNumIdentParams = 15;
const std::array<std::string, kNumIdentParams>& ident_parameter_names();

Eigen::VectorXd ident_parameter_vector(const VehicleParams& params);
VehicleParams apply_parameters(const VehicleParams& base, const Eigen::VectorXd& theta);

// Bounds file: lower.<group>.<field> and upper.<group>.<field> for every
// parameter, plus optional pso.swarm_size, pso.iterations, pso.inertia,
// pso.cognitive, pso.social, pso.velocity_clamp, pso.seed.
PsoConfig pso_config_from(const KeyValueFile& kv);

// Channels compared: yaw rates, articulation angle, Fy21, Fy23.
inline constexpr std::array<int, 5> kIdentChannels = {idx::kYawRate1, idx::kYawRate2, idx::kTheta, idx::kFy21,
                                                      idx::kFy23};

inline constexpr double kDivergencePenalty = 1.0e6;

// sum (sim - truth)^2 / sum (truth - mean)^2
double channel_nmse(const Eigen::Ref<const Eigen::VectorXd>& sim, const Eigen::Ref<const Eigen::VectorXd>& truth);

// Open-loop simulation driven by the true inputs and the true l_cog,
// started at the first truth row. Returns N x 10, or throws
// NumericalError on divergence.
Eigen::MatrixXd simulate_open_loop(const VehicleParams& params, const ManeuverDataset& data);

// Mean channel NMSE over all maneuvers; kDivergencePenalty when any
// simulation diverges.
double nmse_cost(const VehicleParams& params, const std::vector<ManeuverDataset>& data);

struct IdentResult {
  Eigen::VectorXd best;
  VehicleParams params;
  double best_cost = 0.0;
  std::vector<double> history;
  long evaluations = 0;
};

IdentResult identify(const PsoConfig& config, const VehicleParams& base, const std::vector<ManeuverDataset>& data);

void save_cost_history(const std::vector<double>& history, const std::filesystem::path& path);

}  // namespace hekf
