#include "hekf/soft_sensor_training.hpp"

#include <cmath>
#include <sstream>

#include "hekf/errors.hpp"
#include "hekf/vehicle_filter.hpp"

namespace hekf {

Eigen::MatrixXd soft_channel_truth(const ManeuverDataset& data) {
  const auto& states = soft_channel_states();
  Eigen::MatrixXd y(data.rows(), kNumSoft);
  for (int c = 0; c < kNumSoft; ++c) y.col(c) = data.truth.col(states[static_cast<std::size_t>(c)]);
  return y;
}

std::vector<NarxSequence> build_sequences(const std::vector<ManeuverDataset>& data, int channel,
                                          const Standardizer& inputs, const Standardizer& targets,
                                          double validation_fraction) {
  if (channel < 0 || channel >= kNumSoft) throw ConfigError("soft channel index out of range");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  const int state = soft_channel_states()[static_cast<std::size_t>(channel)];
  std::vector<NarxSequence> seqs;
  seqs.reserve(data.size());
  for (const auto& d : data) {
    NarxSequence s;
    s.inputs = inputs.apply_rows(d.ann_inputs());
    s.targets = d.truth.col(state).unaryExpr([&](double v) { return targets.apply(v, channel); });
    s.train_end = static_cast<Eigen::Index>(std::floor((1.0 - validation_fraction) * static_cast<double>(d.rows())));
    if (s.train_end <= kWarmupSamples || s.train_end >= d.rows()) {
      throw ConfigError("maneuver too short for the train/validation split");
    }
    seqs.push_back(std::move(s));
  }
  return seqs;
}

SoftSensorArtifacts train_soft_sensor(const std::vector<ManeuverDataset>& data,
                                      const SoftSensorTrainingOptions& options, const TrainingLog& log) {
  if (data.size() < 2) throw ConfigError("soft-sensor training needs at least two maneuvers");
  Eigen::Index total = 0;
  for (const auto& d : data) total += d.rows();
  Eigen::MatrixXd all_inputs(total, 3);
  Eigen::MatrixXd all_targets(total, kNumSoft);
  std::vector<Eigen::MatrixXd> groups;
  Eigen::Index row = 0;
  for (const auto& d : data) {
    const Eigen::MatrixXd u = d.ann_inputs();
    all_inputs.middleRows(row, d.rows()) = u;
    all_targets.middleRows(row, d.rows()) = soft_channel_truth(d);
    groups.push_back(u);
    row += d.rows();
  }
  auto input_std = std::make_shared<const Standardizer>(Standardizer::fit(all_inputs));
  const Standardizer target_std = Standardizer::fit(all_targets);

  std::array<NarxNetwork, kNumSoft> nets;
  std::array<ChannelSummary, kNumSoft> summary{};
  for (int c = 0; c < kNumSoft; ++c) {
    const auto seqs = build_sequences(data, c, *input_std, target_std, options.validation_fraction);
    GridSearchOptions grid = options.grid;
    grid.seed = options.grid.seed * 31 + static_cast<std::uint64_t>(c);
    GridSearchResult r = grid_search(seqs, grid);
    nets[static_cast<std::size_t>(c)] = r.network;
    summary[static_cast<std::size_t>(c)] = {r.lambda, r.validation_nmse};
    if (log) {
      std::ostringstream msg;
      msg << "soft channel " << soft_channel_names()[static_cast<std::size_t>(c)] << ": layers "
          << r.config.hidden_layers << ", neurons " << r.config.total_neurons << ", lambda " << r.lambda
          << ", validation NMSE " << r.validation_nmse;
      log(msg.str());
    }
  }

  const double d_max =
      calibrate_d_max(groups, *input_std, options.k, options.d_max_percentile, options.d_max_stride);
  if (log) log("confidence: K = " + std::to_string(options.k) + ", d_max = " + format_double(d_max));

  SoftSensorArtifacts a;
  a.bank = SoftSensorBank(input_std, target_std, nets);
  a.confidence = ConfidenceModel::build(all_inputs, input_std, options.k, d_max);
  a.summary = summary;
  return a;
}

}  // namespace hekf
