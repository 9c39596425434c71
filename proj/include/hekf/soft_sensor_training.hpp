#pragma once

// End-to-end soft-sensor training from maneuver datasets: per-channel grid
// search and closed-loop training, then the kNN confidence model on the
// same standardized inputs.

#include <functional>
#include <string>
#include <vector>

#include "hekf/dataset.hpp"
#include "hekf/soft_sensor_io.hpp"

namespace hekf {

struct SoftSensorTrainingOptions {
  GridSearchOptions grid;
  double validation_fraction = 0.2;  // tail of every maneuver
  int k = ConfidenceModel::kDefaultK;
  double d_max_percentile = 0.95;
  int d_max_stride = 10;
};

// One sequence per maneuver for soft channel `channel` (0..4), inputs and
// targets standardized with the given transforms.
std::vector<NarxSequence> build_sequences(const std::vector<ManeuverDataset>& data, int channel,
                                          const Standardizer& inputs, const Standardizer& targets,
                                          double validation_fraction);

// Truth values of the five soft channels, N x 5.
Eigen::MatrixXd soft_channel_truth(const ManeuverDataset& data);

using TrainingLog = std::function<void(const std::string&)>;

SoftSensorArtifacts train_soft_sensor(const std::vector<ManeuverDataset>& data,
                                      const SoftSensorTrainingOptions& options, const TrainingLog& log = {});

}  // namespace hekf
