#pragma once

// Experimental protocol: maneuver sets, the train/tune/evaluate pipeline
// and the RMSE report comparing EKF, ANN-only and HEKF.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hekf/errors.hpp"
#include "hekf/hybrid_filter.hpp"
#include "hekf/identification.hpp"
#include "hekf/maneuver.hpp"
#include "hekf/metrics.hpp"
#include "hekf/soft_sensor_training.hpp"
#include "hekf/tuning.hpp"

namespace hekf {

struct ProtocolConfig {
  std::uint64_t seed = 42;
  double dt = 0.01;
  double truth_perturbation = 0.1;  // relative tire-parameter mismatch of the truth
  std::string params_file;          // nominal parameters; built-in defaults when empty
  SensorNoise noise;
  TrailerBody body;
  std::vector<LoadingState> loading_states = default_loading_states();
  std::vector<std::string> training_loads = {"no_load", "partial_load_1", "full_load"};
  std::string ood_load = "partial_load_2";
  double training_duration = 40.0;
  double tuning_duration = 30.0;
  double evaluation_duration = 60.0;
  SoftSensorTrainingOptions training;
  EkfTuningOptions ekf_tuning;
  HekfTuningOptions hekf_tuning;
  double hekf_c = 1.0e4;
  bool hekf_wholesale = false;
  Eigen::Index report_warmup = 200;
  bool identify = false;
  std::string bounds_file;

  static ProtocolConfig from(const KeyValueFile& kv);
  static ProtocolConfig load(const std::filesystem::path& path);
  // Every resolved setting, suitable for echoing and for from().
  KeyValueFile to_key_values() const;
  VehicleParams nominal_params() const;
  void validate() const;
};

// Truth parameters: the nominal tire parameters perturbed by the configured
// fraction with signs drawn from the seed.
VehicleParams truth_params(const ProtocolConfig& config);

std::vector<ManeuverSpec> training_maneuvers(const ProtocolConfig& config);
std::vector<ManeuverSpec> tuning_maneuvers(const ProtocolConfig& config);
// Three in-distribution maneuvers followed by the out-of-distribution one.
std::vector<ManeuverSpec> evaluation_maneuvers(const ProtocolConfig& config);

std::vector<ManeuverDataset> generate_set(const std::vector<ManeuverSpec>& specs, const ProtocolConfig& config,
                                          const VehicleParams& truth);

inline constexpr int kNumMethods = 3;
const std::array<std::string, kNumMethods>& method_names();  // ekf, ann, hekf

struct ReportRow {
  std::string maneuver;
  std::string loading;
  bool in_distribution = true;
  // rmse[method][quantity] in report units.
  std::array<std::array<double, kNumReportQuantities>, kNumMethods> rmse{};
  double median_tau = 0.0;
};

struct RmseReport {
  std::vector<ReportRow> rows;
  ReportRow mean;
  // Mean RMSE divided by the largest mean over the three methods.
  std::array<std::array<double, kNumReportQuantities>, kNumMethods> relative{};

  void finalize();
  std::string to_csv() const;
  std::string to_table() const;
  std::string tau_csv() const;
};

// Filter inputs for the evaluation stage.
struct EvaluationSetup {
  VehicleParams params;
  NoiseConfig ekf_noise;
  HekfConfig hekf;
  const SoftSensorArtifacts* soft = nullptr;
  FilterInit init;
  Eigen::Index warmup = 200;
};

struct ManeuverRuns {
  EstimateRun ekf;
  EstimateRun ann;
  EstimateRun hekf;
};

// Runs the three methods on one maneuver.
ManeuverRuns run_methods(const ManeuverDataset& data, const EvaluationSetup& setup);
ReportRow report_row(const ManeuverDataset& data, const ManeuverRuns& runs, Eigen::Index warmup);

// A failed sub-run; carries the rows completed so far.
class ProtocolFailure : public ProtocolError {
 public:
  ProtocolFailure(const std::string& what, RmseReport partial)
      : ProtocolError(what), partial_(std::move(partial)) {}
  const RmseReport& partial() const { return partial_; }

 private:
  RmseReport partial_;
};

// Evaluates all maneuvers and writes report.csv, report.txt, tau.csv and
// runs/<maneuver>_<method>.csv into out_dir.
RmseReport evaluate_all(const std::vector<ManeuverDataset>& data, const EvaluationSetup& setup,
                        const std::filesystem::path& out_dir);

// Initial R0 for the hybrid filter: yaw-rate variance from the lead-in,
// soft entries from the soft-sensor residual variances on data.
NoiseConfig initial_hybrid_noise(const NoiseConfig& ekf_noise, const std::vector<ManeuverDataset>& data,
                                 const SoftSensorArtifacts& soft, Eigen::Index warmup);

struct ProtocolResult {
  RmseReport report;
  VehicleParams truth;
  VehicleParams filter_params;
  EkfTuningResult ekf;
  HekfTuningResult hekf;
};

using ProtocolLog = std::function<void(const std::string&)>;

// Full pipeline: generate, (identify), train, tune, evaluate. Intermediate
// artifacts land in out_dir next to the report.
ProtocolResult run_protocol(const ProtocolConfig& config, const std::filesystem::path& out_dir,
                            const ProtocolLog& log = {});

}  // namespace hekf
