#pragma once

// NARX soft sensor: one small tanh MLP per estimated channel, fed with the
// current and delayed exogenous inputs plus its own delayed outputs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hekf {

struct NarxConfig {
  int hidden_layers = 1;
  int total_neurons = 10;
  int input_delays = 2;
  int feedback_delays = 2;
  int max_closed_loop_epochs = 1000;
  int num_inputs = 3;

  // total_neurons split evenly, remainder to the first layers.
  std::vector<int> layer_sizes() const;
  int feature_size() const { return num_inputs * (1 + input_delays) + feedback_delays; }
  void validate() const;
};

// Per-channel affine standardization, rows are samples.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale);

  // Throws ConfigError when a channel is constant.
  static Standardizer fit(const Eigen::MatrixXd& samples);

  Eigen::Index channels() const { return mean_.size(); }
  double apply(double value, Eigen::Index channel) const {
    return (value - mean_[channel]) / scale_[channel];
  }
  double invert(double value, Eigen::Index channel) const {
    return value * scale_[channel] + mean_[channel];
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& samples) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

class NarxNetwork {
 public:
  NarxNetwork() = default;
  explicit NarxNetwork(const NarxConfig& config);

  // Uniform in +-1/sqrt(fan_in).
  void initialize(std::mt19937_64& rng);

  double forward(std::span<const double> features) const;

  // Output plus gradients with respect to the parameters and the features.
  double forward_with_gradient(std::span<const double> features, Eigen::Ref<Eigen::VectorXd> d_params,
                               Eigen::Ref<Eigen::VectorXd> d_features) const;

  const NarxConfig& config() const { return config_; }
  // Layer widths from the feature layer to the scalar output.
  const std::vector<int>& shape() const { return shape_; }
  Eigen::Index num_params() const { return params_.size(); }
  const Eigen::VectorXd& params() const { return params_; }
  void set_params(const Eigen::VectorXd& p);

 private:
  void check_features(std::span<const double> features) const;

  NarxConfig config_;
  std::vector<int> shape_;
  Eigen::VectorXd params_;
  // Offsets of each layer's weight block and bias in params_.
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  // Scratch for activations; forward is const but not reentrant per object.
  mutable std::vector<Eigen::VectorXd> act_;
  mutable std::vector<Eigen::VectorXd> delta_;
};

// One maneuver as training material: standardized inputs and one target
// channel. Samples [0, train_end) train, [train_end, T) validate.
struct NarxSequence {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  Eigen::Index train_end = 0;
};

// Number of leading samples whose delay line is still filling.
inline constexpr Eigen::Index kWarmupSamples = 2;

// Builds the feature vector for step t from the input rows and a history
// of past outputs (teacher values or own predictions).
void narx_features(const NarxConfig& config, const Eigen::MatrixXd& inputs, Eigen::Index t,
                   std::span<const double> output_history, std::span<double> features);

// Closed-loop simulation over a whole sequence (standardized units).
Eigen::VectorXd simulate_closed_loop(const NarxNetwork& net, const Eigen::MatrixXd& inputs);

struct TrainingOptions {
  double lambda = 1e-4;   // L2 weight
  int patience = 25;      // closed-loop early stopping
  int max_epochs = 1000;  // closed-loop epochs in this call, capped by the config
  double mu_initial = 1e-3;
  double mu_max = 1e10;
};

struct TrainingReport {
  double initial_loss = 0.0;
  double open_loop_loss = 0.0;
  double open_loop_validation_nmse = 0.0;
  double best_validation_nmse = 0.0;
  int epochs = 0;
  std::vector<double> validation_history;
};

// Teacher-forced loss and validation NMSE, shared by the trainers.
double open_loop_loss(const NarxNetwork& net, const std::vector<NarxSequence>& data, double lambda);
double closed_loop_loss(const NarxNetwork& net, const std::vector<NarxSequence>& data, double lambda);
double closed_loop_validation_nmse(const NarxNetwork& net, const std::vector<NarxSequence>& data);

// One Levenberg-Marquardt epoch with teacher forcing.
NarxNetwork train_open_loop(const std::vector<NarxSequence>& data, const NarxConfig& config,
                            std::uint64_t seed, const TrainingOptions& options = {},
                            TrainingReport* report = nullptr);

// Closed-loop Levenberg-Marquardt with real-time recurrent sensitivities;
// returns the best-validation weights.
NarxNetwork train_closed_loop(const NarxNetwork& network, const std::vector<NarxSequence>& data,
                              const TrainingOptions& options = {},
                              TrainingReport* report = nullptr);

double nmse(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target);

struct GridSearchOptions {
  std::vector<int> layers = {1, 2, 3};
  std::vector<int> neurons = {5, 10, 15, 20, 25, 30};
  int screening_epochs = 20;
  double screening_lambda = 1e-4;
  // Closed-loop epochs after screening, further capped so that screening
  // plus continuation stays within the configured epoch cap.
  int continuation_epochs = 1000;
  std::vector<double> lambdas = {1e-5, 1e-4, 1e-3};
  int patience = 25;
  std::uint64_t seed = 1;
};

struct CandidateScore {
  NarxConfig config;
  Eigen::Index num_params = 0;
  double validation_nmse = 0.0;
  bool failed = false;
};

struct GridSearchResult {
  NarxConfig config;
  double lambda = 0.0;
  NarxNetwork network;
  double validation_nmse = 0.0;
  std::vector<CandidateScore> candidates;
};

// Every candidate gets the same screening budget; the winner (ties go to
// fewer parameters) continues from its screened weights for each lambda
// and the best validation result is kept.
GridSearchResult grid_search(const std::vector<NarxSequence>& data, const GridSearchOptions& options);

// Five-channel soft sensor with shared input standardization.
class SoftSensorBank {
 public:
  static constexpr int kChannels = 5;

  SoftSensorBank() = default;
  SoftSensorBank(std::shared_ptr<const Standardizer> input_standardizer, Standardizer target_standardizer,
                 std::array<NarxNetwork, kChannels> networks);

  // Clears the delay lines (standardized zeros).
  void reset();
  // Inputs [vx2, fz2, yaw_rate2] in SI units, outputs in SI units.
  Eigen::Matrix<double, kChannels, 1> predict_step(const Eigen::Vector3d& u);
  // True while the next prediction is still part of the delay-line warm-up.
  bool warming_up() const { return steps_ < kWarmupSamples; }
  Eigen::Index steps() const { return steps_; }

  const std::shared_ptr<const Standardizer>& input_standardizer() const { return input_std_; }
  const Standardizer& target_standardizer() const { return target_std_; }
  const std::array<NarxNetwork, kChannels>& networks() const { return nets_; }

 private:
  std::shared_ptr<const Standardizer> input_std_;
  Standardizer target_std_;
  std::array<NarxNetwork, kChannels> nets_;
  Eigen::MatrixXd input_history_;  // rows: newest first
  std::array<std::vector<double>, kChannels> feedback_;  // newest first
  Eigen::Index steps_ = 0;
  std::vector<double> features_;
};

// Whole-sequence prediction; identical to repeated predict_step.
Eigen::MatrixXd predict_sequence(SoftSensorBank& bank, const Eigen::MatrixXd& inputs_si);

}  // namespace hekf
