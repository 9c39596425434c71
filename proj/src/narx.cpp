#include "hekf/narx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "hekf/errors.hpp"
#include "hekf/parallel.hpp"

namespace hekf {

// NarxConfig ------------------------------------------------------------------

std::vector<int> NarxConfig::layer_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(hidden_layers), total_neurons / hidden_layers);
  for (int i = 0; i < total_neurons % hidden_layers; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

void NarxConfig::validate() const {
  if (hidden_layers < 1 || hidden_layers > 3) throw ConfigError("NARX: hidden_layers must be 1..3");
  if (total_neurons < hidden_layers || total_neurons > 30) {
    throw ConfigError("NARX: total_neurons must be in [hidden_layers, 30]");
  }
  if (input_delays < 0 || feedback_delays < 1) throw ConfigError("NARX: invalid delays");
  if (max_closed_loop_epochs < 0 || max_closed_loop_epochs > 1000) {
    throw ConfigError("NARX: max_closed_loop_epochs must be in [0, 1000]");
  }
  if (num_inputs < 1) throw ConfigError("NARX: num_inputs must be positive");
}

// Standardizer ------------------------------------------------------------------

Standardizer::Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw ConfigError("Standardizer: size mismatch");
  if (!((scale_.array() > 0.0).all())) throw ConfigError("Standardizer: scales must be positive");
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ConfigError("Standardizer: need at least two samples");
  const Eigen::VectorXd mean = samples.colwise().mean().transpose();
  Eigen::VectorXd scale(samples.cols());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double var = (samples.col(c).array() - mean[c]).square().sum() /
                       static_cast<double>(samples.rows() - 1);
    scale[c] = std::sqrt(var);
    if (!(scale[c] > 1e-12 * std::max(1.0, std::abs(mean[c])))) {
      throw ConfigError("Standardizer: channel " + std::to_string(c) + " is constant");
    }
  }
  return Standardizer(mean, scale);
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  return ((v - mean_).array() / scale_.array()).matrix();
}

Eigen::VectorXd Standardizer::invert(const Eigen::VectorXd& v) const {
  return (v.array() * scale_.array()).matrix() + mean_;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& samples) const {
  if (samples.cols() != mean_.size()) throw ConfigError("Standardizer: column count mismatch");
  Eigen::MatrixXd out = samples.rowwise() - mean_.transpose();
  out.array().rowwise() /= scale_.transpose().array();
  return out;
}

// NarxNetwork ---------------------------------------------------------------------

NarxNetwork::NarxNetwork(const NarxConfig& config) : config_(config) {
  config_.validate();
  shape_.push_back(config_.feature_size());
  for (int n : config_.layer_sizes()) shape_.push_back(n);
  shape_.push_back(1);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < shape_.size(); ++l) {
    weight_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(shape_[l + 1]) * shape_[l];
    bias_offset_.push_back(offset);
    offset += shape_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
  act_.resize(shape_.size());
  delta_.resize(shape_.size());
  for (std::size_t l = 0; l < shape_.size(); ++l) {
    act_[l].resize(shape_[l]);
    delta_[l].resize(shape_[l]);
  }
}

void NarxNetwork::initialize(std::mt19937_64& rng) {
  for (std::size_t l = 0; l + 1 < shape_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Eigen::Index begin = weight_offset_[l];
    const Eigen::Index end = bias_offset_[l] + shape_[l + 1];
    for (Eigen::Index i = begin; i < end; ++i) params_[i] = dist(rng);
  }
}

void NarxNetwork::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw ConfigError("NarxNetwork: parameter count mismatch");
  params_ = p;
}

void NarxNetwork::check_features(std::span<const double> features) const {
  if (shape_.empty()) throw ConfigError("NarxNetwork: network has no layers");
  if (static_cast<int>(features.size()) != shape_.front()) {
    throw ConfigError("NarxNetwork: expected " + std::to_string(shape_.front()) +
                      " features, got " + std::to_string(features.size()));
  }
}

double NarxNetwork::forward(std::span<const double> features) const {
  check_features(features);
  const std::size_t layers = shape_.size() - 1;
  act_[0] = Eigen::Map<const Eigen::VectorXd>(features.data(), shape_[0]);
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Map<const Eigen::MatrixXd> W(params_.data() + weight_offset_[l], shape_[l + 1],
                                              shape_[l]);
    const Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset_[l], shape_[l + 1]);
    act_[l + 1].noalias() = W * act_[l];
    act_[l + 1] += b;
    if (l + 1 < layers) act_[l + 1] = act_[l + 1].array().tanh();
  }
  return act_.back()[0];
}

double NarxNetwork::forward_with_gradient(std::span<const double> features,
                                          Eigen::Ref<Eigen::VectorXd> d_params,
                                          Eigen::Ref<Eigen::VectorXd> d_features) const {
  const double y = forward(features);
  const std::size_t layers = shape_.size() - 1;
  if (d_params.size() != params_.size() || d_features.size() != shape_[0]) {
    throw ConfigError("NarxNetwork: gradient buffer size mismatch");
  }
  // delta_[l] holds dy/dz for the pre-activation of layer l (l >= 1).
  delta_[layers][0] = 1.0;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::Map<const Eigen::MatrixXd> W(params_.data() + weight_offset_[l], shape_[l + 1],
                                              shape_[l]);
    Eigen::Map<Eigen::MatrixXd> dW(d_params.data() + weight_offset_[l], shape_[l + 1], shape_[l]);
    Eigen::Map<Eigen::VectorXd> db(d_params.data() + bias_offset_[l], shape_[l + 1]);
    dW.noalias() = delta_[l + 1] * act_[l].transpose();
    db = delta_[l + 1];
    if (l > 0) {
      delta_[l].noalias() = W.transpose() * delta_[l + 1];
      delta_[l].array() *= 1.0 - act_[l].array().square();
    } else {
      d_features.noalias() = W.transpose() * delta_[1];
    }
  }
  return y;
}

// Sequences ------------------------------------------------------------------------

void narx_features(const NarxConfig& config, const Eigen::MatrixXd& inputs, Eigen::Index t,
                   std::span<const double> output_history, std::span<double> features) {
  const int m = config.num_inputs;
  std::size_t k = 0;
  for (int d = 0; d <= config.input_delays; ++d) {
    const Eigen::Index row = t - d;
    for (int c = 0; c < m; ++c) features[k++] = row >= 0 ? inputs(row, c) : 0.0;
  }
  for (int d = 0; d < config.feedback_delays; ++d) features[k++] = output_history[static_cast<std::size_t>(d)];
}

namespace {

// Shifts a newest-first history and inserts value at the front.
inline void push_history(std::vector<double>& history, double value) {
  for (std::size_t i = history.size(); i-- > 1;) history[i] = history[i - 1];
  history[0] = value;
}

struct ClosedLoopMetrics {
  double loss = 0.0;
  double validation_nmse = 0.0;
};

ClosedLoopMetrics closed_loop_metrics(const NarxNetwork& net, const std::vector<NarxSequence>& data,
                                      double lambda) {
  const NarxConfig& cfg = net.config();
  std::vector<double> feats(static_cast<std::size_t>(cfg.feature_size()));
  std::vector<double> hist(static_cast<std::size_t>(cfg.feedback_delays), 0.0);
  double sse = 0.0;
  double count = 0.0;
  double val_sse = 0.0;
  double val_sum = 0.0;
  double val_sq = 0.0;
  double val_n = 0.0;
  for (const auto& seq : data) {
    std::fill(hist.begin(), hist.end(), 0.0);
    const Eigen::Index T = seq.inputs.rows();
    for (Eigen::Index t = 0; t < T; ++t) {
      narx_features(cfg, seq.inputs, t, hist, feats);
      const double y = net.forward(feats);
      push_history(hist, y);
      if (t < kWarmupSamples) continue;
      const double e = y - seq.targets[t];
      if (t < seq.train_end) {
        sse += e * e;
        count += 1.0;
      } else {
        val_sse += e * e;
        val_sum += seq.targets[t];
        val_sq += seq.targets[t] * seq.targets[t];
        val_n += 1.0;
      }
    }
  }
  ClosedLoopMetrics m;
  m.loss = (count > 0 ? sse / count : 0.0) + lambda * net.params().squaredNorm();
  if (val_n > 0) {
    const double denom = val_sq - val_sum * val_sum / val_n;
    m.validation_nmse = val_sse / std::max(denom, 1e-300);
  } else {
    m.validation_nmse = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

// Gauss-Newton normal equations accumulated in row blocks.
class NormalEquations {
 public:
  explicit NormalEquations(Eigen::Index p) : H_(Eigen::MatrixXd::Zero(p, p)), g_(Eigen::VectorXd::Zero(p)),
                                             block_(p, kBlock) {}

  void add(const Eigen::VectorXd& row, double residual) {
    block_.col(fill_++) = row;
    g_.noalias() += residual * row;
    sse_ += residual * residual;
    ++count_;
    if (fill_ == kBlock) flush();
  }

  void flush() {
    if (fill_ == 0) return;
    H_.selfadjointView<Eigen::Lower>().rankUpdate(block_.leftCols(fill_));
    fill_ = 0;
  }

  Eigen::Index count() const { return count_; }
  double sse() const { return sse_; }
  const Eigen::MatrixXd& jtj() const { return H_; }
  const Eigen::VectorXd& jtr() const { return g_; }

 private:
  static constexpr Eigen::Index kBlock = 128;
  Eigen::MatrixXd H_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd block_;
  Eigen::Index fill_ = 0;
  Eigen::Index count_ = 0;
  double sse_ = 0.0;
};

NormalEquations teacher_forced_equations(const NarxNetwork& net, const std::vector<NarxSequence>& data) {
  const NarxConfig& cfg = net.config();
  NormalEquations eq(net.num_params());
  std::vector<double> feats(static_cast<std::size_t>(cfg.feature_size()));
  std::vector<double> hist(static_cast<std::size_t>(cfg.feedback_delays));
  Eigen::VectorXd row(net.num_params());
  Eigen::VectorXd dfeat(cfg.feature_size());
  for (const auto& seq : data) {
    for (Eigen::Index t = kWarmupSamples; t < seq.train_end; ++t) {
      for (int d = 0; d < cfg.feedback_delays; ++d) {
        const Eigen::Index r = t - 1 - d;
        hist[static_cast<std::size_t>(d)] = r >= 0 ? seq.targets[r] : 0.0;
      }
      narx_features(cfg, seq.inputs, t, hist, feats);
      const double y = net.forward_with_gradient(feats, row, dfeat);
      eq.add(row, y - seq.targets[t]);
    }
  }
  eq.flush();
  return eq;
}

// Real-time recurrent learning: d y_t / d w including the feedback path.
NormalEquations closed_loop_equations(const NarxNetwork& net, const std::vector<NarxSequence>& data) {
  const NarxConfig& cfg = net.config();
  const Eigen::Index P = net.num_params();
  const int fb0 = cfg.num_inputs * (1 + cfg.input_delays);
  NormalEquations eq(P);
  std::vector<double> feats(static_cast<std::size_t>(cfg.feature_size()));
  std::vector<double> hist(static_cast<std::size_t>(cfg.feedback_delays));
  std::vector<Eigen::VectorXd> sens(static_cast<std::size_t>(cfg.feedback_delays), Eigen::VectorXd(P));
  Eigen::VectorXd row(P);
  Eigen::VectorXd dfeat(cfg.feature_size());
  for (const auto& seq : data) {
    std::fill(hist.begin(), hist.end(), 0.0);
    for (auto& s : sens) s.setZero();
    for (Eigen::Index t = 0; t < seq.train_end; ++t) {
      narx_features(cfg, seq.inputs, t, hist, feats);
      const double y = net.forward_with_gradient(feats, row, dfeat);
      for (int d = 0; d < cfg.feedback_delays; ++d) {
        row.noalias() += dfeat[fb0 + d] * sens[static_cast<std::size_t>(d)];
      }
      if (!row.allFinite() || row.cwiseAbs().maxCoeff() > 1e100) {
        throw TrainingError("closed-loop sensitivities diverged");
      }
      // Rotate the sensitivity buffers; the oldest slot receives the new row.
      std::rotate(sens.rbegin(), sens.rbegin() + 1, sens.rend());
      sens[0] = row;
      push_history(hist, y);
      if (t >= kWarmupSamples) eq.add(row, y - seq.targets[t]);
    }
  }
  eq.flush();
  return eq;
}

// Solves (H + mu I) dw = -g for increasing mu until the loss drops.
template <typename LossFn>
bool levenberg_marquardt_step(NarxNetwork& net, const NormalEquations& eq, double lambda,
                              double current_loss, double& mu, double mu_max, LossFn&& loss_of,
                              double* accepted_loss) {
  const Eigen::Index P = net.num_params();
  if (eq.count() == 0) return false;
  const double n = static_cast<double>(eq.count());
  Eigen::MatrixXd H = (2.0 / n) * eq.jtj();
  H.diagonal().array() += 2.0 * lambda;
  const Eigen::VectorXd g = (2.0 / n) * eq.jtr() + 2.0 * lambda * net.params();
  const Eigen::VectorXd w0 = net.params();
  while (mu <= mu_max) {
    Eigen::MatrixXd A = H;
    A.diagonal().array() += mu;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(A);
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd step = llt.solve(g);
      net.set_params(w0 - step);
      const double trial = loss_of(net);
      if (std::isfinite(trial) && trial < current_loss) {
        mu = std::max(mu * 0.1, 1e-12);
        if (accepted_loss) *accepted_loss = trial;
        return true;
      }
    }
    mu *= 10.0;
  }
  net.set_params(w0);
  (void)P;
  return false;
}

}  // namespace

double nmse(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target) {
  if (prediction.size() != target.size() || target.size() == 0) {
    throw ConfigError("nmse: size mismatch");
  }
  const double mean = target.mean();
  const double denom = (target.array() - mean).square().sum();
  const double num = (prediction - target).squaredNorm();
  return num / std::max(denom, 1e-300);
}

double open_loop_loss(const NarxNetwork& net, const std::vector<NarxSequence>& data, double lambda) {
  const NarxConfig& cfg = net.config();
  std::vector<double> feats(static_cast<std::size_t>(cfg.feature_size()));
  std::vector<double> hist(static_cast<std::size_t>(cfg.feedback_delays));
  double sse = 0.0;
  double count = 0.0;
  for (const auto& seq : data) {
    for (Eigen::Index t = kWarmupSamples; t < seq.train_end; ++t) {
      for (int d = 0; d < cfg.feedback_delays; ++d) {
        const Eigen::Index r = t - 1 - d;
        hist[static_cast<std::size_t>(d)] = r >= 0 ? seq.targets[r] : 0.0;
      }
      narx_features(cfg, seq.inputs, t, hist, feats);
      const double e = net.forward(feats) - seq.targets[t];
      sse += e * e;
      count += 1.0;
    }
  }
  return (count > 0 ? sse / count : 0.0) + lambda * net.params().squaredNorm();
}

double closed_loop_loss(const NarxNetwork& net, const std::vector<NarxSequence>& data, double lambda) {
  return closed_loop_metrics(net, data, lambda).loss;
}

double closed_loop_validation_nmse(const NarxNetwork& net, const std::vector<NarxSequence>& data) {
  return closed_loop_metrics(net, data, 0.0).validation_nmse;
}

Eigen::VectorXd simulate_closed_loop(const NarxNetwork& net, const Eigen::MatrixXd& inputs) {
  const NarxConfig& cfg = net.config();
  std::vector<double> feats(static_cast<std::size_t>(cfg.feature_size()));
  std::vector<double> hist(static_cast<std::size_t>(cfg.feedback_delays), 0.0);
  Eigen::VectorXd out(inputs.rows());
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    narx_features(cfg, inputs, t, hist, feats);
    out[t] = net.forward(feats);
    push_history(hist, out[t]);
  }
  return out;
}

NarxNetwork train_open_loop(const std::vector<NarxSequence>& data, const NarxConfig& config,
                            std::uint64_t seed, const TrainingOptions& options,
                            TrainingReport* report) {
  NarxNetwork net(config);
  std::mt19937_64 rng(seed);
  net.initialize(rng);
  for (const auto& seq : data) {
    if (seq.inputs.cols() != config.num_inputs || seq.targets.size() != seq.inputs.rows() ||
        seq.train_end > seq.inputs.rows() || seq.train_end < 0) {
      throw ConfigError("train_open_loop: malformed sequence");
    }
  }
  const double initial = open_loop_loss(net, data, options.lambda);
  if (!std::isfinite(initial)) throw TrainingError("open-loop loss is not finite");
  const NormalEquations eq = teacher_forced_equations(net, data);
  double mu = options.mu_initial;
  double after = initial;
  levenberg_marquardt_step(
      net, eq, options.lambda, initial, mu, options.mu_max,
      [&](const NarxNetwork& n) { return open_loop_loss(n, data, options.lambda); }, &after);
  if (!std::isfinite(after)) throw TrainingError("open-loop loss is not finite");
  if (report) {
    report->initial_loss = initial;
    report->open_loop_loss = after;
  }
  return net;
}

NarxNetwork train_closed_loop(const NarxNetwork& network, const std::vector<NarxSequence>& data,
                              const TrainingOptions& options, TrainingReport* report) {
  NarxNetwork net = network;
  const int max_epochs = std::min(options.max_epochs, net.config().max_closed_loop_epochs);
  ClosedLoopMetrics current = closed_loop_metrics(net, data, options.lambda);
  const double initial_val = current.validation_nmse;
  if (!std::isfinite(current.loss)) throw TrainingError("closed-loop loss is not finite");
  const bool has_validation = std::isfinite(initial_val);
  const auto score = [&](const ClosedLoopMetrics& m) {
    return has_validation ? m.validation_nmse : m.loss;
  };
  double best = score(current);
  Eigen::VectorXd best_params = net.params();
  TrainingReport local;
  local.open_loop_validation_nmse = initial_val;
  double mu = options.mu_initial;
  int since_best = 0;
  int epoch = 0;
  for (; epoch < max_epochs; ++epoch) {
    const NormalEquations eq = closed_loop_equations(net, data);
    ClosedLoopMetrics accepted;
    const bool moved = levenberg_marquardt_step(
        net, eq, options.lambda, current.loss, mu, options.mu_max,
        [&](const NarxNetwork& n) {
          accepted = closed_loop_metrics(n, data, options.lambda);
          return accepted.loss;
        },
        nullptr);
    if (!moved) break;
    current = accepted;
    if (has_validation && (!std::isfinite(current.validation_nmse) ||
                           current.validation_nmse > 10.0 * std::max(initial_val, 1e-12))) {
      throw TrainingError("closed-loop training diverged on validation data");
    }
    local.validation_history.push_back(current.validation_nmse);
    if (score(current) < best) {
      best = score(current);
      best_params = net.params();
      since_best = 0;
    } else if (++since_best >= options.patience) {
      ++epoch;
      break;
    }
  }
  net.set_params(best_params);
  local.epochs = epoch;
  local.best_validation_nmse = has_validation ? best : std::numeric_limits<double>::quiet_NaN();
  if (report) {
    local.initial_loss = report->initial_loss;
    local.open_loop_loss = report->open_loop_loss;
    *report = local;
  }
  return net;
}

GridSearchResult grid_search(const std::vector<NarxSequence>& data, const GridSearchOptions& options) {
  std::vector<NarxConfig> configs;
  for (int layers : options.layers) {
    for (int neurons : options.neurons) {
      if (neurons < layers) continue;
      NarxConfig c;
      c.hidden_layers = layers;
      c.total_neurons = neurons;
      c.validate();
      configs.push_back(c);
    }
  }
  if (configs.empty()) throw ConfigError("grid_search: empty grid");

  std::vector<CandidateScore> scores(configs.size());
  std::vector<NarxNetwork> screened(configs.size());
  parallel_for(configs.size(), [&](std::size_t i) {
    const NarxConfig& c = configs[i];
    scores[i].config = c;
    const std::uint64_t seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(c.hidden_layers) * 101ULL +
                               static_cast<std::uint64_t>(c.total_neurons);
    try {
      TrainingOptions opts;
      opts.lambda = options.screening_lambda;
      opts.patience = options.patience;
      opts.max_epochs = options.screening_epochs;
      TrainingReport rep;
      NarxNetwork net = train_open_loop(data, c, seed, opts, &rep);
      net = train_closed_loop(net, data, opts, &rep);
      scores[i].num_params = net.num_params();
      scores[i].validation_nmse = closed_loop_validation_nmse(net, data);
      scores[i].failed = !std::isfinite(scores[i].validation_nmse);
      screened[i] = std::move(net);
    } catch (const TrainingError&) {
      scores[i].failed = true;
    }
  });

  std::size_t best = configs.size();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (scores[i].failed) continue;
    if (best == configs.size() || scores[i].validation_nmse < scores[best].validation_nmse ||
        (scores[i].validation_nmse == scores[best].validation_nmse &&
         scores[i].num_params < scores[best].num_params)) {
      best = i;
    }
  }
  if (best == configs.size()) throw TrainingError("grid_search: every candidate failed");

  GridSearchResult result;
  result.config = configs[best];
  result.candidates = scores;
  result.network = screened[best];
  result.validation_nmse = scores[best].validation_nmse;
  result.lambda = options.screening_lambda;

  const int remaining = std::min(options.continuation_epochs,
                                 configs[best].max_closed_loop_epochs - options.screening_epochs);
  std::vector<NarxNetwork> continued(options.lambdas.size());
  std::vector<double> continued_nmse(options.lambdas.size(), std::numeric_limits<double>::infinity());
  parallel_for(options.lambdas.size(), [&](std::size_t i) {
    TrainingOptions opts;
    opts.lambda = options.lambdas[i];
    opts.patience = options.patience;
    opts.max_epochs = std::max(0, remaining);
    try {
      continued[i] = train_closed_loop(screened[best], data, opts);
      continued_nmse[i] = closed_loop_validation_nmse(continued[i], data);
    } catch (const TrainingError&) {
      continued_nmse[i] = std::numeric_limits<double>::infinity();
    }
  });
  for (std::size_t i = 0; i < options.lambdas.size(); ++i) {
    if (continued_nmse[i] < result.validation_nmse) {
      result.validation_nmse = continued_nmse[i];
      result.network = continued[i];
      result.lambda = options.lambdas[i];
    }
  }
  return result;
}

// SoftSensorBank ------------------------------------------------------------------

SoftSensorBank::SoftSensorBank(std::shared_ptr<const Standardizer> input_standardizer,
                               Standardizer target_standardizer,
                               std::array<NarxNetwork, kChannels> networks)
    : input_std_(std::move(input_standardizer)),
      target_std_(std::move(target_standardizer)),
      nets_(std::move(networks)) {
  if (!input_std_ || input_std_->channels() != 3) {
    throw ConfigError("SoftSensorBank: input standardizer must have 3 channels");
  }
  if (target_std_.channels() != kChannels) {
    throw ConfigError("SoftSensorBank: target standardizer must have 5 channels");
  }
  for (const auto& n : nets_) {
    if (n.shape().empty() || n.config().num_inputs != 3) {
      throw ConfigError("SoftSensorBank: every network must consume the 3 input channels");
    }
  }
  reset();
}

void SoftSensorBank::reset() {
  int max_delay = 0;
  std::size_t max_features = 0;
  for (std::size_t c = 0; c < nets_.size(); ++c) {
    const auto& cfg = nets_[c].config();
    max_delay = std::max(max_delay, cfg.input_delays);
    max_features = std::max(max_features, static_cast<std::size_t>(cfg.feature_size()));
    feedback_[c].assign(static_cast<std::size_t>(cfg.feedback_delays), 0.0);
  }
  input_history_ = Eigen::MatrixXd::Zero(max_delay + 1, 3);
  features_.assign(max_features, 0.0);
  steps_ = 0;
}

Eigen::Matrix<double, SoftSensorBank::kChannels, 1> SoftSensorBank::predict_step(
    const Eigen::Vector3d& u) {
  for (Eigen::Index r = input_history_.rows() - 1; r > 0; --r) {
    input_history_.row(r) = input_history_.row(r - 1);
  }
  for (int c = 0; c < 3; ++c) input_history_(0, c) = input_std_->apply(u[c], c);

  Eigen::Matrix<double, kChannels, 1> out;
  for (std::size_t c = 0; c < nets_.size(); ++c) {
    const auto& cfg = nets_[c].config();
    std::size_t k = 0;
    for (int d = 0; d <= cfg.input_delays; ++d) {
      for (int i = 0; i < 3; ++i) features_[k++] = input_history_(d, i);
    }
    for (double v : feedback_[c]) features_[k++] = v;
    const double y = nets_[c].forward(std::span<const double>(features_.data(), k));
    push_history(feedback_[c], y);
    out[static_cast<Eigen::Index>(c)] = target_std_.invert(y, static_cast<Eigen::Index>(c));
  }
  ++steps_;
  return out;
}

Eigen::MatrixXd predict_sequence(SoftSensorBank& bank, const Eigen::MatrixXd& inputs_si) {
  bank.reset();
  Eigen::MatrixXd out(inputs_si.rows(), SoftSensorBank::kChannels);
  for (Eigen::Index t = 0; t < inputs_si.rows(); ++t) {
    out.row(t) = bank.predict_step(inputs_si.row(t).transpose()).transpose();
  }
  return out;
}

}  // namespace hekf
