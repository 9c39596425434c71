#include "hekf/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hekf/errors.hpp"
#include "hekf/parallel.hpp"

namespace hekf {

namespace {

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::vector<int> integers(const KeyValueFile& kv, const std::string& key, const std::vector<int>& fallback) {
  if (!kv.contains(key)) return fallback;
  std::vector<int> out;
  for (double d : kv.numbers(key)) {
    if (d != std::floor(d)) throw ConfigError(kv.origin() + ": " + key + " must list integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::vector<double> reals(const KeyValueFile& kv, const std::string& key, const std::vector<double>& fallback) {
  return kv.contains(key) ? kv.numbers(key) : fallback;
}

std::vector<std::string> words(const KeyValueFile& kv, const std::string& key,
                               const std::vector<std::string>& fallback) {
  if (!kv.contains(key)) return fallback;
  std::string text = kv.raw(key);
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::uint64_t maneuver_seed(std::uint64_t seed, std::uint64_t set, std::uint64_t index) {
  return seed * 1000003ULL + set * 1009ULL + index;
}

std::string fixed(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string sig6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace

// ProtocolConfig ---------------------------------------------------------------------

ProtocolConfig ProtocolConfig::from(const KeyValueFile& kv) {
  kv.reject_unknown({"seed",
                     "dt",
                     "truth.perturbation",
                     "params",
                     "noise.yaw_rate2",
                     "noise.vx2",
                     "noise.fz2",
                     "noise.wheel_speed_yaw",
                     "noise.track_width",
                     "noise.wheel_speed",
                     "body.unladen_mass",
                     "body.unladen_cog",
                     "body.bed_length",
                     "maneuvers.training_loads",
                     "maneuvers.ood_load",
                     "maneuvers.training_duration",
                     "maneuvers.tuning_duration",
                     "maneuvers.evaluation_duration",
                     "train.layers",
                     "train.neurons",
                     "train.screening_epochs",
                     "train.continuation_epochs",
                     "train.lambdas",
                     "train.patience",
                     "train.validation_fraction",
                     "confidence.k",
                     "confidence.percentile",
                     "confidence.stride",
                     "ekf.q_scales",
                     "ekf.random_walk",
                     "hekf.c",
                     "hekf.wholesale",
                     "hekf.whiteness_bound",
                     "hekf.tracking_bound",
                     "report.warmup",
                     "ident.enabled",
                     "ident.bounds"},
                    {"load."});
  ProtocolConfig c;
  c.seed = static_cast<std::uint64_t>(kv.integer_or("seed", static_cast<long>(c.seed)));
  c.dt = kv.number_or("dt", c.dt);
  c.truth_perturbation = kv.number_or("truth.perturbation", c.truth_perturbation);
  c.params_file = kv.string_or("params", "");
  c.noise.yaw_rate2 = kv.number_or("noise.yaw_rate2", c.noise.yaw_rate2);
  c.noise.vx2 = kv.number_or("noise.vx2", c.noise.vx2);
  c.noise.fz2 = kv.number_or("noise.fz2", c.noise.fz2);
  c.noise.wheel_speed_yaw = kv.integer_or("noise.wheel_speed_yaw", 0) != 0;
  c.noise.track_width = kv.number_or("noise.track_width", c.noise.track_width);
  c.noise.wheel_speed = kv.number_or("noise.wheel_speed", c.noise.wheel_speed);
  c.body.unladen_mass = kv.number_or("body.unladen_mass", c.body.unladen_mass);
  c.body.unladen_cog = kv.number_or("body.unladen_cog", c.body.unladen_cog);
  c.body.bed_length = kv.number_or("body.bed_length", c.body.bed_length);
  // load.<id> = payload, position
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("load.", 0) != 0) continue;
    const auto v = kv.numbers(key);
    if (v.size() != 2) throw ConfigError(kv.origin() + ": " + key + " needs payload and position");
    const std::string id = key.substr(5);
    bool replaced = false;
    for (auto& l : c.loading_states) {
      if (l.id == id) {
        l.payload = v[0];
        l.payload_position = v[1];
        replaced = true;
      }
    }
    if (!replaced) c.loading_states.push_back({id, v[0], v[1]});
  }
  c.training_loads = words(kv, "maneuvers.training_loads", c.training_loads);
  c.ood_load = kv.string_or("maneuvers.ood_load", c.ood_load);
  c.training_duration = kv.number_or("maneuvers.training_duration", c.training_duration);
  c.tuning_duration = kv.number_or("maneuvers.tuning_duration", c.tuning_duration);
  c.evaluation_duration = kv.number_or("maneuvers.evaluation_duration", c.evaluation_duration);
  auto& g = c.training.grid;
  g.layers = integers(kv, "train.layers", g.layers);
  g.neurons = integers(kv, "train.neurons", g.neurons);
  g.screening_epochs = static_cast<int>(kv.integer_or("train.screening_epochs", g.screening_epochs));
  g.continuation_epochs = static_cast<int>(kv.integer_or("train.continuation_epochs", g.continuation_epochs));
  g.lambdas = reals(kv, "train.lambdas", g.lambdas);
  g.patience = static_cast<int>(kv.integer_or("train.patience", g.patience));
  c.training.validation_fraction = kv.number_or("train.validation_fraction", c.training.validation_fraction);
  c.training.k = static_cast<int>(kv.integer_or("confidence.k", c.training.k));
  c.training.d_max_percentile = kv.number_or("confidence.percentile", c.training.d_max_percentile);
  c.training.d_max_stride = static_cast<int>(kv.integer_or("confidence.stride", c.training.d_max_stride));
  c.ekf_tuning.q_scales = reals(kv, "ekf.q_scales", c.ekf_tuning.q_scales);
  c.ekf_tuning.random_walk = reals(kv, "ekf.random_walk", c.ekf_tuning.random_walk);
  c.hekf_c = kv.number_or("hekf.c", c.hekf_c);
  c.hekf_wholesale = kv.integer_or("hekf.wholesale", 0) != 0;
  c.hekf_tuning.whiteness_bound = kv.number_or("hekf.whiteness_bound", c.hekf_tuning.whiteness_bound);
  c.hekf_tuning.tracking_bound = kv.number_or("hekf.tracking_bound", c.hekf_tuning.tracking_bound);
  c.report_warmup = kv.integer_or("report.warmup", static_cast<long>(c.report_warmup));
  c.identify = kv.integer_or("ident.enabled", 0) != 0;
  c.bounds_file = kv.string_or("ident.bounds", "");
  // Relative paths resolve against the config file's directory.
  const std::filesystem::path base = std::filesystem::path(kv.origin()).parent_path();
  for (std::string* p : {&c.params_file, &c.bounds_file}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative() && !base.empty()) *p = (base / *p).string();
  }
  c.validate();
  return c;
}

ProtocolConfig ProtocolConfig::load(const std::filesystem::path& path) {
  return from(KeyValueFile::load(path));
}

KeyValueFile ProtocolConfig::to_key_values() const {
  KeyValueFile kv;
  kv.set("seed", std::to_string(seed));
  kv.set("dt", dt);
  kv.set("truth.perturbation", truth_perturbation);
  if (!params_file.empty()) kv.set("params", params_file);
  kv.set("noise.yaw_rate2", noise.yaw_rate2);
  kv.set("noise.vx2", noise.vx2);
  kv.set("noise.fz2", noise.fz2);
  kv.set("noise.wheel_speed_yaw", noise.wheel_speed_yaw ? "1" : "0");
  kv.set("noise.track_width", noise.track_width);
  kv.set("noise.wheel_speed", noise.wheel_speed);
  kv.set("body.unladen_mass", body.unladen_mass);
  kv.set("body.unladen_cog", body.unladen_cog);
  kv.set("body.bed_length", body.bed_length);
  for (const auto& l : loading_states) {
    kv.set("load." + l.id, format_double(l.payload) + ", " + format_double(l.payload_position));
  }
  kv.set("maneuvers.training_loads", join(training_loads));
  kv.set("maneuvers.ood_load", ood_load);
  kv.set("maneuvers.training_duration", training_duration);
  kv.set("maneuvers.tuning_duration", tuning_duration);
  kv.set("maneuvers.evaluation_duration", evaluation_duration);
  const auto& g = training.grid;
  kv.set("train.layers", join(g.layers));
  kv.set("train.neurons", join(g.neurons));
  kv.set("train.screening_epochs", std::to_string(g.screening_epochs));
  kv.set("train.continuation_epochs", std::to_string(g.continuation_epochs));
  kv.set("train.lambdas", join(g.lambdas));
  kv.set("train.patience", std::to_string(g.patience));
  kv.set("train.validation_fraction", training.validation_fraction);
  kv.set("confidence.k", std::to_string(training.k));
  kv.set("confidence.percentile", training.d_max_percentile);
  kv.set("confidence.stride", std::to_string(training.d_max_stride));
  kv.set("ekf.q_scales", join(ekf_tuning.q_scales));
  kv.set("ekf.random_walk", join(ekf_tuning.random_walk));
  kv.set("hekf.c", hekf_c);
  kv.set("hekf.wholesale", hekf_wholesale ? "1" : "0");
  kv.set("hekf.whiteness_bound", hekf_tuning.whiteness_bound);
  kv.set("hekf.tracking_bound", hekf_tuning.tracking_bound);
  kv.set("report.warmup", std::to_string(report_warmup));
  kv.set("ident.enabled", identify ? "1" : "0");
  if (!bounds_file.empty()) kv.set("ident.bounds", bounds_file);
  return kv;
}

VehicleParams ProtocolConfig::nominal_params() const {
  return params_file.empty() ? VehicleParams{} : load_vehicle_params(params_file);
}

void ProtocolConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("protocol: dt must be positive");
  if (!(truth_perturbation >= 0.0 && truth_perturbation < 1.0)) {
    throw ConfigError("protocol: truth.perturbation must lie in [0, 1)");
  }
  if (training_loads.empty()) throw ConfigError("protocol: no training loads");
  for (const auto& id : training_loads) {
    find_loading_state(loading_states, id).validate(body);
    if (id == ood_load) throw ConfigError("protocol: out-of-distribution load '" + id + "' is also a training load");
  }
  find_loading_state(loading_states, ood_load).validate(body);
  for (double d : {training_duration, tuning_duration, evaluation_duration}) {
    if (!(d > 5.0)) throw ConfigError("protocol: maneuver durations must exceed 5 s");
  }
  if (training.grid.layers.empty() || training.grid.neurons.empty() || training.grid.lambdas.empty()) {
    throw ConfigError("protocol: empty training grid");
  }
  if (training.grid.screening_epochs < 1 || training.grid.continuation_epochs < 0) {
    throw ConfigError("protocol: invalid epoch budget");
  }
  if (training.k < 1) throw ConfigError("protocol: confidence.k must be positive");
  if (!(hekf_c > 0.0)) throw ConfigError("protocol: hekf.c must be positive");
  if (report_warmup < 0) throw ConfigError("protocol: report.warmup must be non-negative");
  if (identify && bounds_file.empty()) throw ConfigError("protocol: ident.enabled needs ident.bounds");
}

VehicleParams truth_params(const ProtocolConfig& config) {
  return perturb_tire_params(config.nominal_params(), config.truth_perturbation, config.seed);
}

// Maneuver sets ---------------------------------------------------------------------

std::vector<ManeuverSpec> training_maneuvers(const ProtocolConfig& config) {
  struct Band {
    const char* tag;
    double amplitude;
    double v0;
    double v1;
  };
  const std::array<Band, 2> bands = {Band{"slow", 0.35, 4.0, 12.0}, Band{"fast", 0.2, 11.0, 21.0}};
  std::vector<ManeuverSpec> specs;
  std::uint64_t i = 0;
  for (const auto& load : config.training_loads) {
    for (SteeringKind kind : {SteeringKind::kSine, SteeringKind::kStep, SteeringKind::kRamp}) {
      for (const auto& b : bands) {
        ManeuverSpec s;
        s.kind = kind;
        s.name = "train_" + load + "_" + to_string(kind) + "_" + b.tag;
        s.amplitude = b.amplitude;
        s.speed_start = b.v0;
        s.speed_end = b.v1;
        s.frequency = 0.1;
        s.frequency_end = 0.6;
        s.duration = config.training_duration;
        s.loading = load;
        s.seed = maneuver_seed(config.seed, 1, i++);
        specs.push_back(s);
      }
    }
  }
  return specs;
}

std::vector<ManeuverSpec> tuning_maneuvers(const ProtocolConfig& config) {
  const std::array<SteeringKind, 3> kinds = {SteeringKind::kStep, SteeringKind::kRamp, SteeringKind::kSine};
  std::vector<ManeuverSpec> specs;
  std::uint64_t i = 0;
  for (const auto& load : config.training_loads) {
    ManeuverSpec s;
    s.kind = kinds[i % kinds.size()];
    s.name = "tune_" + load + "_" + to_string(s.kind);
    s.amplitude = 0.25;
    s.speed_start = 6.0 + 2.0 * static_cast<double>(i % 3);
    s.speed_end = 15.0 + 2.0 * static_cast<double>(i % 3);
    s.frequency = 0.15;
    s.frequency_end = 0.45;
    s.duration = config.tuning_duration;
    s.loading = load;
    s.seed = maneuver_seed(config.seed, 2, i++);
    specs.push_back(s);
  }
  return specs;
}

std::vector<ManeuverSpec> evaluation_maneuvers(const ProtocolConfig& config) {
  std::vector<ManeuverSpec> specs;
  const std::array<SteeringKind, 3> kinds = {SteeringKind::kSine, SteeringKind::kStep, SteeringKind::kRamp};
  // In-distribution: one maneuver per training load, in reverse listing
  // order so that the heaviest configured load comes first.
  std::uint64_t i = 0;
  for (auto it = config.training_loads.rbegin(); it != config.training_loads.rend() && i < 3; ++it) {
    ManeuverSpec s;
    s.kind = kinds[i];
    s.name = "eval_" + *it;
    s.amplitude = 0.3;
    s.speed_start = 7.0;
    s.speed_end = 17.0;
    s.frequency = 0.12;
    s.frequency_end = 0.5;
    s.duration = config.evaluation_duration;
    s.loading = *it;
    s.seed = maneuver_seed(config.seed, 3, i++);
    specs.push_back(s);
  }
  ManeuverSpec ood = specs.front();
  ood.name = "eval_" + config.ood_load;
  ood.loading = config.ood_load;
  ood.seed = maneuver_seed(config.seed, 3, i);
  specs.push_back(ood);
  return specs;
}

std::vector<ManeuverDataset> generate_set(const std::vector<ManeuverSpec>& specs, const ProtocolConfig& config,
                                          const VehicleParams& truth) {
  std::vector<ManeuverDataset> out(specs.size());
  parallel_for(specs.size(), [&](std::size_t i) {
    const LoadingState& load = find_loading_state(config.loading_states, specs[i].loading);
    out[i] = generate_maneuver(specs[i], load, config.body, truth, config.noise, config.dt);
  });
  return out;
}

// Report ----------------------------------------------------------------------------

const std::array<std::string, kNumMethods>& method_names() {
  static const std::array<std::string, kNumMethods> n = {"ekf", "ann", "hekf"};
  return n;
}

void RmseReport::finalize() {
  mean = ReportRow{};
  mean.maneuver = "mean";
  mean.loading = "-";
  mean.median_tau = std::numeric_limits<double>::quiet_NaN();
  if (rows.empty()) return;
  for (int m = 0; m < kNumMethods; ++m) {
    for (int q = 0; q < kNumReportQuantities; ++q) {
      double s = 0.0;
      for (const auto& r : rows) s += r.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)];
      mean.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)] = s / static_cast<double>(rows.size());
    }
  }
  for (int q = 0; q < kNumReportQuantities; ++q) {
    double top = 0.0;
    for (int m = 0; m < kNumMethods; ++m) top = std::max(top, mean.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)]);
    for (int m = 0; m < kNumMethods; ++m) {
      relative[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)] =
          top > 0.0 ? mean.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)] / top : 0.0;
    }
  }
}

std::string RmseReport::to_csv() const {
  std::ostringstream out;
  out << "maneuver,loading,distribution,method";
  for (const auto& q : report_names()) out << ',' << q;
  out << '\n';
  const auto emit = [&](const ReportRow& r, const std::string& dist) {
    for (int m = 0; m < kNumMethods; ++m) {
      out << r.maneuver << ',' << r.loading << ',' << dist << ',' << method_names()[static_cast<std::size_t>(m)];
      for (double v : r.rmse[static_cast<std::size_t>(m)]) out << ',' << sig6(v);
      out << '\n';
    }
  };
  for (const auto& r : rows) emit(r, r.in_distribution ? "in" : "out");
  emit(mean, "all");
  for (int m = 0; m < kNumMethods; ++m) {
    out << "relative_mean,-,all," << method_names()[static_cast<std::size_t>(m)];
    for (double v : relative[static_cast<std::size_t>(m)]) out << ',' << sig6(v);
    out << '\n';
  }
  return out.str();
}

std::string RmseReport::to_table() const {
  std::ostringstream out;
  const std::array<std::string, kNumReportQuantities> heads = {"theta [rad]", "Fy21 [kN]", "Fy23 [kN]",
                                                              "delta1 [rad]"};
  const std::array<int, kNumReportQuantities> prec = {4, 3, 3, 4};
  out << std::left << std::setw(24) << "maneuver" << std::setw(16) << "loading" << std::setw(5) << "dist";
  for (const auto& h : heads) out << std::setw(27) << h;
  out << '\n' << std::setw(45) << "";
  for (int q = 0; q < kNumReportQuantities; ++q) {
    for (const auto& m : method_names()) out << std::setw(9) << m;
  }
  out << '\n';
  const auto emit = [&](const ReportRow& r, const std::string& dist) {
    out << std::setw(24) << r.maneuver << std::setw(16) << r.loading << std::setw(5) << dist;
    for (int q = 0; q < kNumReportQuantities; ++q) {
      for (int m = 0; m < kNumMethods; ++m) {
        out << std::setw(9) << fixed(r.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)], prec[static_cast<std::size_t>(q)]);
      }
    }
    out << '\n';
  };
  for (const auto& r : rows) emit(r, r.in_distribution ? "in" : "out");
  emit(mean, "all");
  out << std::setw(45) << "relative mean error";
  for (int q = 0; q < kNumReportQuantities; ++q) {
    for (int m = 0; m < kNumMethods; ++m) {
      out << std::setw(9) << fixed(100.0 * relative[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)], 1) + "%";
    }
  }
  out << '\n';
  return out.str();
}

std::string RmseReport::tau_csv() const {
  std::ostringstream out;
  out << "maneuver,loading,distribution,median_tau\n";
  for (const auto& r : rows) {
    out << r.maneuver << ',' << r.loading << ',' << (r.in_distribution ? "in" : "out") << ',' << sig6(r.median_tau)
        << '\n';
  }
  return out.str();
}

// Evaluation ------------------------------------------------------------------------

ManeuverRuns run_methods(const ManeuverDataset& data, const EvaluationSetup& setup) {
  if (!setup.soft) throw ConfigError("evaluation: soft sensor missing");
  auto confidence = std::make_shared<const ConfidenceModel>(setup.soft->confidence);
  ManeuverRuns r;
  r.ekf = run_ekf(data, setup.params, setup.ekf_noise, setup.init, setup.hekf.form);
  r.ann = run_ann(data, setup.soft->bank);
  r.hekf = run_hekf(data, setup.params, setup.hekf, setup.soft->bank, confidence, setup.init);
  return r;
}

ReportRow report_row(const ManeuverDataset& data, const ManeuverRuns& runs, Eigen::Index warmup) {
  ReportRow row;
  row.maneuver = data.meta("name", "?");
  row.loading = data.meta("loading", "?");
  row.rmse[0] = report_rmse(runs.ekf.mean, data.truth, warmup);
  row.rmse[1] = report_rmse(runs.ann.mean, data.truth, warmup);
  row.rmse[2] = report_rmse(runs.hekf.mean, data.truth, warmup);
  row.median_tau = median(runs.hekf.tau.tail(runs.hekf.tau.size() - std::min(warmup, runs.hekf.tau.size() - 1)));
  return row;
}

RmseReport evaluate_all(const std::vector<ManeuverDataset>& data, const EvaluationSetup& setup,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "runs");
  std::vector<ManeuverRuns> runs(data.size());
  std::vector<std::string> errors(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    try {
      runs[i] = run_methods(data[i], setup);
    } catch (const std::exception& e) {
      errors[i] = data[i].meta("name", "?") + ": " + e.what();
    }
  });
  RmseReport report;
  std::string failure;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!errors[i].empty()) {
      if (failure.empty()) failure = errors[i];
      continue;
    }
    ReportRow row = report_row(data[i], runs[i], setup.warmup);
    row.in_distribution = i + 1 < data.size();
    report.rows.push_back(row);
    for (const EstimateRun* run : {&runs[i].ekf, &runs[i].ann, &runs[i].hekf}) {
      save_run_csv(*run, out_dir / "runs" / (row.maneuver + "_" + run->method + ".csv"));
    }
  }
  report.finalize();
  write_text(out_dir / "report.csv", report.to_csv());
  write_text(out_dir / "report.txt", report.to_table());
  write_text(out_dir / "tau.csv", report.tau_csv());
  if (!failure.empty()) throw ProtocolFailure("evaluation failed for " + failure, report);
  return report;
}

NoiseConfig initial_hybrid_noise(const NoiseConfig& ekf_noise, const std::vector<ManeuverDataset>& data,
                                 const SoftSensorArtifacts& soft, Eigen::Index warmup) {
  NoiseConfig n = default_noise(MeasurementMode::kHybrid, ekf_noise.R0(0, 0));
  n.Q = ekf_noise.Q;
  std::array<double, kNumSoft> sse{};
  double count = 0.0;
  for (const auto& d : data) {
    SoftSensorBank bank = soft.bank;
    const Eigen::MatrixXd y = predict_sequence(bank, d.ann_inputs());
    const Eigen::MatrixXd truth = soft_channel_truth(d);
    const Eigen::Index skip = std::min(warmup, d.rows() - 1);
    for (int c = 0; c < kNumSoft; ++c) {
      sse[static_cast<std::size_t>(c)] += (y.col(c) - truth.col(c)).tail(d.rows() - skip).squaredNorm();
    }
    count += static_cast<double>(d.rows() - skip);
  }
  for (int c = 0; c < kNumSoft; ++c) {
    const double v = sse[static_cast<std::size_t>(c)] / std::max(count, 1.0);
    if (std::isfinite(v) && v > 0.0) n.R0(1 + c, 1 + c) = v;
  }
  return n;
}

ProtocolResult run_protocol(const ProtocolConfig& config, const std::filesystem::path& out_dir,
                            const ProtocolLog& log) {
  config.validate();
  const auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  std::filesystem::create_directories(out_dir);
  ProtocolResult result;
  result.truth = truth_params(config);
  const VehicleParams nominal = config.nominal_params();

  say("generating maneuvers");
  const auto train_specs = training_maneuvers(config);
  const auto tune_specs = tuning_maneuvers(config);
  const auto eval_specs = evaluation_maneuvers(config);
  const auto train = generate_set(train_specs, config, result.truth);
  const auto tune = generate_set(tune_specs, config, result.truth);
  const auto eval = generate_set(eval_specs, config, result.truth);
  for (const auto& [dir, set] : {std::pair{"train", &train}, std::pair{"tune", &tune}, std::pair{"eval", &eval}}) {
    std::filesystem::create_directories(out_dir / "data" / dir);
    for (const auto& d : *set) save_dataset(d, out_dir / "data" / dir / (d.meta("name") + ".csv"));
  }
  save_vehicle_params(result.truth, out_dir / "truth.params");

  result.filter_params = nominal;
  if (config.identify) {
    say("identifying tire parameters");
    const PsoConfig pso = pso_config_from(KeyValueFile::load(config.bounds_file));
    const IdentResult id = identify(pso, nominal, train);
    result.filter_params = id.params;
    save_cost_history(id.history, out_dir / "ident_history.csv");
    say("identification NMSE " + format_double(id.best_cost));
  }
  save_vehicle_params(result.filter_params, out_dir / "filter.params");

  say("training soft sensor");
  const SoftSensorArtifacts soft = train_soft_sensor(train, config.training, say);
  save_soft_sensor(soft, out_dir / "soft_sensor.json");

  say("tuning EKF noise");
  double yaw_var = 0.0;
  for (const auto& d : tune) yaw_var += static_yaw_rate_variance(d) / static_cast<double>(tune.size());
  const NoiseConfig ekf_base = default_noise(MeasurementMode::kEkf, yaw_var);
  try {
    result.ekf = tune_ekf_noise(tune, result.filter_params, ekf_base, config.ekf_tuning);
  } catch (const std::exception& e) {
    throw ProtocolFailure(e.what(), {});
  }
  save_noise(result.ekf.noise, MeasurementMode::kEkf, out_dir / "ekf.noise");
  say("EKF mean NEES " + format_double(result.ekf.mean_nees) + " (Q scale " + format_double(result.ekf.q_scale) +
      ", random walk " + format_double(result.ekf.random_walk) + ")");

  say("tuning HEKF noise at full confidence");
  HekfConfig hekf;
  hekf.c = config.hekf_c;
  hekf.scale_wholesale = config.hekf_wholesale;
  hekf.noise = initial_hybrid_noise(result.ekf.noise, tune, soft, config.hekf_tuning.warmup);
  std::vector<Eigen::MatrixXd> soft_out;
  for (const auto& d : tune) {
    SoftSensorBank bank = soft.bank;
    soft_out.push_back(predict_sequence(bank, d.ann_inputs()));
  }
  try {
    result.hekf = tune_full_confidence(hekf, tune, soft_out, result.filter_params, config.hekf_tuning);
  } catch (const std::exception& e) {
    throw ProtocolFailure(e.what(), {});
  }
  hekf.noise = result.hekf.noise;
  save_noise(hekf.noise, MeasurementMode::kHybrid, out_dir / "hekf.noise");
  say("HEKF tuning objective " + format_double(result.hekf.objective) + " after " +
      std::to_string(result.hekf.runs) + " runs");

  say("evaluating");
  EvaluationSetup setup;
  setup.params = result.filter_params;
  setup.ekf_noise = result.ekf.noise;
  setup.hekf = hekf;
  setup.soft = &soft;
  setup.warmup = config.report_warmup;
  result.report = evaluate_all(eval, setup, out_dir);
  write_text(out_dir / "config.resolved", config.to_key_values().to_string());
  return result;
}

}  // namespace hekf
