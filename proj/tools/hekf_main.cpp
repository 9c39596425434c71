// hekf: command-line driver for data generation, identification, soft-sensor
// training, noise tuning, single runs and the full evaluation protocol.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hekf/errors.hpp"
#include "hekf/identification.hpp"
#include "hekf/protocol.hpp"
#include "hekf/soft_sensor_io.hpp"
#include "hekf/soft_sensor_training.hpp"
#include "hekf/tuning.hpp"

namespace fs = std::filesystem;
using namespace hekf;

namespace {

void echo(const std::string& command, const KeyValueFile& resolved) {
  std::cout << "# hekf " << command << "\n";
  std::istringstream lines(resolved.to_string());
  std::string line;
  while (std::getline(lines, line)) std::cout << "# " << line << "\n";
  std::cout.flush();
}

void note(const std::string& s) { std::cerr << s << std::endl; }

std::vector<ManeuverDataset> load_dir(const fs::path& dir) {
  const auto files = dataset_files(dir);
  if (files.empty()) throw ConfigError("no *.csv datasets in " + dir.string());
  std::vector<ManeuverDataset> out;
  for (const auto& f : files) out.push_back(load_dataset(f));
  return out;
}

ProtocolConfig protocol_config(const std::string& path, std::optional<std::uint64_t> seed) {
  ProtocolConfig c = path.empty() ? ProtocolConfig{} : ProtocolConfig::load(path);
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

VehicleParams params_or_default(const std::string& path) {
  return path.empty() ? VehicleParams{} : load_vehicle_params(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid ANN-aided EKF for truck-semitrailer state estimation"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed override"); };

  // generate
  std::string gen_config;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Generate training, tuning and evaluation maneuvers");
  gen->add_option("--config", gen_config, "Protocol config file")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  add_seed(gen);

  // identify
  std::string id_data;
  std::string id_bounds;
  std::string id_out;
  std::string id_params;
  std::string id_history;
  auto* ident = app.add_subcommand("identify", "Identify tire parameters with particle swarm optimization");
  ident->add_option("--data", id_data, "Directory of datasets with truth channels")->required()->check(CLI::ExistingDirectory);
  ident->add_option("--bounds", id_bounds, "Bounds file")->required()->check(CLI::ExistingFile);
  ident->add_option("--out", id_out, "Output parameter file")->required();
  ident->add_option("--params", id_params, "Base parameter file (defaults built in)")->check(CLI::ExistingFile);
  ident->add_option("--history", id_history, "Cost-history CSV (default <out>.history.csv)");
  add_seed(ident);

  // train
  std::string tr_data;
  std::string tr_out;
  std::string tr_config;
  auto* train = app.add_subcommand("train", "Grid search and train the soft-sensor bank and confidence model");
  train->add_option("--data", tr_data, "Directory of training datasets")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tr_out, "Output soft-sensor file (JSON)")->required();
  train->add_option("--config", tr_config, "Protocol config supplying train.* and confidence.* keys")->check(CLI::ExistingFile);
  add_seed(train);

  // tune
  std::string tu_data;
  std::string tu_bank;
  std::string tu_out;
  std::string tu_ekf_out;
  std::string tu_params;
  std::string tu_config;
  auto* tune = app.add_subcommand("tune", "Tune EKF noise by NEES, then HEKF noise at full confidence");
  tune->add_option("--data", tu_data, "Directory of tuning datasets")->required()->check(CLI::ExistingDirectory);
  tune->add_option("--bank", tu_bank, "Soft-sensor file")->required()->check(CLI::ExistingFile);
  tune->add_option("--out", tu_out, "Output HEKF noise file")->required();
  tune->add_option("--ekf-out", tu_ekf_out, "Output EKF noise file (default <out>.ekf)");
  tune->add_option("--params", tu_params, "Filter parameter file")->check(CLI::ExistingFile);
  tune->add_option("--config", tu_config, "Protocol config supplying ekf.* and hekf.* keys")->check(CLI::ExistingFile);
  add_seed(tune);

  // run
  std::string run_method;
  std::string run_data;
  std::string run_out;
  std::string run_params;
  std::string run_bank;
  std::string run_noise;
  double run_c = HekfConfig{}.c;
  std::optional<double> run_tau;
  auto* run = app.add_subcommand("run", "Run one estimator over one maneuver and write the step records");
  run->add_option("--method", run_method, "ekf, ann or hekf")->required()->check(CLI::IsMember({"ekf", "ann", "hekf"}));
  run->add_option("--data", run_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Step-record CSV (default stdout)");
  run->add_option("--params", run_params, "Filter parameter file")->check(CLI::ExistingFile);
  run->add_option("--bank", run_bank, "Soft-sensor file (ann, hekf)")->check(CLI::ExistingFile);
  run->add_option("--noise", run_noise, "Noise file matching the method (ekf, hekf)")->check(CLI::ExistingFile);
  run->add_option("--c", run_c, "Zero-confidence inflation factor (hekf)");
  run->add_option("--tau", run_tau, "Pin the confidence for every step (hekf)");
  add_seed(run);

  // evaluate
  bool ev_all = false;
  std::string ev_config;
  std::string ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "Run the full protocol and write the RMSE report");
  evaluate->add_flag("--all", ev_all, "Generate, train, tune and evaluate in one go")->required();
  evaluate->add_option("--config", ev_config, "Protocol config file")->check(CLI::ExistingFile);
  evaluate->add_option("--out", ev_out, "Output directory")->required();
  add_seed(evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << msg << std::endl;
    return 2;
  }

  try {
    if (*gen) {
      const ProtocolConfig cfg = protocol_config(gen_config, seed);
      echo("generate", cfg.to_key_values());
      const VehicleParams truth = truth_params(cfg);
      const std::array<std::pair<const char*, std::vector<ManeuverSpec>>, 3> sets = {
          std::pair{"train", training_maneuvers(cfg)}, std::pair{"tune", tuning_maneuvers(cfg)},
          std::pair{"eval", evaluation_maneuvers(cfg)}};
      for (const auto& [name, specs] : sets) {
        const fs::path dir = fs::path(gen_out) / name;
        fs::create_directories(dir);
        for (const auto& d : generate_set(specs, cfg, truth)) save_dataset(d, dir / (d.meta("name") + ".csv"));
        note("wrote " + std::to_string(specs.size()) + " maneuvers to " + dir.string());
      }
      save_vehicle_params(truth, fs::path(gen_out) / "truth.params");
    } else if (*ident) {
      PsoConfig pso = pso_config_from(KeyValueFile::load(id_bounds));
      if (seed) pso.seed = *seed;
      KeyValueFile kv;
      kv.set("data", id_data);
      kv.set("bounds", id_bounds);
      kv.set("params", id_params.empty() ? "<built-in>" : id_params);
      kv.set("pso.swarm_size", std::to_string(pso.swarm_size));
      kv.set("pso.iterations", std::to_string(pso.iterations));
      kv.set("pso.inertia", pso.inertia);
      kv.set("pso.cognitive", pso.cognitive);
      kv.set("pso.social", pso.social);
      kv.set("pso.velocity_clamp", pso.velocity_clamp);
      kv.set("pso.seed", std::to_string(pso.seed));
      echo("identify", kv);
      const auto data = load_dir(id_data);
      const IdentResult r = identify(pso, params_or_default(id_params), data);
      save_vehicle_params(r.params, id_out);
      save_cost_history(r.history, id_history.empty() ? id_out + ".history.csv" : id_history);
      note("best NMSE " + format_double(r.best_cost) + " after " + std::to_string(r.evaluations) + " evaluations");
    } else if (*train) {
      ProtocolConfig cfg = protocol_config(tr_config, std::nullopt);
      if (seed) cfg.training.grid.seed = *seed;
      KeyValueFile kv = cfg.to_key_values();
      kv.set("train.seed", std::to_string(cfg.training.grid.seed));
      kv.set("data", tr_data);
      echo("train", kv);
      const auto data = load_dir(tr_data);
      const SoftSensorArtifacts a = train_soft_sensor(data, cfg.training, note);
      save_soft_sensor(a, tr_out);
    } else if (*tune) {
      const ProtocolConfig cfg = protocol_config(tu_config, seed);
      echo("tune", cfg.to_key_values());
      const auto data = load_dir(tu_data);
      const VehicleParams params = params_or_default(tu_params);
      const SoftSensorArtifacts soft = load_soft_sensor(tu_bank);
      double yaw_var = 0.0;
      for (const auto& d : data) yaw_var += static_yaw_rate_variance(d) / static_cast<double>(data.size());
      const EkfTuningResult ekf =
          tune_ekf_noise(data, params, default_noise(MeasurementMode::kEkf, yaw_var), cfg.ekf_tuning);
      save_noise(ekf.noise, MeasurementMode::kEkf, tu_ekf_out.empty() ? tu_out + ".ekf" : tu_ekf_out);
      note("EKF mean NEES " + format_double(ekf.mean_nees));
      HekfConfig h;
      h.c = cfg.hekf_c;
      h.scale_wholesale = cfg.hekf_wholesale;
      h.noise = initial_hybrid_noise(ekf.noise, data, soft, cfg.hekf_tuning.warmup);
      std::vector<Eigen::MatrixXd> soft_out;
      for (const auto& d : data) {
        SoftSensorBank bank = soft.bank;
        soft_out.push_back(predict_sequence(bank, d.ann_inputs()));
      }
      const HekfTuningResult r = tune_full_confidence(h, data, soft_out, params, cfg.hekf_tuning);
      save_noise(r.noise, MeasurementMode::kHybrid, tu_out);
      note("HEKF tuning objective " + format_double(r.objective) + ", whiteness " + format_double(r.whiteness) +
           ", tracking " + format_double(r.tracking));
    } else if (*run) {
      KeyValueFile kv;
      kv.set("method", run_method);
      kv.set("data", run_data);
      kv.set("params", run_params.empty() ? "<built-in>" : run_params);
      if (!run_bank.empty()) kv.set("bank", run_bank);
      if (!run_noise.empty()) kv.set("noise", run_noise);
      if (run_method == "hekf") kv.set("c", run_c);
      if (run_tau) kv.set("tau", *run_tau);
      if (seed) kv.set("seed", std::to_string(*seed));
      echo("run", kv);
      const ManeuverDataset data = load_dataset(run_data);
      const VehicleParams params = params_or_default(run_params);
      if (run_method != "ekf" && run_bank.empty()) throw ConfigError("--bank is required for " + run_method);
      EstimateRun r;
      if (run_method == "ekf") {
        const NoiseConfig n = run_noise.empty() ? default_noise(MeasurementMode::kEkf)
                                                : load_noise(run_noise, MeasurementMode::kEkf);
        r = run_ekf(data, params, n);
      } else {
        const SoftSensorArtifacts soft = load_soft_sensor(run_bank);
        if (run_method == "ann") {
          r = run_ann(data, soft.bank);
        } else {
          HekfConfig h;
          h.c = run_c;
          if (!run_noise.empty()) h.noise = load_noise(run_noise, MeasurementMode::kHybrid);
          r = run_hekf(data, params, h, soft.bank, std::make_shared<const ConfidenceModel>(soft.confidence), {},
                       run_tau);
        }
      }
      if (run_out.empty()) {
        write_run_csv(r, std::cout);
      } else {
        save_run_csv(r, run_out);
      }
    } else if (*evaluate) {
      const ProtocolConfig cfg = protocol_config(ev_config, seed);
      echo("evaluate", cfg.to_key_values());
      (void)ev_all;
      const ProtocolResult r = run_protocol(cfg, ev_out, note);
      std::cout << r.report.to_table();
    }
  } catch (const ProtocolFailure& e) {
    std::cerr << "error: " << e.what() << std::endl;
    if (!e.partial().rows.empty()) std::cerr << e.partial().to_table();
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << msg << std::endl;
    return 1;
  }
  return 0;
}
