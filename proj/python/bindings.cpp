#include <filesystem>
#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hekf/errors.hpp"
#include "hekf/identification.hpp"
#include "hekf/maneuver.hpp"
#include "hekf/protocol.hpp"
#include "hekf/pso.hpp"
#include "hekf/soft_sensor_io.hpp"

namespace py = pybind11;
using namespace hekf;

namespace {

py::dict run_to_dict(const EstimateRun& r) {
  py::dict d;
  d["method"] = r.method;
  d["time"] = r.time;
  d["mean"] = r.mean;
  d["variance"] = r.variance;
  d["soft"] = r.soft;
  d["d_k"] = r.d_k;
  d["tau"] = r.tau;
  d["scale"] = r.scale;
  d["yaw_innovation"] = r.yaw_innovation;
  return d;
}

VehicleParams params_or_default(const std::optional<std::string>& path) {
  return path ? load_vehicle_params(*path) : VehicleParams{};
}

py::dict report_to_dict(const RmseReport& report) {
  py::dict d;
  d["methods"] = method_names();
  d["quantities"] = report_names();
  py::list rows;
  for (const auto& row : report.rows) {
    py::dict r;
    r["maneuver"] = row.maneuver;
    r["loading"] = row.loading;
    r["in_distribution"] = row.in_distribution;
    r["rmse"] = row.rmse;
    r["median_tau"] = row.median_tau;
    rows.append(r);
  }
  d["rows"] = rows;
  d["mean"] = report.mean.rmse;
  d["relative"] = report.relative;
  d["table"] = report.to_table();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hybrid ANN-aided EKF for truck-semitrailer state estimation";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<TuningError>(m, "TuningError", PyExc_RuntimeError);
  py::register_exception<IdentificationError>(m, "IdentificationError", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("state_names", [] { return state_names(); });
  m.def("report_names", [] { return report_names(); });
  m.def("ident_parameter_names", [] { return ident_parameter_names(); });

  py::class_<TireParams>(m, "TireParams")
      .def(py::init<>())
      .def_readwrite("C", &TireParams::C)
      .def_readwrite("D", &TireParams::D)
      .def_readwrite("c1", &TireParams::c1)
      .def_readwrite("c2", &TireParams::c2)
      .def_readwrite("l_relax", &TireParams::l_relax)
      .def("validate", &TireParams::validate);

  m.def("steady_tire_force", &mftm_steady_force, py::arg("alpha"), py::arg("fz"), py::arg("tire"),
        py::arg("mu_max") = VehicleParams{}.mu_max, "Steady-state lateral force of one axle [N].");
  m.def("covariance_scale_factor", &covariance_scale_factor, py::arg("tau"), py::arg("c"));
  m.def("confidence_from_distance", &confidence_from_distance, py::arg("d_k"), py::arg("d_max"));

  m.def("nominal_params", [] { return to_key_values(VehicleParams{}).to_string(); },
        "Built-in vehicle parameters in key = value form.");

  m.def(
      "simulate_maneuver",
      [](const std::string& path, const std::string& kind, double amplitude, double duration,
         const std::string& loading, double speed_start, double speed_end, std::uint64_t seed) {
        ManeuverSpec s;
        s.name = std::filesystem::path(path).stem().string();
        s.kind = steering_kind_from(kind);
        s.amplitude = amplitude;
        s.duration = duration;
        s.loading = loading;
        s.speed_start = speed_start;
        s.speed_end = speed_end;
        s.seed = seed;
        const auto loads = default_loading_states();
        py::gil_scoped_release release;
        save_dataset(generate_maneuver(s, find_loading_state(loads, loading), TrailerBody{}, VehicleParams{},
                                       SensorNoise{}),
                     path);
      },
      py::arg("path"), py::arg("kind") = "sine", py::arg("amplitude") = 0.1, py::arg("duration") = 20.0,
      py::arg("loading") = "full_load", py::arg("speed_start") = 10.0, py::arg("speed_end") = 15.0,
      py::arg("seed") = 1, "Simulates one maneuver with the built-in vehicle and writes it as a dataset CSV.");

  m.def(
      "load_dataset",
      [](const std::string& path) {
        const ManeuverDataset d = load_dataset(path);
        py::dict out;
        out["dt"] = d.dt;
        out["time"] = d.time;
        out["truth"] = d.truth;
        out["inputs"] = d.inputs;
        out["measured"] = d.measured;
        py::dict meta;
        for (const auto& [k, v] : d.metadata) meta[py::str(k)] = v;
        out["metadata"] = meta;
        return out;
      },
      py::arg("path"));

  m.def(
      "run",
      [](const std::string& method, const std::string& data_path, std::optional<std::string> params,
         std::optional<std::string> bank, std::optional<std::string> noise, double c, std::optional<double> tau) {
        const ManeuverDataset data = load_dataset(data_path);
        const VehicleParams p = params_or_default(params);
        EstimateRun r;
        {
          py::gil_scoped_release release;
          if (method == "ekf") {
            r = run_ekf(data, p, noise ? load_noise(*noise, MeasurementMode::kEkf) : default_noise(MeasurementMode::kEkf));
          } else if (method == "ann" || method == "hekf") {
            if (!bank) throw ConfigError("a soft-sensor file is required for " + method);
            const SoftSensorArtifacts soft = load_soft_sensor(*bank);
            if (method == "ann") {
              r = run_ann(data, soft.bank);
            } else {
              HekfConfig h;
              h.c = c;
              if (noise) h.noise = load_noise(*noise, MeasurementMode::kHybrid);
              r = run_hekf(data, p, h, soft.bank, std::make_shared<const ConfidenceModel>(soft.confidence), {}, tau);
            }
          } else {
            throw ConfigError("unknown method '" + method + "' (ekf, ann, hekf)");
          }
        }
        return run_to_dict(r);
      },
      py::arg("method"), py::arg("data"), py::arg("params") = py::none(), py::arg("bank") = py::none(),
      py::arg("noise") = py::none(), py::arg("c") = HekfConfig{}.c, py::arg("tau") = py::none(),
      "Runs one estimator over a dataset file and returns its step records.");

  m.def(
      "pso_minimize",
      [](const std::function<double(const Eigen::VectorXd&)>& cost, const Eigen::VectorXd& lower,
         const Eigen::VectorXd& upper, int swarm_size, int iterations, std::uint64_t seed) {
        PsoConfig c;
        c.lower = lower;
        c.upper = upper;
        c.swarm_size = swarm_size;
        c.iterations = iterations;
        c.seed = seed;
        PsoResult r;
        {
          py::gil_scoped_release release;
          r = pso_minimize(
              [&](const Eigen::VectorXd& x) {
                py::gil_scoped_acquire acquire;
                return cost(x);
              },
              c);
        }
        py::dict d;
        d["best"] = r.best;
        d["best_cost"] = r.best_cost;
        d["history"] = r.history;
        d["evaluations"] = r.evaluations;
        return d;
      },
      py::arg("cost"), py::arg("lower"), py::arg("upper"), py::arg("swarm_size") = PsoConfig{}.swarm_size,
      py::arg("iterations") = PsoConfig{}.iterations, py::arg("seed") = PsoConfig{}.seed);

  m.def(
      "evaluate",
      [](const std::string& config_path, const std::string& out_dir) {
        const ProtocolConfig cfg = ProtocolConfig::load(config_path);
        ProtocolResult r;
        {
          py::gil_scoped_release release;
          r = run_protocol(cfg, out_dir);
        }
        return report_to_dict(r.report);
      },
      py::arg("config"), py::arg("out"), "Full protocol; returns the RMSE report.");
}
