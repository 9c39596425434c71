#include <cmath>
#include <filesystem>
#include <sstream>

#include <doctest.h>

#include "hekf/dataset.hpp"
#include "hekf/errors.hpp"
#include "hekf/maneuver.hpp"
#include "hekf/metrics.hpp"
#include "hekf/protocol.hpp"

using namespace hekf;

namespace {

ManeuverSpec spec(SteeringKind kind, double amplitude, double duration, std::uint64_t seed = 1) {
  ManeuverSpec s;
  s.name = "datagen";
  s.kind = kind;
  s.amplitude = amplitude;
  s.speed_start = 10.0;
  s.speed_end = 15.0;
  s.duration = duration;
  s.loading = "full_load";
  s.seed = seed;
  return s;
}

ManeuverDataset make(const ManeuverSpec& s, const SensorNoise& noise = {}) {
  return generate_maneuver(s, find_loading_state(default_loading_states(), s.loading), TrailerBody{},
                           VehicleParams{}, noise);
}

double variance(const Eigen::VectorXd& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("straight driving has no articulation") {
  const ManeuverDataset d = make(spec(SteeringKind::kSine, 0.0, 10.0));
  CHECK(d.truth.col(idx::kTheta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generation is seed-deterministic") {
  const ManeuverSpec s = spec(SteeringKind::kStep, 0.2, 12.0, 4);
  std::ostringstream a, b, c;
  write_dataset(make(s), a);
  write_dataset(make(s), b);
  CHECK(a.str() == b.str());
  ManeuverSpec other = s;
  other.seed = 5;
  write_dataset(make(other), c);
  CHECK(a.str() != c.str());
}

TEST_CASE("sensor noise has the configured variance") {
  const ManeuverDataset d = make(spec(SteeringKind::kRamp, 0.2, 120.0, 6));
  REQUIRE(d.rows() >= 10000);
  const SensorNoise n;
  const Eigen::VectorXd e_vx = d.measured.col(meas_col::kVx2) - d.inputs.col(input_col::kVx2);
  const Eigen::VectorXd e_yaw = d.measured.col(meas_col::kYawRate2) - d.truth.col(idx::kYawRate2);
  const Eigen::VectorXd e_fz = d.measured.col(meas_col::kFz2) - d.inputs.col(input_col::kFz2);
  CHECK(variance(e_vx) == doctest::Approx(n.vx2 * n.vx2).epsilon(0.05));
  CHECK(variance(e_yaw) == doctest::Approx(n.yaw_rate2 * n.yaw_rate2).epsilon(0.05));
  CHECK(variance(e_fz) == doctest::Approx(n.fz2 * n.fz2).epsilon(0.05));
}

TEST_CASE("wheel-speed yaw rate") {
  SensorNoise n;
  n.wheel_speed_yaw = true;
  const ManeuverDataset d = make(spec(SteeringKind::kSine, 0.2, 120.0, 7), n);
  const Eigen::VectorXd e = d.measured.col(meas_col::kYawRate2) - d.truth.col(idx::kYawRate2);
  // Difference of two wheel speeds over the track width.
  const double expected = 2.0 * n.wheel_speed * n.wheel_speed / (n.track_width * n.track_width);
  CHECK(variance(e) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("dataset CSV round trip") {
  const ManeuverDataset d = make(spec(SteeringKind::kSine, 0.25, 6.0, 2));
  std::ostringstream first;
  write_dataset(d, first);
  std::istringstream in(first.str());
  const ManeuverDataset r = read_dataset(in);
  std::ostringstream second;
  write_dataset(r, second);
  CHECK(first.str() == second.str());
  CHECK(r.meta("seed") == d.meta("seed"));
  for (Eigen::Index k = 0; k < d.rows(); k += 37) {
    for (int c = 0; c < idx::kAugmented; ++c) CHECK(r.truth(k, c) == quantize_sig9(d.truth(k, c)));
  }
  std::istringstream bad("# dt = 0.01\ntime,foo\n0,1\n");
  CHECK_THROWS_AS(read_dataset(bad), ConfigError);
}

TEST_CASE("loading states follow the static model") {
  const TrailerBody body;
  const VehicleParams p;
  const auto loads = default_loading_states();
  for (const auto& l : loads) {
    const double fz2 = loaded_fz2(l, body, p);
    const double m2 = semitrailer_mass(fz2, loaded_cog(l, body), p.l_agg, p.g);
    CHECK(m2 == doctest::Approx(body.unladen_mass + l.payload).epsilon(1e-12));
  }
  const auto& p1 = find_loading_state(loads, "partial_load_1");
  const auto& p2 = find_loading_state(loads, "partial_load_2");
  CHECK(p1.payload == p2.payload);
  CHECK(p1.payload_position != p2.payload_position);
  CHECK(std::abs(loaded_fz2(p1, body, p) - loaded_fz2(p2, body, p)) > 1e4);
  const ManeuverDataset d = make(spec(SteeringKind::kSine, 0.1, 4.0));
  CHECK(d.inputs(0, input_col::kFz2) == doctest::Approx(loaded_fz2(find_loading_state(loads, "full_load"), body, p)));
  CHECK_THROWS_AS(find_loading_state(loads, "nope"), ConfigError);
}

TEST_CASE("maneuver limits") {
  ManeuverSpec s = spec(SteeringKind::kSine, 0.6, 10.0);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec(SteeringKind::kSine, 0.1, 10.0);
  s.speed_end = 25.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec(SteeringKind::kStep, 0.5, 10.0);
  const auto prof = steering_profile(s, 0.5, 0.01, 1000);
  for (double v : prof) CHECK(std::abs(v) <= 0.5 + 1e-12);
}

TEST_CASE("RMSE") {
  Eigen::VectorXd t(4);
  t << 1.0, 2.0, 3.0, 4.0;
  CHECK(rmse(t, t) == 0.0);
  CHECK(rmse(t.array() + 0.3, t) == doctest::Approx(0.3));
  Eigen::VectorXd e(4);
  e << 2.0, 1.0, 5.0, 4.0;  // errors 1, -1, 2, 0
  CHECK(rmse(e, t) == doctest::Approx(std::sqrt(6.0 / 4.0)).epsilon(1e-15));
  CHECK(rmse(e, t, 2) == doctest::Approx(std::sqrt(4.0 / 2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(rmse(e.head(3), t), ConfigError);

  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(4, idx::kAugmented);
  Eigen::MatrixXd est = truth;
  est.col(idx::kFy21).setConstant(1500.0);
  est.col(idx::kTheta).setConstant(0.01);
  const auto r = report_rmse(est, truth, 0);
  CHECK(r[0] == doctest::Approx(0.01));
  CHECK(r[1] == doctest::Approx(1.5));
  CHECK(r[2] == 0.0);
}

TEST_CASE("report shape") {
  RmseReport rep;
  for (int i = 0; i < 4; ++i) {
    ReportRow row;
    row.maneuver = "m" + std::to_string(i);
    row.loading = "l";
    row.in_distribution = i < 3;
    for (int m = 0; m < kNumMethods; ++m) {
      for (int q = 0; q < kNumReportQuantities; ++q) row.rmse[static_cast<std::size_t>(m)][static_cast<std::size_t>(q)] = 1.0 + m + i;
    }
    rep.rows.push_back(row);
  }
  rep.finalize();
  CHECK(rep.mean.rmse[0][0] == doctest::Approx(2.5));
  CHECK(rep.relative[2][0] == 1.0);
  CHECK(rep.relative[0][0] == doctest::Approx(2.5 / 4.5));

  std::istringstream csv(rep.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "maneuver,loading,distribution,method,theta,fy21,fy23,delta1");
  int data_rows = 0;
  int relative_rows = 0;
  while (std::getline(csv, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 3 + kNumReportQuantities);
    if (line.rfind("relative_mean", 0) == 0) {
      ++relative_rows;
    } else {
      ++data_rows;
    }
  }
  CHECK(data_rows == kNumMethods * 5);
  CHECK(relative_rows == kNumMethods);
}

TEST_CASE("protocol configuration") {
  ProtocolConfig c;
  c.validate();
  CHECK(evaluation_maneuvers(c).size() == 4);
  CHECK(evaluation_maneuvers(c).back().loading == "partial_load_2");
  for (const auto& s : training_maneuvers(c)) CHECK(s.loading != "partial_load_2");
  const ProtocolConfig back = ProtocolConfig::from(KeyValueFile::parse(c.to_key_values().to_string()));
  CHECK(back.to_key_values().to_string() == c.to_key_values().to_string());
  CHECK_THROWS_AS(ProtocolConfig::from(KeyValueFile::parse("seed = 1\nwhat = 2\n")), ConfigError);
  CHECK_THROWS_AS(ProtocolConfig::from(KeyValueFile::parse("maneuvers.training_loads = partial_load_2\n")),
                  ConfigError);
}
