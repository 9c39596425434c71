#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>

#include "hekf/errors.hpp"
#include "hekf/hybrid_filter.hpp"
#include "hekf/maneuver.hpp"
#include "hekf/tuning.hpp"
#include "support.hpp"

using namespace hekf;
using hekf::testing::max_rel_state_diff;

namespace {

ManeuverDataset test_maneuver(double duration = 30.0) {
  ManeuverSpec s;
  s.name = "hekf_test";
  s.kind = SteeringKind::kSine;
  s.amplitude = 0.2;
  s.speed_start = 8.0;
  s.speed_end = 14.0;
  s.duration = duration;
  s.loading = "partial_load_1";
  s.seed = 3;
  const auto loads = default_loading_states();
  return generate_maneuver(s, find_loading_state(loads, s.loading), TrailerBody{}, VehicleParams{}, SensorNoise{});
}

SoftSensorBank random_bank(const ManeuverDataset& d) {
  std::array<NarxNetwork, SoftSensorBank::kChannels> nets;
  for (int i = 0; i < SoftSensorBank::kChannels; ++i) {
    NarxConfig c;
    c.total_neurons = 5;
    NarxNetwork n(c);
    std::mt19937_64 rng(static_cast<std::uint64_t>(i + 1));
    n.initialize(rng);
    n.set_params(0.3 * n.params());
    nets[static_cast<std::size_t>(i)] = n;
  }
  Eigen::MatrixXd targets(d.rows(), kNumSoft);
  for (int c = 0; c < kNumSoft; ++c) targets.col(c) = d.truth.col(soft_channel_states()[static_cast<std::size_t>(c)]);
  return SoftSensorBank(std::make_shared<const Standardizer>(Standardizer::fit(d.ann_inputs())),
                        Standardizer::fit(targets), nets);
}

}  // namespace

TEST_CASE("covariance scaling") {
  Eigen::VectorXd d(6);
  d << 1e-5, 1e-4, 2e-4, 4e6, 5e6, 1e-4;
  const Eigen::MatrixXd R0 = d.asDiagonal();
  CHECK(scale_measurement_covariance(R0, 1.0, 1e4) == R0);
  const Eigen::MatrixXd z = scale_measurement_covariance(R0, 0.0, 1e4);
  CHECK(z(0, 0) == R0(0, 0));
  for (int i = 1; i < 6; ++i) CHECK(z(i, i) == (1e4 + 1.0) * R0(i, i));
  CHECK(covariance_scale_factor(0.5, 100.0) == 26.0);
  CHECK(scale_measurement_covariance(R0, 0.5, 100.0)(2, 2) == 26.0 * R0(2, 2));
  CHECK(scale_measurement_covariance(R0, 0.0, 1e4, true)(0, 0) == (1e4 + 1.0) * R0(0, 0));
  CHECK_THROWS_AS(covariance_scale_factor(1.1, 10.0), DomainError);
  CHECK_THROWS_AS(covariance_scale_factor(-0.1, 10.0), DomainError);
  const Eigen::LLT<Eigen::MatrixXd> llt(scale_measurement_covariance(R0, 0.3, 1e4));
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("zero confidence with huge c reduces to the EKF") {
  const ManeuverDataset d = test_maneuver();
  const VehicleParams p;
  HekfConfig h;
  h.c = 1e9;
  const NoiseConfig ekf{h.noise.Q, h.noise.R0.topLeftCorner(1, 1)};
  const EstimateRun e = run_ekf(d, p, ekf);
  SoftSensorBank bank = random_bank(d);
  const Eigen::MatrixXd soft = predict_sequence(bank, d.ann_inputs());
  const EstimateRun hk = run_hekf_fixed(d, p, h, soft, 0.0);
  CHECK(max_rel_state_diff(hk.mean, e.mean) < 1e-4);
}

TEST_CASE("full confidence with a tight soft R0 tracks the soft sensor") {
  const ManeuverDataset d = test_maneuver();
  HekfConfig h;
  for (int i = 1; i < 6; ++i) h.noise.R0(i, i) = 1e-10;
  SoftSensorBank bank = random_bank(d);
  const Eigen::MatrixXd soft = predict_sequence(bank, d.ann_inputs());
  const EstimateRun r = run_hekf_fixed(d, VehicleParams{}, h, soft, 1.0);
  double worst = 0.0;
  for (int c = 0; c < kNumSoft; ++c) {
    const Eigen::VectorXd est = r.mean.col(soft_channel_states()[static_cast<std::size_t>(c)]);
    worst = std::max(worst, (est - soft.col(c)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("full confidence equals the augmented-measurement EKF") {
  const ManeuverDataset d = test_maneuver(10.0);
  const VehicleParams p;
  const HekfConfig h;
  SoftSensorBank bank = random_bank(d);
  const Eigen::MatrixXd soft = predict_sequence(bank, d.ann_inputs());
  const EstimateRun r = run_hekf_fixed(d, p, h, soft, 1.0);

  ModelFilter f(p, d.dt, FilterInit{});
  Eigen::VectorXd y(6);
  for (Eigen::Index k = 0; k < d.rows(); ++k) {
    f.predict(d.measured(k, meas_col::kVx2), d.measured(k, meas_col::kFz2), h.noise.Q);
    y << d.measured(k, meas_col::kYawRate2), soft.row(k).transpose();
    f.correct(y, MeasurementMode::kHybrid, h.noise.R0);
    REQUIRE((f.belief().mean.transpose().array() == r.mean.row(k).array()).all());
  }
}

TEST_CASE("posterior variance of soft-measured states does not grow with tau") {
  const ManeuverDataset d = test_maneuver(20.0);
  const VehicleParams p;
  const HekfConfig h;
  SoftSensorBank bank = random_bank(d);
  const Eigen::MatrixXd soft = predict_sequence(bank, d.ann_inputs());
  const EstimateRun lo = run_hekf_fixed(d, p, h, soft, 0.3);
  const EstimateRun hi = run_hekf_fixed(d, p, h, soft, 0.7);
  int violations = 0;
  for (int s : soft_channel_states()) {
    for (Eigen::Index k = 0; k < d.rows(); ++k) {
      if (hi.variance(k, s) > lo.variance(k, s) * (1.0 + 1e-9)) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("small tau changes give small posterior changes") {
  const ManeuverDataset d = test_maneuver(20.0);
  const VehicleParams p;
  const HekfConfig h;
  SoftSensorBank bank = random_bank(d);
  const Eigen::MatrixXd soft = predict_sequence(bank, d.ann_inputs());
  const EstimateRun a = run_hekf_fixed(d, p, h, soft, 0.5);
  const EstimateRun b = run_hekf_fixed(d, p, h, soft, 0.5 + 1e-6);
  const EstimateRun c = run_hekf_fixed(d, p, h, soft, 0.5 + 1e-5);
  const double ab = max_rel_state_diff(a.mean, b.mean);
  const double ac = max_rel_state_diff(a.mean, c.mean);
  CHECK(ab < 1e-3);
  CHECK(ac < 20.0 * ab + 1e-12);
}

TEST_CASE("warm-up steps run at zero confidence") {
  const ManeuverDataset d = test_maneuver(5.0);
  SoftSensorBank bank = random_bank(d);
  auto conf = std::make_shared<const ConfidenceModel>(
      ConfidenceModel::build(d.ann_inputs(), bank.input_standardizer(), 25, 100.0));
  HybridFilter f(VehicleParams{}, d.dt, FilterInit{}, HekfConfig{}, bank, conf);
  for (Eigen::Index k = 0; k < 5; ++k) {
    const Eigen::Vector3d u(d.measured(k, meas_col::kVx2), d.measured(k, meas_col::kFz2),
                            d.measured(k, meas_col::kYawRate2));
    const HekfStepRecord rec = f.step(d.time[k], u);
    if (k < kWarmupSamples) {
      CHECK(rec.warmup);
      CHECK(rec.tau == 0.0);
    } else {
      CHECK_FALSE(rec.warmup);
      CHECK(rec.tau > 0.0);
    }
    CHECK(rec.tau >= 0.0);
    CHECK(rec.tau <= 1.0);
  }
}

TEST_CASE("run records and CSV rows") {
  const ManeuverDataset d = test_maneuver(3.0);
  const EstimateRun e = run_ekf(d, VehicleParams{}, default_noise(MeasurementMode::kEkf));
  CHECK(e.mean.rows() == d.rows());
  std::ostringstream out;
  write_run_csv(e, out);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == d.rows() + 1);
}

TEST_CASE("full-confidence tuning") {
  const ManeuverDataset d = test_maneuver(15.0);
  const VehicleParams p;
  SoftSensorBank bank = random_bank(d);
  // A soft sensor that reproduces the truth with small noise.
  Eigen::MatrixXd soft(d.rows(), kNumSoft);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::array<double, kNumSoft> sd = {0.002, 0.002, 300.0, 300.0, 0.003};
  for (int c = 0; c < kNumSoft; ++c) {
    for (Eigen::Index k = 0; k < d.rows(); ++k) {
      soft(k, c) = d.truth(k, soft_channel_states()[static_cast<std::size_t>(c)]) + sd[static_cast<std::size_t>(c)] * n01(rng);
    }
  }
  HekfConfig h;
  HekfTuningOptions opt;
  opt.passes = {{0.1, 10.0}};
  const HekfTuningResult a = tune_full_confidence(h, {d}, {soft}, p, opt);
  const HekfTuningResult b = tune_full_confidence(h, {d}, {soft}, p, opt);
  CHECK(a.noise.Q == b.noise.Q);
  CHECK(a.noise.R0 == b.noise.R0);
  CHECK(a.rmse_tuned[0] <= a.rmse_default[0]);

  // Re-running with the returned matrices reproduces the stability checks.
  HekfConfig tuned = h;
  tuned.noise = a.noise;
  const StabilityCheck s = check_stability(run_hekf_fixed(d, p, tuned, soft, 1.0), opt);
  CHECK(s.passed);
  CHECK(s.tracking == doctest::Approx(a.tracking));
}
