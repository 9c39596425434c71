#include "hekf/tuning.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "hekf/errors.hpp"
#include "hekf/parallel.hpp"

namespace hekf {

double static_yaw_rate_variance(const ManeuverDataset& data, double lead_in) {
  Eigen::Index n = 0;
  while (n < data.rows() && data.time[n] - data.time[0] < lead_in) ++n;
  if (n < 10) throw ConfigError("static segment too short for a variance estimate");
  const Eigen::VectorXd y = data.measured.col(meas_col::kYawRate2).head(n);
  return (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);
}

double mean_nees(const ManeuverDataset& data, const VehicleParams& params, const NoiseConfig& noise,
                 const FilterInit& init, Eigen::Index warmup) {
  ModelFilter f(params, data.dt, init);
  Eigen::VectorXd y(1);
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index k = 0; k < data.rows(); ++k) {
    f.predict(data.measured(k, meas_col::kVx2), data.measured(k, meas_col::kFz2), noise.Q);
    y[0] = data.measured(k, meas_col::kYawRate2);
    f.correct(y, MeasurementMode::kEkf, noise.R0);
    if (k < warmup) continue;
    sum += nees(f.belief(), data.truth.row(k).transpose());
    ++count;
  }
  return sum / static_cast<double>(std::max<Eigen::Index>(count, 1));
}

EkfTuningResult tune_ekf_noise(const std::vector<ManeuverDataset>& data, const VehicleParams& params,
                               const NoiseConfig& base, const EkfTuningOptions& options) {
  if (data.empty()) throw ConfigError("EKF tuning needs at least one maneuver");
  struct Candidate {
    double scale;
    double rw;
    double nees = std::numeric_limits<double>::infinity();
  };
  std::vector<Candidate> grid;
  for (double s : options.q_scales) {
    for (double rw : options.random_walk) grid.push_back({s, rw});
  }
  if (grid.empty()) throw ConfigError("EKF tuning grid is empty");
  const auto noise_of = [&](const Candidate& c) {
    NoiseConfig n = base;
    n.Q *= c.scale;
    n.Q(idx::kDelta1, idx::kDelta1) = c.rw;
    n.Q(idx::kLcog, idx::kLcog) = c.rw;
    return n;
  };
  parallel_for(grid.size(), [&](std::size_t i) {
    const NoiseConfig n = noise_of(grid[i]);
    double total = 0.0;
    try {
      for (const auto& d : data) total += mean_nees(d, params, n);
      grid[i].nees = total / static_cast<double>(data.size());
    } catch (const NumericalError&) {
      grid[i].nees = std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      grid[i].nees = std::numeric_limits<double>::infinity();
    }
  });
  std::size_t best = grid.size();
  double best_dev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i].nees) || grid[i].nees <= 0.0) continue;
    const double dev = std::abs(std::log(grid[i].nees / idx::kAugmented));
    if (dev < best_dev) {
      best_dev = dev;
      best = i;
    }
  }
  if (best == grid.size()) throw TuningError("EKF tuning: every candidate failed");
  EkfTuningResult r;
  r.noise = noise_of(grid[best]);
  r.q_scale = grid[best].scale;
  r.random_walk = grid[best].rw;
  r.mean_nees = grid[best].nees;
  return r;
}

StabilityCheck check_stability(const EstimateRun& run, const HekfTuningOptions& options) {
  StabilityCheck s;
  const Eigen::Index n = run.time.size() - options.warmup;
  if (n <= options.whiteness_lags + 1) throw ConfigError("stability check: run too short");
  const Eigen::VectorXd e = run.yaw_innovation.tail(n);
  const Eigen::VectorXd c = e.array() - e.mean();
  const double c0 = c.squaredNorm();
  for (int lag = 1; lag <= options.whiteness_lags; ++lag) {
    const double rho = c0 > 0.0 ? c.head(n - lag).dot(c.tail(n - lag)) / c0 : 0.0;
    s.whiteness = std::max(s.whiteness, std::abs(rho));
  }
  const auto& states = soft_channel_states();
  for (int ch = 0; ch < kNumSoft; ++ch) {
    const Eigen::VectorXd soft = run.soft.col(ch).tail(n);
    const Eigen::VectorXd est = run.mean.col(states[static_cast<std::size_t>(ch)]).tail(n);
    const double sd = std::sqrt((soft.array() - soft.mean()).square().mean());
    const double err = std::sqrt((est - soft).squaredNorm() / static_cast<double>(n));
    s.tracking = std::max(s.tracking, sd > 0.0 ? err / sd : 0.0);
  }
  s.passed = std::isfinite(s.whiteness) && std::isfinite(s.tracking) &&
             s.whiteness < options.whiteness_bound && s.tracking < options.tracking_bound;
  return s;
}

HekfTuningResult tune_full_confidence(const HekfConfig& config, const std::vector<ManeuverDataset>& data,
                                      const std::vector<Eigen::MatrixXd>& soft, const VehicleParams& params,
                                      const HekfTuningOptions& options) {
  config.validate();
  if (data.empty() || data.size() != soft.size()) {
    throw ConfigError("HEKF tuning: need one soft-output matrix per maneuver");
  }

  // Coordinates: Q groups, then the five soft R0 entries.
  const std::vector<std::vector<int>> q_groups = {{idx::kVy1, idx::kVy2},
                                                  {idx::kYawRate1, idx::kYawRate2},
                                                  {idx::kTheta},
                                                  {idx::kFy11, idx::kFy12, idx::kFy21, idx::kFy22, idx::kFy23},
                                                  {idx::kDelta1},
                                                  {idx::kLcog}};
  const std::size_t n_coords = q_groups.size() + kNumSoft;

  struct Evaluation {
    std::array<double, kNumReportQuantities> rmse{};
    StabilityCheck stability;
    bool ok = false;
  };
  int runs = 0;
  const auto evaluate = [&](const NoiseConfig& noise) {
    HekfConfig c = config;
    c.noise = noise;
    Evaluation ev;
    std::vector<Evaluation> per(data.size());
    try {
      parallel_for(data.size(), [&](std::size_t i) {
        const EstimateRun run = run_hekf_fixed(data[i], params, c, soft[i], 1.0);
        per[i].rmse = report_rmse(run.mean, data[i].truth, options.warmup);
        per[i].stability = check_stability(run, options);
      });
    } catch (const NumericalError&) {
      runs += static_cast<int>(data.size());
      return ev;
    } catch (const DomainError&) {
      runs += static_cast<int>(data.size());
      return ev;
    }
    runs += static_cast<int>(data.size());
    ev.ok = true;
    for (const auto& p : per) {
      for (int q = 0; q < kNumReportQuantities; ++q) ev.rmse[static_cast<std::size_t>(q)] += p.rmse[static_cast<std::size_t>(q)] / static_cast<double>(data.size());
      ev.stability.whiteness = std::max(ev.stability.whiteness, p.stability.whiteness);
      ev.stability.tracking = std::max(ev.stability.tracking, p.stability.tracking);
      ev.ok = ev.ok && std::isfinite(p.stability.whiteness) && std::isfinite(p.stability.tracking);
    }
    ev.stability.passed = ev.ok && ev.stability.whiteness < options.whiteness_bound &&
                          ev.stability.tracking < options.tracking_bound;
    return ev;
  };

  const Evaluation base = evaluate(config.noise);
  if (!base.ok) throw TuningError("HEKF tuning: the default configuration fails to run");
  const auto objective = [&](const Evaluation& ev) {
    double sum = 0.0;
    for (int q = 0; q < kNumReportQuantities; ++q) {
      const double b = base.rmse[static_cast<std::size_t>(q)];
      sum += b > 0.0 ? ev.rmse[static_cast<std::size_t>(q)] / b : 1.0;
    }
    return sum / kNumReportQuantities;
  };

  NoiseConfig best_noise = config.noise;
  Evaluation best = base;
  bool found_stable = base.stability.passed;
  double min_whiteness = base.stability.whiteness;
  double min_tracking = base.stability.tracking;
  for (const auto& factors : options.passes) {
    for (std::size_t coord = 0; coord < n_coords; ++coord) {
      for (double f : factors) {
        NoiseConfig trial = best_noise;
        if (coord < q_groups.size()) {
          for (int s : q_groups[coord]) trial.Q(s, s) *= f;
        } else {
          const auto ch = static_cast<Eigen::Index>(1 + coord - q_groups.size());
          trial.R0(ch, ch) *= f;
        }
        const Evaluation ev = evaluate(trial);
        if (ev.ok) {
          min_whiteness = std::min(min_whiteness, ev.stability.whiteness);
          min_tracking = std::min(min_tracking, ev.stability.tracking);
        }
        if (!ev.ok || !ev.stability.passed) continue;
        bool no_worse = true;
        for (int q = 0; q < kNumReportQuantities; ++q) {
          no_worse = no_worse && ev.rmse[static_cast<std::size_t>(q)] <= best.rmse[static_cast<std::size_t>(q)];
        }
        const bool better = objective(ev) < objective(best) || !found_stable;
        if ((no_worse || !found_stable) && better) {
          best = ev;
          best_noise = trial;
          found_stable = true;
        }
      }
    }
  }
  if (!found_stable) {
    throw TuningError("HEKF tuning: no candidate passed the whiteness and tracking checks (lowest whiteness " +
                      std::to_string(min_whiteness) + ", lowest tracking " + std::to_string(min_tracking) + ")");
  }
  HekfTuningResult r;
  r.noise = best_noise;
  r.rmse_default = base.rmse;
  r.rmse_tuned = best.rmse;
  r.objective = objective(best);
  r.whiteness = best.stability.whiteness;
  r.tracking = best.stability.tracking;
  r.runs = runs;
  return r;
}

}  // namespace hekf
