#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "abstain/apply.hpp"
#include "abstain/calibrate.hpp"
#include "abstain/forecast.hpp"
#include "abstain/risk.hpp"
#include "abstain/series.hpp"

namespace abstain {

struct UndefinedRiskError : std::runtime_error {
  UndefinedRiskError() : std::runtime_error("selective risk undefined: zero accepted steps") {}
};

/// Empirical selective risk: total squared error over accepted steps divided
/// by the total number of accepted steps. Throws UndefinedRiskError when
/// nothing is accepted (0/0).
inline double selective_risk(std::span<const SelectionDecision> decisions,
                             const std::vector<std::vector<double>>& losses) {
  if (decisions.size() != losses.size())
    throw std::invalid_argument("selective_risk: decision/loss count mismatch");
  double loss_sum = 0.0;
  long steps = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const SelectionDecision& d = decisions[i];
    if (!d.accepted()) continue;
    if (d.end > static_cast<int>(losses[i].size()))
      throw std::invalid_argument("selective_risk: losses missing for accepted steps");
    for (int t = d.start; t <= d.end; ++t) loss_sum += losses[i][static_cast<std::size_t>(t - 1)];
    steps += d.length();
  }
  if (steps == 0) throw UndefinedRiskError();
  return loss_sum / static_cast<double>(steps);
}

/// Mean accepted length divided by the horizon; in [0, 1].
inline double empirical_coverage(std::span<const SelectionDecision> decisions, int horizon) {
  if (decisions.empty()) throw std::invalid_argument("empirical_coverage: no decisions");
  if (horizon < 1) throw std::invalid_argument("empirical_coverage: horizon must be >= 1");
  double total = 0.0;
  for (const auto& d : decisions) total += d.length();
  return total / (static_cast<double>(decisions.size()) * horizon);
}

/// Constraint satisfaction indicator: coverage within eps below the target.
inline int consat(double coverage, double c, double eps) {
  if (eps < 0.0) throw std::invalid_argument("consat: eps must be >= 0");
  return coverage >= c - eps ? 1 : 0;
}

/// Per-series per-step squared errors of the point forecasts against the
/// realized futures.
inline std::vector<std::vector<double>> squared_losses(const std::vector<ForecastBundle>& bundles,
                                                       const std::vector<SeriesWindow>& windows) {
  if (bundles.size() != windows.size())
    throw std::invalid_argument("squared_losses: bundle/window count mismatch");
  std::vector<std::vector<double>> losses(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (!windows[i].future)
      throw std::invalid_argument("squared_losses: series '" + windows[i].id + "' has no future");
    const auto& future = *windows[i].future;
    if (static_cast<int>(future.size()) != bundles[i].horizon())
      throw std::invalid_argument("squared_losses: horizon mismatch for '" + windows[i].id + "'");
    losses[i].resize(future.size());
    for (std::size_t t = 0; t < future.size(); ++t) {
      const double r = future[t] - bundles[i].means[t];
      losses[i][t] = r * r;
    }
  }
  return losses;
}

struct EvalReport {
  std::string strategy;
  double c = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> selective_risk;  // empty = undefined (zero accepted steps)
  double coverage = 0.0;
  std::vector<std::pair<double, int>> consat;  // (eps, indicator) in grid order
  int n_test = 0;
};

namespace detail {

/// Shortest decimal that round-trips the double (what the JSON dumper emits).
inline std::string shortest(double v) { return nlohmann::json(v).dump(); }

inline std::string eps_column(double eps) {
  // two decimals for grid values like 0.10, %g otherwise
  const double scaled = eps * 100.0;
  if (std::abs(scaled - std::round(scaled)) < 1e-9) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", eps);
    return buf;
  }
  return shortest(eps);
}

}  // namespace detail

inline std::string report_csv_header(std::span<const double> eps_grid) {
  std::string h = "strategy,c,seed,selective_risk,empirical_coverage";
  for (double eps : eps_grid) h += ",consat_" + detail::eps_column(eps);
  h += ",n_test\n";
  return h;
}

inline std::string report_csv(std::span<const EvalReport> reports,
                              std::span<const double> eps_grid) {
  std::string out = report_csv_header(eps_grid);
  for (const auto& r : reports) {
    out += r.strategy + "," + detail::shortest(r.c) + "," + std::to_string(r.seed) + ",";
    out += r.selective_risk ? detail::shortest(*r.selective_risk) : std::string("undefined");
    out += "," + detail::shortest(r.coverage);
    for (const auto& [eps, ind] : r.consat) out += "," + std::to_string(ind);
    out += "," + std::to_string(r.n_test) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Strategies and the coverage sweep
// ---------------------------------------------------------------------------

enum class Strategy { full, partial, interval, accept_ch };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::full: return "full";
    case Strategy::partial: return "partial";
    case Strategy::interval: return "interval";
    case Strategy::accept_ch: return "accept-ch";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "full") return Strategy::full;
  if (s == "partial") return Strategy::partial;
  if (s == "interval") return Strategy::interval;
  if (s == "accept-ch") return Strategy::accept_ch;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

/// Calibrate one strategy at one coverage level on the calibration bundles.
/// Accept-cH needs no calibration and yields no policy.
inline std::optional<Policy> calibrate_strategy(Strategy strategy,
                                                const std::vector<ForecastBundle>& calib,
                                                const CoverageSpec& spec) {
  switch (strategy) {
    case Strategy::full: return Policy{calibrate_full(full_scores(calib), spec)};
    case Strategy::partial: return Policy{calibrate_lagrange(calib, spec, AbstainMode::partial)};
    case Strategy::interval: return Policy{calibrate_lagrange(calib, spec, AbstainMode::interval)};
    case Strategy::accept_ch: return std::nullopt;
  }
  return std::nullopt;
}

inline std::vector<SelectionDecision> decide_strategy(Strategy strategy,
                                                      const std::optional<Policy>& policy,
                                                      const std::vector<ForecastBundle>& test,
                                                      const CoverageSpec& spec,
                                                      SplitMix64& rng) {
  if (strategy == Strategy::accept_ch) {
    std::vector<SelectionDecision> out;
    out.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) out.push_back(decide_accept_ch(spec, rng));
    return out;
  }
  return apply_policy(*policy, test, rng);
}

inline EvalReport make_report(const std::string& strategy, double c, std::uint64_t seed,
                              std::span<const SelectionDecision> decisions,
                              const std::vector<std::vector<double>>& losses, int horizon,
                              std::span<const double> eps_grid) {
  EvalReport r;
  r.strategy = strategy;
  r.c = c;
  r.seed = seed;
  r.n_test = static_cast<int>(decisions.size());
  r.coverage = empirical_coverage(decisions, horizon);
  try {
    r.selective_risk = selective_risk(decisions, losses);
  } catch (const UndefinedRiskError&) {
    r.selective_risk = std::nullopt;
  }
  for (double eps : eps_grid) r.consat.emplace_back(eps, consat(r.coverage, c, eps));
  return r;
}

struct SweepOptions {
  std::vector<Strategy> strategies{Strategy::full, Strategy::partial, Strategy::interval,
                                   Strategy::accept_ch};
  std::vector<double> grid{0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  std::vector<double> eps_grid{0.01, 0.02, 0.05, 0.10};
  int lag = 8;
  std::string method = "two-stage";  // or "beta-nll"
  double beta = 0.5;
  int epochs = 200;
  double learning_rate = 0.1;
  double variance_floor = 1e-6;
  std::optional<double> epsilon_gamma;
};

/// One full experiment per seed over pre-split data: fit the forecaster on
/// the training split, calibrate every strategy at every coverage level on
/// the calibration split, and evaluate decisions on the test split. Reports
/// come back ordered by (strategy, c, seed); all randomness flows from the
/// given seeds through per-cell derived streams.
inline std::vector<EvalReport> sweep(const SplitData& splits, std::span<const std::uint64_t> seeds,
                                     const SweepOptions& opts) {
  if (splits.test.empty() || splits.calib.empty() || splits.train.empty())
    throw std::invalid_argument("sweep: empty split");
  if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  const int horizon = splits.train.front().future ? splits.train.front().future_length() : 0;
  if (horizon < 1) throw std::invalid_argument("sweep: training futures required");

  struct SeedArtifacts {
    std::vector<ForecastBundle> calib;
    std::vector<ForecastBundle> test;
    std::vector<std::vector<double>> losses;
  };
  std::vector<SeedArtifacts> per_seed;
  per_seed.reserve(seeds.size());
  for (const std::uint64_t seed : seeds) {
    LinearTwoHeadModel model;
    if (opts.method == "two-stage") {
      model = fit_two_stage(splits.train, opts.lag, horizon, opts.variance_floor);
    } else if (opts.method == "beta-nll") {
      BetaNllOptions bo;
      bo.beta = opts.beta;
      bo.epochs = opts.epochs;
      bo.learning_rate = opts.learning_rate;
      bo.seed = seed;
      bo.variance_floor = opts.variance_floor;
      model = fit_beta_nll(splits.train, opts.lag, horizon, bo);
    } else {
      throw std::invalid_argument("sweep: unknown method '" + opts.method + "'");
    }
    SeedArtifacts art;
    art.calib = predict_all(model, splits.calib);
    art.test = predict_all(model, splits.test);
    art.losses = squared_losses(art.test, splits.test);
    per_seed.push_back(std::move(art));
  }

  std::vector<EvalReport> reports;
  for (const Strategy strategy : opts.strategies)
    for (const double c : opts.grid)
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        const SeedArtifacts& art = per_seed[si];
        CoverageSpec spec{c, horizon, opts.epsilon_gamma};
        const std::optional<Policy> policy = calibrate_strategy(strategy, art.calib, spec);
        SplitMix64 rng(SplitMix64::derive(
            seeds[si], std::string(strategy_name(strategy)) + "/c=" + detail::shortest(c)));
        const auto decisions = decide_strategy(strategy, policy, art.test, spec, rng);
        reports.push_back(make_report(strategy_name(strategy), c, seeds[si], decisions,
                                      art.losses, horizon, opts.eps_grid));
      }
  return reports;
}

}  // namespace abstain
