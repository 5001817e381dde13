#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/calibrate.hpp"
#include "abstain/risk.hpp"

namespace abstain {

struct EnumerationBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Integer step counts are compared against the real target c*m*H with a tiny
// slack so products like 0.7*10 cannot miss an exactly-integer target.
constexpr double kFeasibilityEps = 1e-9;

inline void check_budget(double combinations, double max_enum, const char* what) {
  if (!(combinations <= max_enum))
    throw EnumerationBudgetError(std::string(what) + ": enumeration needs " +
                                 std::to_string(combinations) + " combinations, budget is " +
                                 std::to_string(max_enum));
}

}  // namespace detail

/// Exhaustive optimum of full abstention over m series: the feasible accept
/// subsets A with |A|*H >= c*m*H, minimizing (sum of accepted total risks) /
/// (|A|*H). Returns the minimum risk and one witness subset.
struct SubsetOracleResult {
  double risk = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> accepted;
};

inline SubsetOracleResult oracle_full(std::span<const double> total_risks, double c, int horizon,
                                      double max_enum = 1 << 20) {
  const std::size_t m = total_risks.size();
  if (m == 0) throw std::invalid_argument("oracle_full: no series");
  if (!(c > 0.0) || c > 1.0) throw std::invalid_argument("oracle_full: c must be in (0, 1]");
  detail::check_budget(std::pow(2.0, static_cast<double>(m)), max_enum, "oracle_full");

  const double target = c * static_cast<double>(m) * horizon;
  SubsetOracleResult best;
  for (std::uint64_t mask = 1; mask < (1ULL << m); ++mask) {
    const int count = __builtin_popcountll(mask);
    const double steps = static_cast<double>(count) * horizon;
    if (steps + detail::kFeasibilityEps < target) continue;
    double risk_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1ULL << i)) risk_sum += total_risks[i];
    const double risk = risk_sum / steps;
    if (risk < best.risk) {
      best.risk = risk;
      best.accepted.clear();
      for (std::size_t i = 0; i < m; ++i)
        if (mask & (1ULL << i)) best.accepted.push_back(i);
    }
  }
  if (best.accepted.empty() && !(best.risk < std::numeric_limits<double>::infinity()))
    throw std::invalid_argument("oracle_full: no feasible subset");
  return best;
}

/// Exhaustive optimum of partial abstention: end steps (e_1..e_m) in
/// {0..H}^m with sum(e) >= c*m*H, minimizing total prefix risk / total steps.
struct PrefixOracleResult {
  double risk = std::numeric_limits<double>::infinity();
  std::vector<int> ends;
};

inline PrefixOracleResult oracle_partial(std::span<const RiskProfile> profiles, double c,
                                         int horizon, double max_enum = 1e6) {
  const std::size_t m = profiles.size();
  if (m == 0) throw std::invalid_argument("oracle_partial: no series");
  detail::check_budget(std::pow(static_cast<double>(horizon) + 1.0, static_cast<double>(m)),
                       max_enum, "oracle_partial");

  const double target = c * static_cast<double>(m) * horizon;
  PrefixOracleResult best;
  std::vector<int> ends(m, 0);
  while (true) {
    int total_steps = 0;
    for (int e : ends) total_steps += e;
    if (total_steps > 0 &&
        static_cast<double>(total_steps) + detail::kFeasibilityEps >= target) {
      double risk_sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) risk_sum += profiles[i].prefix(ends[i]);
      const double risk = risk_sum / total_steps;
      if (risk < best.risk) {
        best.risk = risk;
        best.ends = ends;
      }
    }
    // odometer increment over {0..H}^m
    std::size_t pos = 0;
    while (pos < m && ends[pos] == horizon) ends[pos++] = 0;
    if (pos == m) break;
    ++ends[pos];
  }
  if (best.ends.empty()) throw std::invalid_argument("oracle_partial: no feasible assignment");
  return best;
}

/// Exhaustive optimum of interval abstention: per-series choice of any
/// contiguous window (or rejection) with total length >= c*m*H, minimizing
/// total accepted risk / total accepted length.
struct IntervalOracleResult {
  double risk = std::numeric_limits<double>::infinity();
  std::vector<SelectionDecision> choices;
};

inline IntervalOracleResult oracle_interval(std::span<const RiskProfile> profiles, double c,
                                            int horizon, double max_enum = 1e6) {
  const std::size_t m = profiles.size();
  if (m == 0) throw std::invalid_argument("oracle_interval: no series");
  const double per_series =
      1.0 + static_cast<double>(horizon) * (static_cast<double>(horizon) + 1.0) / 2.0;
  detail::check_budget(std::pow(per_series, static_cast<double>(m)), max_enum,
                       "oracle_interval");

  // flat per-series choice table: rejection first, then all windows
  std::vector<SelectionDecision> table;
  table.push_back(SelectionDecision::reject());
  for (int s = 1; s <= horizon; ++s)
    for (int e = s; e <= horizon; ++e) table.push_back(SelectionDecision{s, e});

  const double target = c * static_cast<double>(m) * horizon;
  IntervalOracleResult best;
  std::vector<std::size_t> pick(m, 0);
  while (true) {
    int total_len = 0;
    for (std::size_t i = 0; i < m; ++i) total_len += table[pick[i]].length();
    if (total_len > 0 && static_cast<double>(total_len) + detail::kFeasibilityEps >= target) {
      double risk_sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const SelectionDecision& d = table[pick[i]];
        if (d.accepted()) risk_sum += profiles[i].interval_risk(d.start, d.end);
      }
      const double risk = risk_sum / total_len;
      if (risk < best.risk) {
        best.risk = risk;
        best.choices.assign(m, SelectionDecision::reject());
        for (std::size_t i = 0; i < m; ++i) best.choices[i] = table[pick[i]];
      }
    }
    std::size_t pos = 0;
    while (pos < m && pick[pos] == table.size() - 1) pick[pos++] = 0;
    if (pos == m) break;
    ++pick[pos];
  }
  if (best.choices.empty()) throw std::invalid_argument("oracle_interval: no feasible assignment");
  return best;
}

enum class OracleMode { full, partial, interval };

/// Verify the ratio/linearized equivalence on one instance: with lambda* the
/// exhaustive optimal ratio, the same assignment must minimize
/// N(e) - lambda* * D(e) over the feasible set, and that minimum must be 0.
inline bool check_dinkelbach(std::span<const RiskProfile> profiles, double c, int horizon,
                             OracleMode mode, double max_enum = 1e6) {
  const std::size_t m = profiles.size();
  if (m == 0) throw std::invalid_argument("check_dinkelbach: no series");
  const double target = c * static_cast<double>(m) * horizon;

  // per-series choice tables (risk, length)
  std::vector<std::vector<std::pair<double, int>>> choices(m);
  for (std::size_t i = 0; i < m; ++i) {
    choices[i].push_back({0.0, 0});
    switch (mode) {
      case OracleMode::full:
        choices[i].push_back({profiles[i].total(), horizon});
        break;
      case OracleMode::partial:
        for (int e = 1; e <= horizon; ++e) choices[i].push_back({profiles[i].prefix(e), e});
        break;
      case OracleMode::interval:
        for (int s = 1; s <= horizon; ++s)
          for (int e = s; e <= horizon; ++e)
            choices[i].push_back({profiles[i].interval_risk(s, e), e - s + 1});
        break;
    }
  }
  double combos = 1.0;
  for (const auto& ch : choices) combos *= static_cast<double>(ch.size());
  detail::check_budget(combos, max_enum, "check_dinkelbach");

  double best_ratio = std::numeric_limits<double>::infinity();
  double scale = 0.0;
  std::vector<std::size_t> pick(m, 0), best_pick;
  auto for_each_assignment = [&](auto&& visit) {
    std::fill(pick.begin(), pick.end(), 0);
    while (true) {
      double n = 0.0;
      int d = 0;
      for (std::size_t i = 0; i < m; ++i) {
        n += choices[i][pick[i]].first;
        d += choices[i][pick[i]].second;
      }
      if (d > 0 && static_cast<double>(d) + detail::kFeasibilityEps >= target) visit(n, d);
      std::size_t pos = 0;
      while (pos < m && pick[pos] == choices[pos].size() - 1) pick[pos++] = 0;
      if (pos == m) return;
      ++pick[pos];
    }
  };

  for_each_assignment([&](double n, int d) {
    scale = std::max(scale, n);
    const double ratio = n / d;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best_pick = pick;
    }
  });
  if (best_pick.empty()) throw std::invalid_argument("check_dinkelbach: no feasible assignment");

  double linear_min = std::numeric_limits<double>::infinity();
  for_each_assignment([&](double n, int d) {
    linear_min = std::min(linear_min, n - best_ratio * d);
  });

  double n_star = 0.0;
  int d_star = 0;
  for (std::size_t i = 0; i < m; ++i) {
    n_star += choices[i][best_pick[i]].first;
    d_star += choices[i][best_pick[i]].second;
  }
  const double value_at_star = n_star - best_ratio * d_star;
  const double tol = 1e-9 * std::max(1.0, scale);
  return linear_min >= -tol && value_at_star <= linear_min + tol;
}

// ---------------------------------------------------------------------------
// Analytic expected selective risk of calibrated policies (no sampling)
// ---------------------------------------------------------------------------

/// Expected selective risk of a full policy over a score set whose true
/// per-series total risks are given: each series is accepted with
/// probability 1, kappa, or 0 depending on its score against tau.
inline double expected_risk_full(const FullPolicy& policy, std::span<const double> scores,
                                 std::span<const double> total_risks, int horizon) {
  if (scores.size() != total_risks.size())
    throw std::invalid_argument("expected_risk_full: size mismatch");
  double risk_sum = 0.0, accept_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double a = 0.0;
    if (scores[i] < policy.tau)
      a = 1.0;
    else if (scores[i] == policy.tau)
      a = policy.kappa;
    risk_sum += a * total_risks[i];
    accept_sum += a;
  }
  if (accept_sum <= 0.0) throw std::invalid_argument("expected_risk_full: zero acceptance");
  return risk_sum / (accept_sum * horizon);
}

/// Expected selective risk of a partial/interval policy on its calibration
/// profiles: closed-form mixture over the two step rewards.
inline double expected_risk_lagrange(const LagrangePolicy& policy,
                                     std::span<const RiskProfile> profiles) {
  if (profiles.empty()) throw std::invalid_argument("expected_risk_lagrange: no profiles");
  auto totals = [&](double gamma) {
    double risk_sum = 0.0;
    double len_sum = 0.0;
    for (const auto& prof : profiles) {
      if (policy.mode == AbstainMode::partial) {
        const int e = select_end_partial(prof, gamma);
        risk_sum += prof.prefix(e);
        len_sum += e;
      } else {
        const SelectionDecision d = select_interval(prof, gamma);
        if (d.accepted()) risk_sum += prof.interval_risk(d.start, d.end);
        len_sum += d.length();
      }
    }
    return std::pair<double, double>{risk_sum, len_sum};
  };
  const auto [n_low, d_low] = totals(policy.gamma_low);
  const auto [n_high, d_high] = totals(policy.gamma_high);
  const double numer = policy.p * n_low + (1.0 - policy.p) * n_high;
  const double denom = policy.p * d_low + (1.0 - policy.p) * d_high;
  if (denom <= 0.0) throw std::invalid_argument("expected_risk_lagrange: zero expected length");
  return numer / denom;
}

}  // namespace abstain
