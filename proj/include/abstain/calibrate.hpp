#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "abstain/format.hpp"
#include "abstain/risk.hpp"
#include "abstain/series.hpp"

namespace abstain {

/// Target coverage for a calibration run: the policy must forecast an
/// expected fraction c of the H horizon steps. epsilon_gamma is the absolute
/// stop width of the bracket search; when unset it resolves to 1e-9 times
/// the initial search upper bound.
struct CoverageSpec {
  double c = 1.0;
  int horizon = 1;
  std::optional<double> epsilon_gamma;

  void validate() const {
    if (!(c > 0.0) || c > 1.0) throw std::invalid_argument("CoverageSpec: c must be in (0, 1]");
    if (horizon < 1) throw std::invalid_argument("CoverageSpec: horizon must be >= 1");
    if (epsilon_gamma && !(*epsilon_gamma > 0.0))
      throw std::invalid_argument("CoverageSpec: epsilon_gamma must be > 0");
  }
};

/// All-or-nothing abstention policy: accept the whole horizon when the
/// series score falls below tau, randomize with probability kappa on a tie,
/// reject above. Calibrated so the expected acceptance rate on the
/// calibration scores is exactly c.
struct FullPolicy {
  double tau = 0.0;
  double kappa = 0.0;
  double c = 1.0;
};

enum class AbstainMode { partial, interval };

inline const char* mode_name(AbstainMode m) {
  return m == AbstainMode::partial ? "partial" : "interval";
}

inline AbstainMode parse_mode(const std::string& s) {
  if (s == "partial") return AbstainMode::partial;
  if (s == "interval") return AbstainMode::interval;
  throw std::invalid_argument("unknown abstention mode '" + s + "'");
}

/// Randomized step-reward policy for partial (prefix) or interval
/// abstention: apply reward gamma_low with probability p and gamma_high with
/// probability 1-p. The bracket is calibrated so the expected accepted
/// length on the calibration set equals c*H exactly.
struct LagrangePolicy {
  AbstainMode mode = AbstainMode::partial;
  double gamma_low = 0.0;
  double gamma_high = 0.0;
  double p = 1.0;
  double c = 1.0;
};

using Policy = std::variant<FullPolicy, LagrangePolicy>;

// ---------------------------------------------------------------------------
// Full abstention
// ---------------------------------------------------------------------------

/// Per-series selection score: total estimated conditional risk over the
/// horizon (the sum of the variance estimates).
inline std::vector<double> full_scores(const std::vector<ForecastBundle>& bundles) {
  if (bundles.empty()) throw std::invalid_argument("full_scores: no bundles");
  const int horizon = bundles.front().horizon();
  std::vector<double> scores;
  scores.reserve(bundles.size());
  for (const auto& b : bundles) {
    if (b.horizon() != horizon)
      throw std::invalid_argument("full_scores: inconsistent horizons across bundles");
    double s = 0.0;
    for (double v : b.variances) s += v;
    scores.push_back(s);
  }
  return scores;
}

/// Empirical threshold policy. tau is the smallest value whose strictly-below
/// mass reaches c (the ceil(c*m)-th order statistic of the scores); kappa
/// redistributes the remaining mass over the scores tied with tau so the
/// expected acceptance rate is exactly c. c == 1 yields an accept-everything
/// sentinel with tau = +infinity.
inline FullPolicy calibrate_full(std::vector<double> scores, const CoverageSpec& spec) {
  spec.validate();
  if (scores.empty()) throw std::invalid_argument("calibrate_full: no scores");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("calibrate_full: non-finite score");

  FullPolicy policy;
  policy.c = spec.c;
  if (spec.c == 1.0) {
    policy.tau = std::numeric_limits<double>::infinity();
    policy.kappa = 0.0;
    return policy;
  }

  std::sort(scores.begin(), scores.end());
  const auto m = static_cast<double>(scores.size());
  auto k = static_cast<std::size_t>(std::ceil(spec.c * m));
  k = std::clamp<std::size_t>(k, 1, scores.size());
  policy.tau = scores[k - 1];

  const auto lo = std::lower_bound(scores.begin(), scores.end(), policy.tau);
  const auto hi = std::upper_bound(scores.begin(), scores.end(), policy.tau);
  const double count_less = static_cast<double>(lo - scores.begin());
  const double count_eq = static_cast<double>(hi - lo);
  policy.kappa = std::clamp((spec.c * m - count_less) / count_eq, 0.0, 1.0);
  return policy;
}

/// Expected acceptance rate of a full policy over a score set (analytic, no
/// sampling): P[S < tau] + kappa * P[S == tau].
inline double acceptance_probability(const FullPolicy& policy, std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("acceptance_probability: no scores");
  double less = 0.0, eq = 0.0;
  for (double s : scores) {
    if (s < policy.tau)
      less += 1.0;
    else if (s == policy.tau)
      eq += 1.0;
  }
  return (less + policy.kappa * eq) / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------
// Partial / interval selection at a fixed step reward
// ---------------------------------------------------------------------------

/// Smallest end step e in [0, H] minimizing cumulative_risk(1..e) - gamma*e.
inline int select_end_partial(const RiskProfile& profile, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("select_end_partial: gamma must be >= 0");
  int best_e = 0;
  double best = 0.0;  // prefix(0) - gamma*0
  for (int e = 1; e <= profile.horizon(); ++e) {
    const double objective = profile.prefix(e) - gamma * e;
    if (objective < best) {
      best = objective;
      best_e = e;
    }
  }
  return best_e;
}

/// Best contiguous window under reward gamma: for each length h take the
/// minimum-risk start, then pick the smallest length minimizing
/// window_risk - gamma*h. Length 0 (reject) has cost 0 and is encoded (1,0).
inline SelectionDecision select_interval(const RiskProfile& profile, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("select_interval: gamma must be >= 0");
  SelectionDecision best = SelectionDecision::reject();
  double best_cost = 0.0;
  for (int h = 1; h <= profile.horizon(); ++h) {
    const int s = profile.best_start_for_length(h);
    const double cost = profile.interval_risk(s, s + h - 1) - gamma * h;
    if (cost < best_cost) {
      best_cost = cost;
      best = SelectionDecision{s, s + h - 1};
    }
  }
  return best;
}

inline int selected_length(const RiskProfile& profile, double gamma, AbstainMode mode) {
  return mode == AbstainMode::partial ? select_end_partial(profile, gamma)
                                      : select_interval(profile, gamma).length();
}

/// Mean accepted length over a set of profiles at a fixed reward gamma.
/// Non-decreasing in gamma.
inline double expected_coverage(std::span<const RiskProfile> profiles, double gamma,
                                AbstainMode mode) {
  if (profiles.empty()) throw std::invalid_argument("expected_coverage: no profiles");
  double total = 0.0;
  for (const auto& p : profiles) total += selected_length(p, gamma, mode);
  return total / static_cast<double>(profiles.size());
}

struct GammaBracket {
  double low = 0.0;
  double high = 0.0;
  double coverage_low = 0.0;   // expected coverage at low
  double coverage_high = 0.0;  // expected coverage at high
};

/// Binary search for the step reward bracketing the coverage target c*H:
/// returns the tightest (gamma_low, gamma_high) with
/// coverage(gamma_low) <= c*H <= coverage(gamma_high). The search starts on
/// [0, max total risk]; if coverage jumps over the target at the initial
/// upper bound (tied objectives resolve to the shorter choice), the bound is
/// doubled until the target is reachable. Hitting the target coverage
/// exactly collapses the bracket immediately.
inline GammaBracket bracket_gamma(std::span<const RiskProfile> profiles,
                                  const CoverageSpec& spec, AbstainMode mode) {
  spec.validate();
  if (profiles.empty()) throw std::invalid_argument("bracket_gamma: no profiles");
  for (const auto& p : profiles)
    if (p.horizon() != spec.horizon)
      throw std::invalid_argument("bracket_gamma: profile horizon mismatch");
  const double target = spec.c * spec.horizon;

  GammaBracket b;
  b.low = 0.0;
  b.coverage_low = expected_coverage(profiles, b.low, mode);
  if (b.coverage_low >= target) {  // everything already free at zero reward
    b.high = b.low;
    b.coverage_high = b.coverage_low;
    return b;
  }

  b.high = 0.0;
  for (const auto& p : profiles) b.high = std::max(b.high, p.total());
  b.coverage_high = expected_coverage(profiles, b.high, mode);
  for (int grow = 0; b.coverage_high < target && grow < 64; ++grow) {
    b.high = b.high > 0.0 ? 2.0 * b.high : 1.0;
    b.coverage_high = expected_coverage(profiles, b.high, mode);
  }
  if (b.coverage_high < target)
    throw std::runtime_error("bracket_gamma: coverage target unreachable");

  const double eps = spec.epsilon_gamma.value_or(1e-9 * std::max(b.high, 1e-300));
  for (int iter = 0; iter < 200 && b.high - b.low > eps; ++iter) {
    const double mid = 0.5 * (b.low + b.high);
    const double cov = expected_coverage(profiles, mid, mode);
    if (cov == target) {  // coverage meets the target: stop the search
      b.low = b.high = mid;
      b.coverage_low = b.coverage_high = cov;
      break;
    }
    if (cov < target) {
      b.low = mid;
      b.coverage_low = cov;
    } else {
      b.high = mid;
      b.coverage_high = cov;
    }
  }
  return b;
}

/// Probability of playing the low-reward policy so that the mixed expected
/// coverage hits the target exactly: p*phi_low + (1-p)*phi_high == target.
inline double mixing_probability(double phi_low, double phi_high, double target) {
  if (phi_low > phi_high) throw std::invalid_argument("mixing_probability: phi_low > phi_high");
  if (phi_low == phi_high) {
    if (target != phi_low)
      throw std::invalid_argument("mixing_probability: collapsed bracket misses target");
    return 1.0;
  }
  if (target < phi_low || target > phi_high)
    throw std::invalid_argument("mixing_probability: target outside [phi_low, phi_high]");
  return (target - phi_high) / (phi_low - phi_high);
}

inline std::vector<RiskProfile> profiles_of(const std::vector<ForecastBundle>& bundles) {
  std::vector<RiskProfile> profiles;
  profiles.reserve(bundles.size());
  for (const auto& b : bundles) {
    validate_bundle(b);
    profiles.emplace_back(b.variances);
  }
  return profiles;
}

/// End-to-end partial/interval calibration: build risk profiles from the
/// variance estimates, bracket the step reward, and mix the two endpoint
/// policies for exact expected coverage on the calibration set.
inline LagrangePolicy calibrate_lagrange(const std::vector<ForecastBundle>& bundles,
                                         const CoverageSpec& spec, AbstainMode mode) {
  const std::vector<RiskProfile> profiles = profiles_of(bundles);
  const GammaBracket b = bracket_gamma(profiles, spec, mode);
  const double target = spec.c * spec.horizon;

  LagrangePolicy policy;
  policy.mode = mode;
  policy.c = spec.c;
  policy.gamma_low = b.low;
  policy.gamma_high = b.high;
  policy.p = b.coverage_low >= target
                 ? 1.0  // zero-reward coverage already meets the target
                 : mixing_probability(b.coverage_low, b.coverage_high, target);
  return policy;
}

// ---------------------------------------------------------------------------
// Policy serialization: one JSON object per line, fixed field order
// ---------------------------------------------------------------------------

inline std::string to_json_line(const FullPolicy& p) {
  const std::string tau = std::isinf(p.tau) ? std::string("\"inf\"") : detail::g17(p.tau);
  return std::string("{\"mode\":\"full\",\"c\":") + detail::g17(p.c) + ",\"tau\":" + tau +
         ",\"kappa\":" + detail::g17(p.kappa) + "}";
}

inline std::string to_json_line(const LagrangePolicy& p) {
  return std::string("{\"mode\":\"") + mode_name(p.mode) + "\",\"c\":" + detail::g17(p.c) +
         ",\"gamma_low\":" + detail::g17(p.gamma_low) +
         ",\"gamma_high\":" + detail::g17(p.gamma_high) + ",\"p\":" + detail::g17(p.p) + "}";
}

inline std::string to_json_line(const Policy& p) {
  return std::visit([](const auto& concrete) { return to_json_line(concrete); }, p);
}

inline Policy policy_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "full") {
    FullPolicy p;
    p.c = j.at("c").get<double>();
    p.kappa = j.at("kappa").get<double>();
    const auto& tau = j.at("tau");
    p.tau = tau.is_string() ? std::numeric_limits<double>::infinity() : tau.get<double>();
    return p;
  }
  LagrangePolicy p;
  p.mode = parse_mode(mode);
  p.c = j.at("c").get<double>();
  p.gamma_low = j.at("gamma_low").get<double>();
  p.gamma_high = j.at("gamma_high").get<double>();
  p.p = j.at("p").get<double>();
  return p;
}

}  // namespace abstain
