#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/calibrate.hpp"
#include "abstain/risk.hpp"
#include "abstain/rng.hpp"
#include "abstain/series.hpp"

namespace abstain {

/// Full-abstention decision for one series score. Ties with tau consume one
/// draw from the generator; strict comparisons are deterministic.
inline SelectionDecision decide_full(const FullPolicy& policy, double score, int horizon,
                                     SplitMix64& rng) {
  if (!std::isfinite(score)) throw std::invalid_argument("decide_full: non-finite score");
  if (score < policy.tau) return SelectionDecision::accept_all(horizon);
  if (score == policy.tau && rng.bernoulli(policy.kappa))
    return SelectionDecision::accept_all(horizon);
  return SelectionDecision::reject();
}

/// Partial/interval decision for one series: draw the step reward
/// (gamma_low with probability p, gamma_high otherwise), then run the
/// deterministic selection. One draw per series.
inline SelectionDecision decide_lagrange(const LagrangePolicy& policy,
                                         const ForecastBundle& bundle, SplitMix64& rng) {
  validate_bundle(bundle);
  const double gamma = rng.bernoulli(policy.p) ? policy.gamma_low : policy.gamma_high;
  const RiskProfile profile{bundle.variances};
  if (policy.mode == AbstainMode::partial) {
    const int e = select_end_partial(profile, gamma);
    return e == 0 ? SelectionDecision::reject() : SelectionDecision{1, e};
  }
  return select_interval(profile, gamma);
}

/// Baseline: always forecast the first floor(c*H) steps and one extra step
/// with probability frac(c*H). Integer targets (up to a 1e-9 snap for
/// products like 0.7*10) are deterministic.
inline SelectionDecision decide_accept_ch(const CoverageSpec& spec, SplitMix64& rng) {
  spec.validate();
  const double target = spec.c * spec.horizon;
  const double rounded = std::round(target);
  if (std::abs(target - rounded) <= 1e-9 * std::max(1.0, std::abs(target))) {
    const int e = static_cast<int>(rounded);
    return e == 0 ? SelectionDecision::reject() : SelectionDecision{1, e};
  }
  const int base = static_cast<int>(std::floor(target));
  const int e = rng.bernoulli(target - base) ? base + 1 : base;
  return e == 0 ? SelectionDecision::reject() : SelectionDecision{1, e};
}

/// Apply a calibrated policy to a batch of bundles, consuming the generator
/// in series order.
inline std::vector<SelectionDecision> apply_policy(const Policy& policy,
                                                   const std::vector<ForecastBundle>& bundles,
                                                   SplitMix64& rng) {
  std::vector<SelectionDecision> out;
  out.reserve(bundles.size());
  for (const auto& b : bundles) {
    if (const auto* full = std::get_if<FullPolicy>(&policy)) {
      double score = 0.0;
      for (double v : b.variances) score += v;
      out.push_back(decide_full(*full, score, b.horizon(), rng));
    } else {
      out.push_back(decide_lagrange(std::get<LagrangePolicy>(policy), b, rng));
    }
  }
  return out;
}

inline std::string decisions_csv(std::span<const std::string> ids,
                                 std::span<const SelectionDecision> decisions) {
  if (ids.size() != decisions.size())
    throw std::invalid_argument("decisions_csv: id/decision count mismatch");
  std::string out = "id,start,end\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += ids[i];
    out += ',';
    out += std::to_string(decisions[i].start);
    out += ',';
    out += std::to_string(decisions[i].end);
    out += '\n';
  }
  return out;
}

}  // namespace abstain
