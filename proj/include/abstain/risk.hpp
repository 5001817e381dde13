#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abstain {

/// Accepted forecast window of a single series, as a closed step range
/// [start, end] with 1-based horizon steps. The pair (1, 0) is the
/// conventional encoding for "reject the entire horizon".
struct SelectionDecision {
  int start = 1;
  int end = 0;

  static SelectionDecision reject() { return {1, 0}; }
  static SelectionDecision accept_all(int horizon) { return {1, horizon}; }

  bool accepted() const { return end >= start; }
  int length() const { return accepted() ? end - start + 1 : 0; }

  friend bool operator==(const SelectionDecision&, const SelectionDecision&) = default;
};

/// Prefix-sum view of per-step conditional risks over a forecast horizon.
///
/// prefix(e) holds the cumulative risk of steps 1..e, so the risk of any
/// interval is a difference of two prefix values and every policy query
/// below is O(1) or a single linear scan.
class RiskProfile {
 public:
  /// Build from H per-step risks. Risks must be non-negative and non-empty.
  explicit RiskProfile(std::span<const double> risks) {
    if (risks.empty()) throw std::invalid_argument("RiskProfile: empty risk vector");
    prefix_.resize(risks.size() + 1);
    prefix_[0] = 0.0;
    for (std::size_t i = 0; i < risks.size(); ++i) {
      if (!(risks[i] >= 0.0))
        throw std::invalid_argument("RiskProfile: negative or non-finite risk at step " +
                                    std::to_string(i + 1));
      prefix_[i + 1] = prefix_[i] + risks[i];
    }
  }

  explicit RiskProfile(const std::vector<double>& risks)
      : RiskProfile(std::span<const double>(risks)) {}

  int horizon() const { return static_cast<int>(prefix_.size()) - 1; }

  /// Cumulative risk of steps 1..e (e in [0, H]).
  double prefix(int e) const {
    check_range(e, 0, horizon(), "prefix index");
    return prefix_[static_cast<std::size_t>(e)];
  }

  /// Total risk over the whole horizon.
  double total() const { return prefix_.back(); }

  /// Risk of the closed interval of steps [s, e], 1 <= s <= e <= H.
  double interval_risk(int s, int e) const {
    check_range(s, 1, horizon(), "interval start");
    check_range(e, 1, horizon(), "interval end");
    if (s > e) throw std::invalid_argument("interval_risk: start exceeds end");
    return prefix_[static_cast<std::size_t>(e)] - prefix_[static_cast<std::size_t>(s - 1)];
  }

  /// Smallest start s minimizing the risk of a length-h window, found with a
  /// sliding-window scan over the prefix sums. h == 0 returns 1 (empty
  /// interval convention).
  int best_start_for_length(int h) const {
    check_range(h, 0, horizon(), "window length");
    if (h == 0) return 1;
    int best_s = 1;
    double best = prefix_[static_cast<std::size_t>(h)];
    for (int s = 2; s + h - 1 <= horizon(); ++s) {
      const double r =
          prefix_[static_cast<std::size_t>(s + h - 1)] - prefix_[static_cast<std::size_t>(s - 1)];
      if (r < best) {
        best = r;
        best_s = s;
      }
    }
    return best_s;
  }

  const std::vector<double>& prefix_sums() const { return prefix_; }

 private:
  static void check_range(int v, int lo, int hi, const char* what) {
    if (v < lo || v > hi)
      throw std::invalid_argument(std::string(what) + " out of range: " + std::to_string(v));
  }

  std::vector<double> prefix_;
};

}  // namespace abstain
