#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <vector>

#include "abstain/risk.hpp"
#include "abstain/rng.hpp"

using abstain::RiskProfile;
using abstain::SelectionDecision;
using abstain::SplitMix64;

namespace {

std::vector<double> random_risks(SplitMix64& rng, int h, double scale = 10.0) {
  std::vector<double> risks(static_cast<std::size_t>(h));
  for (double& r : risks) r = scale * rng.next_double();
  return risks;
}

// independent oracle: plain summation of the raw risks
double naive_interval_sum(const std::vector<double>& risks, int s, int e) {
  double total = 0.0;
  for (int t = s; t <= e; ++t) total += risks[static_cast<std::size_t>(t - 1)];
  return total;
}

}  // namespace

TEST_CASE("prefix sums follow the running-sum definition") {
  const RiskProfile p{std::vector<double>{1.0, 2.0, 3.0}};
  CHECK(p.horizon() == 3);
  CHECK(p.prefix(0) == 0.0);
  CHECK(p.prefix(1) == 1.0);
  CHECK(p.prefix(2) == 3.0);
  CHECK(p.prefix(3) == 6.0);

  const RiskProfile zeros{std::vector<double>{0.0, 0.0}};
  CHECK(zeros.prefix(0) == 0.0);
  CHECK(zeros.prefix(1) == 0.0);
  CHECK(zeros.prefix(2) == 0.0);
}

TEST_CASE("prefix differences recover the raw risks") {
  SplitMix64 rng(42);
  const std::vector<double> risks = random_risks(rng, 100);
  const RiskProfile p{risks};
  for (int e = 1; e <= 100; ++e)
    CHECK(p.prefix(e) - p.prefix(e - 1) == doctest::Approx(risks[static_cast<std::size_t>(e - 1)]).epsilon(1e-12));
}

TEST_CASE("profile construction rejects bad input") {
  const std::vector<double> empty;
  const std::vector<double> negative{1.0, -0.5};
  const std::vector<double> nan{std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(RiskProfile{empty}, std::invalid_argument);
  CHECK_THROWS_AS(RiskProfile{negative}, std::invalid_argument);
  CHECK_THROWS_AS(RiskProfile{nan}, std::invalid_argument);
}

TEST_CASE("interval risk") {
  const RiskProfile p{std::vector<double>{5.0, 1.0, 1.0, 5.0}};
  CHECK(p.interval_risk(2, 3) == 2.0);

  const RiskProfile q{std::vector<double>{1.0, 2.0, 3.0}};
  CHECK(q.interval_risk(1, 3) == 6.0);

  CHECK_THROWS_AS(p.interval_risk(3, 2), std::invalid_argument);
  CHECK_THROWS_AS(p.interval_risk(0, 2), std::invalid_argument);
  CHECK_THROWS_AS(p.interval_risk(1, 5), std::invalid_argument);
}

TEST_CASE("interval risk equals naive summation on random instances") {
  SplitMix64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const int h = 1 + static_cast<int>(rng.next_u64() % 16);
    const std::vector<double> risks = random_risks(rng, h);
    const RiskProfile p{risks};
    const int s = 1 + static_cast<int>(rng.next_u64() % static_cast<unsigned>(h));
    const int e = s + static_cast<int>(rng.next_u64() % static_cast<unsigned>(h - s + 1));
    CHECK(p.interval_risk(s, e) == doctest::Approx(naive_interval_sum(risks, s, e)).epsilon(1e-12));
  }
}

TEST_CASE("best start for a fixed window length") {
  const RiskProfile p{std::vector<double>{5.0, 1.0, 1.0, 5.0}};
  CHECK(p.best_start_for_length(2) == 2);  // window sums are 6, 2, 6
  CHECK(p.best_start_for_length(4) == 1);  // single window
  CHECK(p.best_start_for_length(0) == 1);  // empty interval convention

  const RiskProfile ties{std::vector<double>{2.0, 2.0, 2.0}};
  CHECK(ties.best_start_for_length(1) == 1);  // ties break to the smallest start

  CHECK_THROWS_AS(p.best_start_for_length(5), std::invalid_argument);
}

TEST_CASE("best start matches exhaustive enumeration") {
  SplitMix64 rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    const int h = 1 + static_cast<int>(rng.next_u64() % 16);
    const RiskProfile p{random_risks(rng, h)};
    for (int len = 1; len <= h; ++len) {
      const int got = p.best_start_for_length(len);
      int want = 1;
      double best = p.interval_risk(1, len);
      for (int s = 2; s + len - 1 <= h; ++s) {
        const double r = p.interval_risk(s, s + len - 1);
        if (r < best) {
          best = r;
          want = s;
        }
      }
      CHECK(got == want);
      CHECK(p.interval_risk(got, got + len - 1) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("minimal window risk is non-decreasing in the length") {
  SplitMix64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const int h = 2 + static_cast<int>(rng.next_u64() % 12);
    const RiskProfile p{random_risks(rng, h)};
    double prev = 0.0;
    for (int len = 1; len <= h; ++len) {
      const int s = p.best_start_for_length(len);
      const double r = p.interval_risk(s, s + len - 1);
      CHECK(r >= prev - 1e-12);
      prev = r;
    }
  }
}

TEST_CASE("selection decision conventions") {
  const SelectionDecision reject = SelectionDecision::reject();
  CHECK(!reject.accepted());
  CHECK(reject.length() == 0);
  CHECK(reject.start == 1);
  CHECK(reject.end == 0);

  const SelectionDecision window{2, 5};
  CHECK(window.accepted());
  CHECK(window.length() == 4);
  CHECK(SelectionDecision::accept_all(7) == SelectionDecision{1, 7});
}
