#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "abstain/data.hpp"
#include "abstain/forecast.hpp"
#include "abstain/rng.hpp"

using namespace abstain;

namespace {

std::vector<SeriesWindow> linear_law_windows(SplitMix64& rng, int n, int t_past, int horizon,
                                             double coeff) {
  // noiseless generative law: every future step equals coeff * last past value
  std::vector<SeriesWindow> out;
  for (int i = 0; i < n; ++i) {
    SeriesWindow w;
    w.id = "s" + std::to_string(i);
    for (int t = 0; t < t_past; ++t) w.past.push_back(2.0 * rng.next_double() - 1.0);
    w.future = std::vector<double>(static_cast<std::size_t>(horizon), coeff * w.past.back());
    out.push_back(std::move(w));
  }
  return out;
}

LinearTwoHeadModel random_model(SplitMix64& rng, int lag, int horizon, double beta) {
  LinearTwoHeadModel m;
  m.lag = lag;
  m.horizon = horizon;
  m.beta = beta;
  m.variance_floor = 1e-6;
  m.var_link = VarianceLink::softplus;
  const std::size_t n_feat = static_cast<std::size_t>(lag) + 1;
  m.mean_weights.assign(static_cast<std::size_t>(horizon), std::vector<double>(n_feat));
  m.var_weights.assign(static_cast<std::size_t>(horizon), std::vector<double>(n_feat));
  for (auto& row : m.mean_weights)
    for (auto& w : row) w = 2.0 * rng.next_double() - 1.0;
  for (auto& row : m.var_weights)
    for (auto& w : row) w = 2.0 * rng.next_double() - 1.0;
  return m;
}

std::vector<SeriesWindow> random_batch(SplitMix64& rng, int n, int t_past, int horizon) {
  std::vector<SeriesWindow> out;
  for (int i = 0; i < n; ++i) {
    SeriesWindow w;
    w.id = "b" + std::to_string(i);
    for (int t = 0; t < t_past; ++t) w.past.push_back(4.0 * rng.next_double() - 2.0);
    std::vector<double> future(static_cast<std::size_t>(horizon));
    for (double& v : future) v = 4.0 * rng.next_double() - 2.0;
    w.future = std::move(future);
    out.push_back(std::move(w));
  }
  return out;
}

double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

// loss with the per-term weights frozen at the base parameters, which is the
// function whose exact gradient the analytic stop-gradient formula gives
double frozen_weight_loss(const LinearTwoHeadModel& m, const std::vector<SeriesWindow>& batch,
                          const std::vector<std::vector<double>>& frozen_w) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& w = batch[i];
    std::vector<double> f(static_cast<std::size_t>(m.lag) + 1, 1.0);
    for (int j = 0; j < m.lag; ++j)
      f[static_cast<std::size_t>(j)] = w.past[w.past.size() - static_cast<std::size_t>(m.lag) +
                                              static_cast<std::size_t>(j)];
    for (int t = 0; t < m.horizon; ++t) {
      const std::size_t ti = static_cast<std::size_t>(t);
      double mean = 0.0, z = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) {
        mean += m.mean_weights[ti][j] * f[j];
        z += m.var_weights[ti][j] * f[j];
      }
      const double var = softplus(z) + m.variance_floor;
      const double r = (*w.future)[ti] - mean;
      total += frozen_w[i][ti] * (0.5 * std::log(var) + r * r / (2.0 * var));
    }
  }
  return total / static_cast<double>(batch.size());
}

std::vector<std::vector<double>> weights_at_base(const LinearTwoHeadModel& m,
                                                 const std::vector<SeriesWindow>& batch) {
  std::vector<std::vector<double>> frozen(batch.size(),
                                          std::vector<double>(static_cast<std::size_t>(m.horizon)));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& w = batch[i];
    std::vector<double> f(static_cast<std::size_t>(m.lag) + 1, 1.0);
    for (int j = 0; j < m.lag; ++j)
      f[static_cast<std::size_t>(j)] = w.past[w.past.size() - static_cast<std::size_t>(m.lag) +
                                              static_cast<std::size_t>(j)];
    for (int t = 0; t < m.horizon; ++t) {
      double z = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) z += m.var_weights[static_cast<std::size_t>(t)][j] * f[j];
      frozen[i][static_cast<std::size_t>(t)] = std::pow(softplus(z) + m.variance_floor, m.beta);
    }
  }
  return frozen;
}

// independent normal-equations solve (Gaussian elimination, partial pivoting)
std::vector<double> normal_equations(const std::vector<std::vector<double>>& x,
                                     const std::vector<double>& y) {
  const std::size_t p = x[0].size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j][k] += x[i][j] * x[i][k];
      a[j][p] += x[i][j] * y[i];
    }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double factor = a[r][col] / a[col][col];
      for (std::size_t k = col; k <= p; ++k) a[r][k] -= factor * a[col][k];
    }
  }
  std::vector<double> w(p);
  for (std::size_t j = 0; j < p; ++j) w[j] = a[j][p] / a[j][j];
  return w;
}

}  // namespace

TEST_CASE("two-stage fit recovers a noiseless linear law") {
  SplitMix64 rng(1);
  const auto train = linear_law_windows(rng, 50, 6, 3, 2.0);
  const LinearTwoHeadModel m = fit_two_stage(train, 3, 3, 1e-6);
  for (int t = 0; t < 3; ++t) {
    const auto& w = m.mean_weights[static_cast<std::size_t>(t)];
    CHECK(w[2] == doctest::Approx(2.0).epsilon(1e-8));  // coefficient on the last value
    CHECK(std::abs(w[0]) < 1e-8);
    CHECK(std::abs(w[1]) < 1e-8);
    CHECK(std::abs(w[3]) < 1e-8);  // intercept
  }
  for (const auto& w : train) {
    const ForecastBundle b = predict(m, w);
    for (double v : b.variances) CHECK(v == 1e-6);  // residuals vanish: clamped at the floor
  }
  CHECK(mean_head_mse(m, train) < 1e-16);
}

TEST_CASE("two-stage fit on constant series uses the ridge fallback") {
  std::vector<SeriesWindow> train;
  for (int i = 0; i < 10; ++i) {
    SeriesWindow w;
    w.id = "c" + std::to_string(i);
    w.past.assign(5, 5.0);
    w.future = std::vector<double>(2, 5.0);
    train.push_back(std::move(w));
  }
  const LinearTwoHeadModel m = fit_two_stage(train, 2, 2, 1e-6);
  CHECK(m.ridge_fallback);
  const ForecastBundle b = predict(m, train[0]);
  for (double mean : b.means) CHECK(mean == doctest::Approx(5.0).epsilon(1e-6));
  for (double v : b.variances) CHECK(v == doctest::Approx(1e-6).epsilon(1e-3));
}

TEST_CASE("two-stage fit rejects bad inputs") {
  SplitMix64 rng(2);
  auto train = linear_law_windows(rng, 20, 6, 3, 2.0);
  CHECK_THROWS_AS(fit_two_stage(train, 3, 3, 0.0), std::invalid_argument);

  auto missing = train;
  missing[3].future.reset();
  CHECK_THROWS_AS(fit_two_stage(missing, 3, 3, 1e-6), std::invalid_argument);

  const std::vector<SeriesWindow> tiny(train.begin(), train.begin() + 3);
  CHECK_THROWS_AS(fit_two_stage(tiny, 3, 3, 1e-6), std::invalid_argument);
}

TEST_CASE("two-stage mean head equals the normal-equations solution") {
  SplitMix64 rng(3);
  const auto train = random_batch(rng, 60, 8, 2);
  const int lag = 4;
  const LinearTwoHeadModel m = fit_two_stage(train, lag, 2, 1e-6);
  CHECK(!m.ridge_fallback);

  std::vector<std::vector<double>> x;
  for (const auto& w : train) {
    std::vector<double> f;
    for (int j = 0; j < lag; ++j)
      f.push_back(w.past[w.past.size() - static_cast<std::size_t>(lag) + static_cast<std::size_t>(j)]);
    f.push_back(1.0);
    x.push_back(std::move(f));
  }
  for (int t = 0; t < 2; ++t) {
    std::vector<double> y;
    for (const auto& w : train) y.push_back((*w.future)[static_cast<std::size_t>(t)]);
    const std::vector<double> want = normal_equations(x, y);
    for (std::size_t j = 0; j <= static_cast<std::size_t>(lag); ++j)
      CHECK(m.mean_weights[static_cast<std::size_t>(t)][j] ==
            doctest::Approx(want[j]).epsilon(1e-8));
  }
}

TEST_CASE("two-stage variance head tracks generator ground truth on average") {
  SyntheticConfig config;
  config.n_series = 2000;
  config.t_past = 40;
  config.horizon = 10;
  config.noise_amplification = 4.0;
  config.seed = 12345;
  const SyntheticData data = generate(config);

  const LinearTwoHeadModel m = fit_two_stage(data.windows, 8, 10, 1e-6);
  for (int t = 0; t < 10; ++t) {
    double predicted = 0.0, truth = 0.0;
    for (std::size_t i = 0; i < data.windows.size(); ++i) {
      predicted += predict(m, data.windows[i]).variances[static_cast<std::size_t>(t)];
      truth += data.true_variances[i][static_cast<std::size_t>(t)];
    }
    CHECK(predicted / truth == doctest::Approx(1.0).epsilon(0.20));
  }
}

TEST_CASE("beta-NLL loss closed-form cases") {
  const std::vector<double> y1{3.0}, f1{3.0}, v1{1.0};
  CHECK(beta_nll_loss(y1, f1, v1, 0.7) == 0.0);

  const std::vector<double> y2{1.0}, f2{0.0}, v2{1.0};
  CHECK(beta_nll_loss(y2, f2, v2, 0.5) == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<double> bad{0.0};
  CHECK_THROWS_AS(beta_nll_loss(y2, f2, bad, 0.5), std::invalid_argument);
}

TEST_CASE("beta = 0 reduces to the Gaussian negative log-likelihood") {
  SplitMix64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int h = 1 + static_cast<int>(rng.next_u64() % 8);
    std::vector<double> y(static_cast<std::size_t>(h)), f(static_cast<std::size_t>(h)),
        v(static_cast<std::size_t>(h));
    for (int t = 0; t < h; ++t) {
      y[static_cast<std::size_t>(t)] = 4.0 * rng.next_double() - 2.0;
      f[static_cast<std::size_t>(t)] = 4.0 * rng.next_double() - 2.0;
      v[static_cast<std::size_t>(t)] = 0.1 + 3.0 * rng.next_double();
    }
    // independent formula: sum of log(var)/2 + r^2/(2 var)
    double nll = 0.0;
    for (int t = 0; t < h; ++t) {
      const double r = y[static_cast<std::size_t>(t)] - f[static_cast<std::size_t>(t)];
      nll += 0.5 * std::log(v[static_cast<std::size_t>(t)]) +
             r * r / (2.0 * v[static_cast<std::size_t>(t)]);
    }
    CHECK(beta_nll_loss(y, f, v, 0.0) == doctest::Approx(nll).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  SplitMix64 rng(7);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int lag = 1 + static_cast<int>(rng.next_u64() % 8);
    const int horizon = 1 + static_cast<int>(rng.next_u64() % 8);
    const double beta = std::vector<double>{0.0, 0.5, 1.0}[rep % 3];
    LinearTwoHeadModel m = random_model(rng, lag, horizon, beta);
    const auto batch = random_batch(rng, 1 + static_cast<int>(rng.next_u64() % 4), lag + 2, horizon);

    const HeadGradients g = beta_nll_gradient(m, batch);
    const auto frozen = weights_at_base(m, batch);
    const double step = 1e-5;
    auto fd_check = [&](std::vector<std::vector<double>>& head, const auto& analytic) {
      for (int t = 0; t < horizon; ++t)
        for (std::size_t j = 0; j <= static_cast<std::size_t>(lag); ++j) {
          const double saved = head[static_cast<std::size_t>(t)][j];
          head[static_cast<std::size_t>(t)][j] = saved + step;
          const double up = frozen_weight_loss(m, batch, frozen);
          head[static_cast<std::size_t>(t)][j] = saved - step;
          const double down = frozen_weight_loss(m, batch, frozen);
          head[static_cast<std::size_t>(t)][j] = saved;
          const double fd = (up - down) / (2.0 * step);
          const double a = analytic[static_cast<std::size_t>(t)][j];
          const double rel = std::abs(fd - a) / std::max({1.0, std::abs(fd), std::abs(a)});
          worst = std::max(worst, rel);
        }
    };
    fd_check(m.mean_weights, g.mean);
    fd_check(m.var_weights, g.var);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("gradient structure: zero residuals and batch duplication") {
  SplitMix64 rng(11);
  LinearTwoHeadModel m = random_model(rng, 3, 4, 1.0);
  auto batch = random_batch(rng, 5, 6, 4);
  // force zero residuals: set futures to the model's own predictions
  for (auto& w : batch) {
    const ForecastBundle b = predict(m, w);
    w.future = b.means;
  }
  const HeadGradients g = beta_nll_gradient(m, batch);
  for (const auto& row : g.mean)
    for (double v : row) CHECK(v == 0.0);

  auto batch2 = random_batch(rng, 4, 6, 4);
  auto doubled = batch2;
  doubled.insert(doubled.end(), batch2.begin(), batch2.end());
  const HeadGradients g1 = beta_nll_gradient(m, batch2);
  const HeadGradients g2 = beta_nll_gradient(m, doubled);
  for (int t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(g1.mean[static_cast<std::size_t>(t)][j] ==
            doctest::Approx(g2.mean[static_cast<std::size_t>(t)][j]).epsilon(1e-12));
      CHECK(g1.var[static_cast<std::size_t>(t)][j] ==
            doctest::Approx(g2.var[static_cast<std::size_t>(t)][j]).epsilon(1e-12));
    }
}

TEST_CASE("beta-NLL training is monotone, deterministic, and fits noiseless data") {
  SplitMix64 rng(13);
  const auto train = linear_law_windows(rng, 40, 5, 2, 2.0);

  BetaNllOptions opts;
  opts.epochs = 0;
  opts.seed = 99;
  const LinearTwoHeadModel at_init = fit_beta_nll(train, 2, 2, opts);
  const double loss0 = detail::batch_gaussian_nll(at_init, train);

  opts.epochs = 2000;
  opts.learning_rate = 0.5;
  const LinearTwoHeadModel fitted = fit_beta_nll(train, 2, 2, opts);
  const double loss_end = detail::batch_gaussian_nll(fitted, train);
  CHECK(loss_end <= loss0);
  CHECK(mean_head_mse(fitted, train) <= 1e-6);

  const LinearTwoHeadModel again = fit_beta_nll(train, 2, 2, opts);
  CHECK(again.mean_weights == fitted.mean_weights);  // bit-identical
  CHECK(again.var_weights == fitted.var_weights);
}

TEST_CASE("predict clamps variances and honors hand-computed weights") {
  LinearTwoHeadModel m;
  m.lag = 1;
  m.horizon = 2;
  m.variance_floor = 1e-6;
  m.var_link = VarianceLink::clamp;
  m.mean_weights = {{2.0, 1.0}, {-1.0, 0.5}};  // mean_t = w0 * last + w1
  m.var_weights = {{0.0, 4.0}, {1.0, 0.0}};

  SeriesWindow w;
  w.id = "x";
  w.past = {0.0, 3.0};
  const ForecastBundle b = predict(m, w);
  CHECK(b.means[0] == doctest::Approx(7.0));
  CHECK(b.means[1] == doctest::Approx(-2.5));
  CHECK(b.variances[0] == doctest::Approx(4.0));
  CHECK(b.variances[1] == doctest::Approx(3.0));

  SplitMix64 rng(17);
  m.var_weights = {{0.0, -5.0}, {0.0, -5.0}};  // raw output always negative
  for (int rep = 0; rep < 1000; ++rep) {
    w.past = {rng.next_double(), rng.next_double()};
    const ForecastBundle clamped = predict(m, w);
    for (double v : clamped.variances) CHECK(v >= 1e-6);
  }

  SeriesWindow short_past;
  short_past.id = "short";
  short_past.past = {};
  CHECK_THROWS_AS(predict(m, short_past), std::invalid_argument);
}

TEST_CASE("variance holdout split leaves stages their own rows") {
  SplitMix64 rng(19);
  const auto train = linear_law_windows(rng, 40, 6, 2, 1.5);
  const LinearTwoHeadModel m = fit_two_stage(train, 2, 2, 1e-6, 0.25);
  CHECK(mean_head_mse(m, train) < 1e-16);  // law is exact on every row
  CHECK_THROWS_AS(fit_two_stage(train, 2, 2, 1e-6, 0.95), std::invalid_argument);
}
