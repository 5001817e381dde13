#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/rng.hpp"
#include "abstain/series.hpp"

namespace abstain {

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg, int epoch_)
      : std::runtime_error(msg), epoch(epoch_) {}
  int epoch;
};

/// Positive link used by the trained variance head.
enum class VarianceLink {
  clamp,     // raw linear output, clamped below at the floor (two-stage fit)
  softplus,  // log(1+exp(z)) + floor, differentiable everywhere (beta-NLL fit)
};

/// Direct (non-autoregressive) multi-horizon linear forecaster with a mean
/// head and a variance head. Features for every horizon step are the last
/// `lag` past values in chronological order plus an intercept, so each head
/// holds H weight vectors of length lag+1.
struct LinearTwoHeadModel {
  int lag = 0;
  int horizon = 0;
  double variance_floor = 1e-6;
  double beta = 0.5;
  VarianceLink var_link = VarianceLink::clamp;
  std::vector<std::vector<double>> mean_weights;  // horizon x (lag+1)
  std::vector<std::vector<double>> var_weights;   // horizon x (lag+1)

  // fit metadata
  bool ridge_fallback = false;  // set when a singular design needed the ridge path
  int t_past = 0;               // past length seen at fit time (0 = unrecorded)
  bool normalized = false;      // whether training data was min-max normalized
};

namespace detail {

inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_training_set(const std::vector<SeriesWindow>& train, int lag, int horizon) {
  if (lag < 1) throw std::invalid_argument("fit: lag must be >= 1");
  if (horizon < 1) throw std::invalid_argument("fit: horizon must be >= 1");
  if (static_cast<int>(train.size()) < lag + 2)
    throw std::invalid_argument("fit: need at least lag+2 training series, got " +
                                std::to_string(train.size()));
  for (const auto& w : train) {
    if (w.past_length() < lag)
      throw std::invalid_argument("fit: series '" + w.id + "' past shorter than lag");
    if (!w.future || w.future_length() != horizon)
      throw std::invalid_argument("fit: series '" + w.id + "' lacks a length-" +
                                  std::to_string(horizon) + " future");
  }
}

inline Eigen::MatrixXd design_matrix(const std::vector<SeriesWindow>& windows, int lag) {
  const int n = static_cast<int>(windows.size());
  Eigen::MatrixXd x(n, lag + 1);
  for (int i = 0; i < n; ++i) {
    const auto& past = windows[static_cast<std::size_t>(i)].past;
    const int t = static_cast<int>(past.size());
    for (int j = 0; j < lag; ++j) x(i, j) = past[static_cast<std::size_t>(t - lag + j)];
    x(i, lag) = 1.0;
  }
  return x;
}

/// Least squares with a rank check; singular designs fall back to ridge with
/// penalty 1e-8 and report the fallback through `used_ridge`.
inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           bool& used_ridge) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() == x.cols()) return qr.solve(y);
  used_ridge = true;
  const Eigen::MatrixXd gram =
      x.transpose() * x + 1e-8 * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return gram.ldlt().solve(x.transpose() * y);
}

inline std::vector<double> features_of(std::span<const double> past, int lag) {
  if (static_cast<int>(past.size()) < lag)
    throw std::invalid_argument("predict: past shorter than model lag");
  std::vector<double> f(static_cast<std::size_t>(lag) + 1);
  const std::size_t t = past.size();
  for (int j = 0; j < lag; ++j)
    f[static_cast<std::size_t>(j)] = past[t - static_cast<std::size_t>(lag) + static_cast<std::size_t>(j)];
  f[static_cast<std::size_t>(lag)] = 1.0;
  return f;
}

inline double dot(const std::vector<double>& w, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * f[j];
  return s;
}

}  // namespace detail

/// Two-stage least-squares fit: per horizon step, an OLS fit of the future
/// value on the lag features, then an OLS fit of the squared residual on the
/// same features as the variance head. `var_holdout_fraction > 0` reserves
/// that tail fraction of the training series for the variance regression so
/// its residuals are out-of-sample.
inline LinearTwoHeadModel fit_two_stage(const std::vector<SeriesWindow>& train, int lag,
                                        int horizon, double variance_floor = 1e-6,
                                        double var_holdout_fraction = 0.0) {
  detail::check_training_set(train, lag, horizon);
  if (!(variance_floor > 0.0)) throw std::invalid_argument("fit: variance_floor must be > 0");
  if (var_holdout_fraction < 0.0 || var_holdout_fraction >= 1.0)
    throw std::invalid_argument("fit: var_holdout_fraction must be in [0, 1)");

  const int n = static_cast<int>(train.size());
  int n_var = 0;
  if (var_holdout_fraction > 0.0) {
    n_var = static_cast<int>(std::llround(var_holdout_fraction * n));
    if (n_var < lag + 2 || n - n_var < lag + 2)
      throw std::invalid_argument("fit: var_holdout_fraction leaves too few series per stage");
  }
  const int n_mean = n - n_var;

  std::vector<SeriesWindow> head, tail;
  if (n_var > 0) {
    head.assign(train.begin(), train.begin() + n_mean);
    tail.assign(train.begin() + n_mean, train.end());
  }
  const std::vector<SeriesWindow>& mean_rows = n_var > 0 ? head : train;
  const std::vector<SeriesWindow>& var_rows = n_var > 0 ? tail : train;

  const Eigen::MatrixXd x_mean = detail::design_matrix(mean_rows, lag);
  const Eigen::MatrixXd x_var = detail::design_matrix(var_rows, lag);

  LinearTwoHeadModel model;
  model.lag = lag;
  model.horizon = horizon;
  model.variance_floor = variance_floor;
  model.var_link = VarianceLink::clamp;
  model.t_past = train.front().past_length();
  model.mean_weights.resize(static_cast<std::size_t>(horizon));
  model.var_weights.resize(static_cast<std::size_t>(horizon));

  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd y(n_mean);
    for (int i = 0; i < n_mean; ++i)
      y(i) = (*mean_rows[static_cast<std::size_t>(i)].future)[static_cast<std::size_t>(t)];
    const Eigen::VectorXd w = detail::solve_least_squares(x_mean, y, model.ridge_fallback);

    Eigen::VectorXd sq(static_cast<int>(var_rows.size()));
    for (int i = 0; i < static_cast<int>(var_rows.size()); ++i) {
      const double target = (*var_rows[static_cast<std::size_t>(i)].future)[static_cast<std::size_t>(t)];
      const double resid = target - x_var.row(i).dot(w);
      sq(i) = resid * resid;
    }
    const Eigen::VectorXd v = detail::solve_least_squares(x_var, sq, model.ridge_fallback);

    model.mean_weights[static_cast<std::size_t>(t)].assign(w.data(), w.data() + w.size());
    model.var_weights[static_cast<std::size_t>(t)].assign(v.data(), v.data() + v.size());
  }
  return model;
}

/// Variance-weighted Gaussian negative log-likelihood of one series:
///   sum_t w_t * ( log(var_t)/2 + (y_t - mean_t)^2 / (2 var_t) ),
/// with w_t = var_t^beta treated as a constant (stop-gradient) weight.
inline double beta_nll_loss(std::span<const double> y, std::span<const double> means,
                            std::span<const double> variances, double beta) {
  if (y.size() != means.size() || y.size() != variances.size())
    throw std::invalid_argument("beta_nll_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double var = variances[t];
    if (!(var > 0.0)) throw std::invalid_argument("beta_nll_loss: non-positive variance");
    const double w = std::pow(var, beta);
    const double r = y[t] - means[t];
    loss += w * (0.5 * std::log(var) + r * r / (2.0 * var));
  }
  return loss;
}

struct HeadGradients {
  std::vector<std::vector<double>> mean;  // horizon x (lag+1)
  std::vector<std::vector<double>> var;   // horizon x (lag+1)
};

/// Analytic gradient of the batch-mean beta-NLL with the softplus variance
/// link, treating the var_t^beta weight as constant.
inline HeadGradients beta_nll_gradient(const LinearTwoHeadModel& model,
                                       const std::vector<SeriesWindow>& batch) {
  if (batch.empty()) throw std::invalid_argument("beta_nll_gradient: empty batch");
  const int lag = model.lag;
  const int horizon = model.horizon;
  const std::size_t n_feat = static_cast<std::size_t>(lag) + 1;
  HeadGradients g;
  g.mean.assign(static_cast<std::size_t>(horizon), std::vector<double>(n_feat, 0.0));
  g.var.assign(static_cast<std::size_t>(horizon), std::vector<double>(n_feat, 0.0));

  for (const auto& w : batch) {
    if (!w.future || w.future_length() != horizon)
      throw std::invalid_argument("beta_nll_gradient: series '" + w.id + "' lacks futures");
    const std::vector<double> f = detail::features_of(w.past, lag);
    for (int t = 0; t < horizon; ++t) {
      const std::size_t ti = static_cast<std::size_t>(t);
      const double mean = detail::dot(model.mean_weights[ti], f);
      const double z = detail::dot(model.var_weights[ti], f);
      const double var = detail::softplus(z) + model.variance_floor;
      const double weight = std::pow(var, model.beta);
      const double r = (*w.future)[ti] - mean;
      const double dmean = weight * (mean - (*w.future)[ti]) / var;
      const double dvar = weight * (0.5 / var - r * r / (2.0 * var * var));
      const double dz = dvar * detail::sigmoid(z);
      for (std::size_t j = 0; j < n_feat; ++j) {
        g.mean[ti][j] += dmean * f[j];
        g.var[ti][j] += dz * f[j];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (int t = 0; t < horizon; ++t)
    for (std::size_t j = 0; j < n_feat; ++j) {
      g.mean[static_cast<std::size_t>(t)][j] *= inv_n;
      g.var[static_cast<std::size_t>(t)][j] *= inv_n;
    }
  return g;
}

namespace detail {

inline double batch_loss(const LinearTwoHeadModel& model, const std::vector<SeriesWindow>& batch,
                         double beta) {
  double total = 0.0;
  std::vector<double> means(static_cast<std::size_t>(model.horizon));
  std::vector<double> vars(static_cast<std::size_t>(model.horizon));
  for (const auto& w : batch) {
    const std::vector<double> f = features_of(w.past, model.lag);
    for (int t = 0; t < model.horizon; ++t) {
      const std::size_t ti = static_cast<std::size_t>(t);
      means[ti] = dot(model.mean_weights[ti], f);
      vars[ti] = softplus(dot(model.var_weights[ti], f)) + model.variance_floor;
    }
    total += beta_nll_loss(*w.future, means, vars, beta);
  }
  return total / static_cast<double>(batch.size());
}

inline double batch_beta_nll(const LinearTwoHeadModel& model,
                             const std::vector<SeriesWindow>& batch) {
  return batch_loss(model, batch, model.beta);
}

/// Monitored training loss: the unweighted Gaussian NLL. The stop-gradient
/// step direction is a per-term positive reweighting of this loss's
/// gradient, so its stationary points (calibrated variances, weighted
/// least-squares means) are the targets the training is meant to reach; the
/// raw beta-weighted value instead bottoms out at a fixed miscalibrated
/// variance and would veto exactly the variance-tightening steps the
/// gradient asks for.
inline double batch_gaussian_nll(const LinearTwoHeadModel& model,
                                 const std::vector<SeriesWindow>& batch) {
  return batch_loss(model, batch, 0.0);
}

}  // namespace detail

struct BetaNllOptions {
  double beta = 0.5;
  int epochs = 200;
  double learning_rate = 0.1;
  std::uint64_t seed = 1;
  double variance_floor = 1e-6;
};

/// Full-batch gradient descent with the beta-weighted stop-gradient step
/// rule from a seeded small random initialization. A backtracking check
/// halves the step whenever a proposed update would increase the monitored
/// training loss (the Gaussian NLL), so the loss sequence is non-increasing.
inline LinearTwoHeadModel fit_beta_nll(const std::vector<SeriesWindow>& train, int lag,
                                       int horizon, const BetaNllOptions& opts = {}) {
  detail::check_training_set(train, lag, horizon);
  if (!(opts.variance_floor > 0.0)) throw std::invalid_argument("fit: variance_floor must be > 0");
  if (opts.beta < 0.0 || opts.beta > 1.0)
    throw std::invalid_argument("fit: beta must lie in [0, 1]");
  if (opts.epochs < 0 || !(opts.learning_rate > 0.0))
    throw std::invalid_argument("fit: bad epochs or learning rate");

  LinearTwoHeadModel model;
  model.lag = lag;
  model.horizon = horizon;
  model.variance_floor = opts.variance_floor;
  model.beta = opts.beta;
  model.var_link = VarianceLink::softplus;
  model.t_past = train.front().past_length();

  SplitMix64 rng(opts.seed);
  const std::size_t n_feat = static_cast<std::size_t>(lag) + 1;
  auto init_head = [&] {
    std::vector<std::vector<double>> head(static_cast<std::size_t>(horizon),
                                          std::vector<double>(n_feat));
    for (auto& row : head)
      for (auto& w : row) w = 0.02 * rng.next_double() - 0.01;
    return head;
  };
  model.mean_weights = init_head();
  model.var_weights = init_head();

  double loss = detail::batch_gaussian_nll(model, train);
  if (!std::isfinite(loss))
    throw TrainingError("beta-NLL training diverged at epoch 0 (non-finite loss)", 0);

  double lr = opts.learning_rate;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const HeadGradients g = beta_nll_gradient(model, train);
    bool stepped = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      LinearTwoHeadModel candidate = model;
      for (int t = 0; t < horizon; ++t)
        for (std::size_t j = 0; j < n_feat; ++j) {
          candidate.mean_weights[static_cast<std::size_t>(t)][j] -=
              lr * g.mean[static_cast<std::size_t>(t)][j];
          candidate.var_weights[static_cast<std::size_t>(t)][j] -=
              lr * g.var[static_cast<std::size_t>(t)][j];
        }
      const double candidate_loss = detail::batch_gaussian_nll(candidate, train);
      if (std::isfinite(candidate_loss) && candidate_loss <= loss) {
        model.mean_weights = std::move(candidate.mean_weights);
        model.var_weights = std::move(candidate.var_weights);
        loss = candidate_loss;
        stepped = true;
        // regrow the step so the rate tracks the local curvature instead of
        // staying at the smallest value ever needed
        lr = std::min(lr * 2.0, 1e6 * opts.learning_rate);
        break;
      }
      lr *= 0.5;
    }
    if (!std::isfinite(loss))
      throw TrainingError("beta-NLL training diverged at epoch " + std::to_string(epoch),
                          epoch);
    if (!stepped) break;  // no step improves the loss: converged
  }
  return model;
}

/// Means and variances for all H steps at once; variances never fall below
/// the model's floor.
inline ForecastBundle predict(const LinearTwoHeadModel& model, const SeriesWindow& window) {
  const std::vector<double> f = detail::features_of(window.past, model.lag);
  ForecastBundle out;
  out.id = window.id;
  out.means.resize(static_cast<std::size_t>(model.horizon));
  out.variances.resize(static_cast<std::size_t>(model.horizon));
  for (int t = 0; t < model.horizon; ++t) {
    const std::size_t ti = static_cast<std::size_t>(t);
    out.means[ti] = detail::dot(model.mean_weights[ti], f);
    const double raw = detail::dot(model.var_weights[ti], f);
    out.variances[ti] = model.var_link == VarianceLink::clamp
                            ? std::max(raw, model.variance_floor)
                            : detail::softplus(raw) + model.variance_floor;
  }
  return out;
}

inline std::vector<ForecastBundle> predict_all(const LinearTwoHeadModel& model,
                                               const std::vector<SeriesWindow>& windows) {
  std::vector<ForecastBundle> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(predict(model, w));
  return out;
}

/// Mean squared error of the mean head over series with realized futures.
inline double mean_head_mse(const LinearTwoHeadModel& model,
                            const std::vector<SeriesWindow>& windows) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& w : windows) {
    if (!w.future) continue;
    const ForecastBundle b = predict(model, w);
    for (int t = 0; t < model.horizon; ++t) {
      const double r = (*w.future)[static_cast<std::size_t>(t)] -
                       b.means[static_cast<std::size_t>(t)];
      total += r * r;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("mean_head_mse: no futures available");
  return total / static_cast<double>(count);
}

}  // namespace abstain
