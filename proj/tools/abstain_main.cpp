// Command-line front end: reproducible selective-forecasting experiments
// wired from the library modules. Every subcommand is deterministic given
// its flags; all randomness flows from --seed.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "abstain/abstain.hpp"

namespace {

using namespace abstain;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& tok : detail::split_csv_line(text))
    out.push_back(detail::parse_double(tok, 0, "list entry"));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : detail::split_csv_line(text))
    out.push_back(static_cast<std::uint64_t>(detail::parse_int(tok, 0, "seed")));
  return out;
}

int series_total_length(const std::string& path) {
  const auto probe = read_series_csv(path, 1);
  return 1 + probe.front().future_length();
}

std::vector<SeriesWindow> load_series(const std::string& path, int t_past, bool normalize) {
  auto windows = read_series_csv(path, t_past);
  if (normalize) windows = minmax_normalize(std::move(windows)).first;
  return windows;
}

struct BundleSource {
  std::string model_path;
  std::string predictions_path;
  std::string data_path;

  // produce (bundles, matching windows-with-futures when available)
  std::pair<std::vector<ForecastBundle>, std::vector<SeriesWindow>> load() const {
    if (!predictions_path.empty()) {
      auto bundles = read_predictions_csv(predictions_path);
      std::vector<SeriesWindow> windows;
      if (!data_path.empty()) {
        const int total = series_total_length(data_path);
        const int horizon = bundles.front().horizon();
        if (total <= horizon)
          throw std::invalid_argument("data series shorter than the prediction horizon");
        windows = read_series_csv(data_path, total - horizon);
        if (windows.size() != bundles.size())
          throw std::invalid_argument("prediction and data series counts differ");
        for (std::size_t i = 0; i < windows.size(); ++i)
          if (windows[i].id != bundles[i].id)
            throw std::invalid_argument("prediction/data id mismatch at '" + windows[i].id + "'");
      }
      return {std::move(bundles), std::move(windows)};
    }
    const LinearTwoHeadModel model = model_from_json(read_text_file(model_path));
    const int total = series_total_length(data_path);
    const int t_past = model.t_past > 0 ? model.t_past : total - model.horizon;
    auto windows = load_series(data_path, t_past, model.normalized);
    return {predict_all(model, windows), std::move(windows)};
  }
};

void cmd_generate(int n, int t, int h, double ar, double noise, double amp, std::uint64_t seed,
                  const std::string& out_dir) {
  SyntheticConfig config;
  config.n_series = n;
  config.t_past = t;
  config.horizon = h;
  config.ar_coeff = ar;
  config.base_noise_sd = noise;
  config.noise_amplification = amp;
  config.seed = seed;
  const SyntheticData data = generate(config);

  std::filesystem::create_directories(out_dir);
  const std::string series_path = (std::filesystem::path(out_dir) / "series.csv").string();
  write_text_file(series_path, series_csv(data.windows));

  std::string truth = "id,step,variance\n";
  for (std::size_t i = 0; i < data.windows.size(); ++i)
    for (int step = 1; step <= h; ++step)
      truth += data.windows[i].id + "," + std::to_string(step) + "," +
               detail::g17(data.true_variances[i][static_cast<std::size_t>(step - 1)]) + "\n";
  const std::string truth_path = (std::filesystem::path(out_dir) / "true_variances.csv").string();
  write_text_file(truth_path, truth);

  std::cout << "generate: n=" << n << " t=" << t << " h=" << h << " seed=" << seed
            << " series=" << series_path << " variances=" << truth_path << "\n";
}

void cmd_fit(const std::string& data_path, int t_past, int horizon, int lag,
             const std::string& method, double beta, int epochs, double lr, std::uint64_t seed,
             double floor, double var_holdout, bool normalize, const std::string& out_model) {
  const auto windows = load_series(data_path, t_past, normalize);
  if (!windows.front().future || windows.front().future_length() != horizon)
    throw std::invalid_argument("fit: data does not carry a length-" + std::to_string(horizon) +
                                " future (check --t/--h)");
  LinearTwoHeadModel model;
  if (method == "two-stage") {
    model = fit_two_stage(windows, lag, horizon, floor, var_holdout);
  } else if (method == "beta-nll") {
    BetaNllOptions opts;
    opts.beta = beta;
    opts.epochs = epochs;
    opts.learning_rate = lr;
    opts.seed = seed;
    opts.variance_floor = floor;
    model = fit_beta_nll(windows, lag, horizon, opts);
  } else {
    throw std::invalid_argument("fit: unknown --method '" + method + "'");
  }
  model.normalized = normalize;
  write_text_file(out_model, model_to_json(model, method) + "\n");
  std::cout << "fit: method=" << method << " lag=" << lag << " train_mse="
            << detail::g17(mean_head_mse(model, windows))
            << " ridge_fallback=" << (model.ridge_fallback ? 1 : 0) << " model=" << out_model
            << "\n";
}

void cmd_calibrate(const BundleSource& source, double c, const std::string& mode,
                   std::optional<double> eps_gamma, const std::string& out_policy) {
  const auto [bundles, windows] = source.load();
  const CoverageSpec spec{c, bundles.front().horizon(), eps_gamma};
  Policy policy = mode == "full"
                      ? Policy{calibrate_full(full_scores(bundles), spec)}
                      : Policy{calibrate_lagrange(bundles, spec, parse_mode(mode))};
  write_text_file(out_policy, to_json_line(policy) + "\n");
  std::cout << "calibrate: mode=" << mode << " c=" << detail::g17(c)
            << " n_calib=" << bundles.size() << " policy=" << out_policy << "\n";
}

void cmd_evaluate(const std::string& policy_path, const BundleSource& source, std::uint64_t seed,
                  const std::vector<double>& eps_grid, const std::string& out_report,
                  const std::string& out_decisions) {
  const Policy policy = policy_from_json(read_text_file(policy_path));
  const auto [bundles, windows] = source.load();
  if (windows.empty())
    throw std::invalid_argument("evaluate: --data with realized futures is required");
  const int horizon = bundles.front().horizon();
  const auto losses = squared_losses(bundles, windows);

  SplitMix64 rng(seed);
  const auto decisions = apply_policy(policy, bundles, rng);

  const std::string strategy =
      std::holds_alternative<FullPolicy>(policy)
          ? "full"
          : std::string(mode_name(std::get<LagrangePolicy>(policy).mode));
  const double c = std::holds_alternative<FullPolicy>(policy)
                       ? std::get<FullPolicy>(policy).c
                       : std::get<LagrangePolicy>(policy).c;
  const EvalReport report =
      make_report(strategy, c, seed, decisions, losses, horizon, eps_grid);
  const std::vector<EvalReport> reports{report};
  write_text_file(out_report, report_csv(reports, eps_grid));

  if (!out_decisions.empty()) {
    std::vector<std::string> ids;
    for (const auto& b : bundles) ids.push_back(b.id);
    write_text_file(out_decisions, decisions_csv(ids, decisions));
  }
  std::cout << "evaluate: strategy=" << strategy << " coverage="
            << detail::shortest(report.coverage) << " risk="
            << (report.selective_risk ? detail::shortest(*report.selective_risk)
                                      : std::string("undefined"))
            << " report=" << out_report << "\n";
}

void cmd_sweep(const std::string& data_path, int t_past, const std::string& strategies_text,
               const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
               int lag, const std::string& method, double beta, int epochs, double lr,
               bool normalize, const std::vector<double>& eps_grid, const std::string& out_path) {
  const auto windows = load_series(data_path, t_past, normalize);

  SweepOptions opts;
  opts.strategies.clear();
  for (const std::string& tok : detail::split_csv_line(strategies_text))
    opts.strategies.push_back(parse_strategy(tok));
  opts.grid = grid;
  opts.eps_grid = eps_grid;
  opts.lag = lag;
  opts.method = method;
  opts.beta = beta;
  opts.epochs = epochs;
  opts.learning_rate = lr;

  // one split + experiment per seed, rows reassembled in (strategy, c, seed) order
  std::vector<std::vector<EvalReport>> per_seed;
  for (const std::uint64_t seed : seeds) {
    const SplitData splits = split_60_20_20(windows, seed);
    const std::vector<std::uint64_t> one{seed};
    per_seed.push_back(sweep(splits, one, opts));
  }
  std::vector<EvalReport> rows;
  const std::size_t cells = opts.strategies.size() * opts.grid.size();
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (const auto& seed_rows : per_seed) rows.push_back(seed_rows[cell]);

  write_text_file(out_path, report_csv(rows, eps_grid));
  std::cout << "sweep: strategies=" << opts.strategies.size() << " grid=" << grid.size()
            << " seeds=" << seeds.size() << " rows=" << rows.size() << " out=" << out_path
            << "\n";
}

int cmd_oracle_check(const BundleSource& source, double c, const std::string& mode,
                     double max_enum, std::optional<double> eps_gamma) {
  const auto [bundles, windows] = source.load();
  const int horizon = bundles.front().horizon();
  const std::vector<RiskProfile> profiles = profiles_of(bundles);
  const CoverageSpec spec{c, horizon, eps_gamma};
  const double tol = 1e-9;

  bool all_pass = true;
  double full_risk = 0.0, partial_risk = 0.0, interval_risk = 0.0;
  const bool run_all = mode == "all";

  if (run_all || mode == "full") {
    const std::vector<double> scores = full_scores(bundles);
    full_risk = oracle_full(scores, c, horizon, max_enum).risk;
    const FullPolicy policy = calibrate_full(scores, spec);
    const double policy_risk = expected_risk_full(policy, scores, scores, horizon);
    const bool pass = policy_risk <= full_risk + tol;
    all_pass = all_pass && pass;
    std::cout << "oracle-check mode=full oracle_risk=" << detail::shortest(full_risk)
              << " policy_risk=" << detail::shortest(policy_risk) << " "
              << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (run_all || mode == "partial") {
    partial_risk = oracle_partial(profiles, c, horizon, max_enum).risk;
    const LagrangePolicy policy = calibrate_lagrange(bundles, spec, AbstainMode::partial);
    const double policy_risk = expected_risk_lagrange(policy, profiles);
    const bool pass = policy_risk <= partial_risk + tol;
    all_pass = all_pass && pass;
    std::cout << "oracle-check mode=partial oracle_risk=" << detail::shortest(partial_risk)
              << " policy_risk=" << detail::shortest(policy_risk) << " "
              << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (run_all || mode == "interval") {
    interval_risk = oracle_interval(profiles, c, horizon, max_enum).risk;
    const LagrangePolicy policy = calibrate_lagrange(bundles, spec, AbstainMode::interval);
    const double policy_risk = expected_risk_lagrange(policy, profiles);
    const bool pass = policy_risk <= interval_risk + tol;
    all_pass = all_pass && pass;
    std::cout << "oracle-check mode=interval oracle_risk=" << detail::shortest(interval_risk)
              << " policy_risk=" << detail::shortest(policy_risk) << " "
              << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (run_all) {
    const bool nested = interval_risk <= partial_risk + tol && partial_risk <= full_risk + tol;
    all_pass = all_pass && nested;
    std::cout << "oracle-check nesting interval<=partial<=full "
              << (nested ? "PASS" : "FAIL") << "\n";
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bounded-abstention policies for multi-horizon forecasting"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");  // --h is a data flag below

  const auto positive_c = [](const std::string& value) -> std::string {
    const double c = std::strtod(value.c_str(), nullptr);
    if (!(c > 0.0) || c > 1.0) return "coverage must lie in (0, 1]";
    return {};
  };

  // generate
  int g_n = 100, g_t = 40, g_h = 10;
  double g_ar = 0.6, g_noise = 1.0, g_amp = 4.0;
  std::uint64_t g_seed = 1;
  std::string g_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic heteroscedastic dataset");
  gen->set_help_flag("--help", "print help");
  gen->add_option("--n", g_n, "number of series")->check(CLI::PositiveNumber);
  gen->add_option("--t", g_t, "observed past length")->check(CLI::Range(4, 1 << 20));
  gen->add_option("--h", g_h, "forecast horizon")->check(CLI::PositiveNumber);
  gen->add_option("--ar", g_ar, "AR(1) coefficient in (-1,1)");
  gen->add_option("--noise", g_noise, "base innovation standard deviation")
      ->check(CLI::PositiveNumber);
  gen->add_option("--amp", g_amp, "high-regime variance multiplier (>= 1)");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--out", g_out, "output directory")->required();

  // fit
  std::string f_data, f_method = "two-stage", f_out;
  int f_t = 0, f_h = 0, f_lag = 8, f_epochs = 200;
  double f_beta = 0.5, f_lr = 0.1, f_floor = 1e-6, f_holdout = 0.0;
  std::uint64_t f_seed = 1;
  bool f_normalize = false;
  auto* fit = app.add_subcommand("fit", "fit the linear two-head forecaster");
  fit->set_help_flag("--help", "print help");
  fit->add_option("--data", f_data, "series CSV (id,t,value)")->required();
  fit->add_option("--t", f_t, "past length")->required()->check(CLI::PositiveNumber);
  fit->add_option("--h", f_h, "horizon")->required()->check(CLI::PositiveNumber);
  fit->add_option("--lag", f_lag, "lag features")->check(CLI::PositiveNumber);
  fit->add_option("--method", f_method, "two-stage | beta-nll")
      ->check(CLI::IsMember({"two-stage", "beta-nll"}));
  fit->add_option("--beta", f_beta, "beta-NLL weight in [0,1]");
  fit->add_option("--epochs", f_epochs, "gradient-descent epochs");
  fit->add_option("--lr", f_lr, "initial learning rate");
  fit->add_option("--seed", f_seed, "initialization seed");
  fit->add_option("--floor", f_floor, "variance floor");
  fit->add_option("--var-holdout", f_holdout, "training tail fraction reserved for the variance fit");
  fit->add_flag("--normalize", f_normalize, "min-max normalize per series (past statistics)");
  fit->add_option("--out-model", f_out, "model JSON path")->required();

  // calibrate
  std::string c_model, c_pred, c_data, c_mode = "full", c_out;
  double c_c = 0.8;
  double c_eps = 0.0;
  auto* cal = app.add_subcommand("calibrate", "calibrate an abstention policy");
  cal->set_help_flag("--help", "print help");
  cal->add_option("--model", c_model, "model JSON (with --data)");
  cal->add_option("--predictions", c_pred, "external predictions CSV (id,step,mean,variance)");
  cal->add_option("--data", c_data, "calibration series CSV");
  cal->add_option("--c", c_c, "target coverage in (0,1]")->required()->check(positive_c);
  cal->add_option("--mode", c_mode, "full | partial | interval")
      ->check(CLI::IsMember({"full", "partial", "interval"}));
  auto* cal_eps = cal->add_option("--eps-gamma", c_eps, "bracket stop width (default: relative)");
  cal->add_option("--out-policy", c_out, "policy JSON path")->required();

  // evaluate
  std::string e_policy, e_model, e_pred, e_data, e_out, e_decisions;
  std::string e_eps = "0.01,0.02,0.05,0.1";
  std::uint64_t e_seed = 1;
  auto* eval = app.add_subcommand("evaluate", "apply a policy and report risk/coverage");
  eval->set_help_flag("--help", "print help");
  eval->add_option("--policy", e_policy, "policy JSON")->required();
  eval->add_option("--model", e_model, "model JSON (with --data)");
  eval->add_option("--predictions", e_pred, "external predictions CSV");
  eval->add_option("--data", e_data, "test series CSV with realized futures")->required();
  eval->add_option("--seed", e_seed, "decision randomization seed");
  eval->add_option("--eps-grid", e_eps, "comma-separated ConSat tolerances");
  eval->add_option("--out-report", e_out, "report CSV path")->required();
  eval->add_option("--out-decisions", e_decisions, "decisions CSV path (id,start,end)");

  // sweep
  std::string s_data, s_strategies = "full,partial,interval,accept-ch", s_method = "two-stage",
              s_out;
  std::string s_grid = "0.7,0.75,0.8,0.85,0.9,0.95";
  std::string s_seeds = "1";
  std::string s_eps = "0.01,0.02,0.05,0.1";
  int s_t = 0, s_lag = 8, s_epochs = 200;
  double s_beta = 0.5, s_lr = 0.1;
  bool s_normalize = false;
  auto* swp = app.add_subcommand("sweep", "full experiment: split, fit, calibrate, evaluate");
  swp->set_help_flag("--help", "print help");
  swp->add_option("--data", s_data, "series CSV")->required();
  swp->add_option("--t", s_t, "past length")->required()->check(CLI::PositiveNumber);
  swp->add_option("--strategies", s_strategies, "comma-separated strategy list");
  swp->add_option("--grid", s_grid, "comma-separated coverage levels");
  swp->add_option("--seeds", s_seeds, "comma-separated seeds (one experiment each)");
  swp->add_option("--lag", s_lag, "lag features");
  swp->add_option("--method", s_method, "two-stage | beta-nll")
      ->check(CLI::IsMember({"two-stage", "beta-nll"}));
  swp->add_option("--beta", s_beta, "beta-NLL weight");
  swp->add_option("--epochs", s_epochs, "epochs for beta-nll");
  swp->add_option("--lr", s_lr, "learning rate for beta-nll");
  swp->add_flag("--normalize", s_normalize, "min-max normalize per series");
  swp->add_option("--eps-grid", s_eps, "comma-separated ConSat tolerances");
  swp->add_option("--out", s_out, "report CSV path")->required();

  // oracle-check
  std::string o_model, o_pred, o_data, o_mode = "all";
  double o_c = 0.8, o_max = 1e6, o_eps = 0.0;
  auto* orc = app.add_subcommand("oracle-check",
                                 "exhaustive optimality check on a tiny instance");
  orc->set_help_flag("--help", "print help");
  orc->add_option("--model", o_model, "model JSON (with --data)");
  orc->add_option("--predictions", o_pred, "external predictions CSV");
  orc->add_option("--data", o_data, "series CSV");
  orc->add_option("--c", o_c, "target coverage in (0,1]")->required()->check(positive_c);
  orc->add_option("--mode", o_mode, "full | partial | interval | all")
      ->check(CLI::IsMember({"full", "partial", "interval", "all"}));
  orc->add_option("--max-enum", o_max, "enumeration budget");
  auto* orc_eps = orc->add_option("--eps-gamma", o_eps, "bracket stop width");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      cmd_generate(g_n, g_t, g_h, g_ar, g_noise, g_amp, g_seed, g_out);
    } else if (*fit) {
      cmd_fit(f_data, f_t, f_h, f_lag, f_method, f_beta, f_epochs, f_lr, f_seed, f_floor,
              f_holdout, f_normalize, f_out);
    } else if (*cal) {
      if (c_pred.empty() && (c_model.empty() || c_data.empty()))
        throw std::invalid_argument("calibrate: need --predictions or --model with --data");
      const BundleSource source{c_model, c_pred, c_data};
      cmd_calibrate(source, c_c, c_mode,
                    cal_eps->count() ? std::optional<double>{c_eps} : std::nullopt, c_out);
    } else if (*eval) {
      if (e_pred.empty() && e_model.empty())
        throw std::invalid_argument("evaluate: need --predictions or --model");
      const BundleSource source{e_model, e_pred, e_data};
      cmd_evaluate(e_policy, source, e_seed, parse_double_list(e_eps), e_out, e_decisions);
    } else if (*swp) {
      cmd_sweep(s_data, s_t, s_strategies, parse_double_list(s_grid), parse_seed_list(s_seeds),
                s_lag, s_method, s_beta, s_epochs, s_lr, s_normalize, parse_double_list(s_eps),
                s_out);
    } else if (*orc) {
      if (o_pred.empty() && (o_model.empty() || o_data.empty()))
        throw std::invalid_argument("oracle-check: need --predictions or --model with --data");
      const BundleSource source{o_model, o_pred, o_data};
      return cmd_oracle_check(source, o_c, o_mode, o_max,
                              orc_eps->count() ? std::optional<double>{o_eps} : std::nullopt);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
