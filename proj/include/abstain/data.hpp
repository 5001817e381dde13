#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "abstain/format.hpp"
#include "abstain/rng.hpp"
#include "abstain/series.hpp"

namespace abstain {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Synthetic heteroscedastic testbed
// ---------------------------------------------------------------------------

/// AR(1) series with a regime-dependent future noise level. A quarter of the
/// series draw an amplified innovation variance for the horizon; the regime
/// (and the series' idiosyncratic noise multiplier) is written into the last
/// quarter of the past as a level marker proportional to the multiplier, so
/// the conditional risk is linearly readable from the lag features. With
/// noise_amplification == 1 every series shares the same noise variance.
struct SyntheticConfig {
  int n_series = 2000;
  int t_past = 40;
  int horizon = 10;
  double ar_coeff = 0.6;
  double base_noise_sd = 1.0;
  double noise_amplification = 4.0;  // variance multiplier for the high regime
  std::uint64_t seed = 1;

  void validate() const {
    if (n_series < 1) throw std::invalid_argument("SyntheticConfig: n_series must be >= 1");
    if (t_past < 4) throw std::invalid_argument("SyntheticConfig: t_past must be >= 4");
    if (horizon < 1) throw std::invalid_argument("SyntheticConfig: horizon must be >= 1");
    if (!(std::abs(ar_coeff) < 1.0))
      throw std::invalid_argument("SyntheticConfig: ar_coeff must be in (-1, 1)");
    if (!(base_noise_sd > 0.0))
      throw std::invalid_argument("SyntheticConfig: base_noise_sd must be > 0");
    if (!(noise_amplification >= 1.0))
      throw std::invalid_argument("SyntheticConfig: noise_amplification must be >= 1");
  }
};

struct SyntheticData {
  std::vector<SeriesWindow> windows;
  /// True conditional variance of each horizon step given the past,
  /// per series: innovation variance accumulated through the AR recursion.
  std::vector<std::vector<double>> true_variances;
};

inline SyntheticData generate(const SyntheticConfig& config) {
  config.validate();
  SplitMix64 rng(config.seed);
  const double ar = config.ar_coeff;
  const double stationary_sd = config.base_noise_sd / std::sqrt(1.0 - ar * ar);
  const int marker_len = std::max(1, config.t_past / 4);

  SyntheticData data;
  data.windows.reserve(static_cast<std::size_t>(config.n_series));
  data.true_variances.reserve(static_cast<std::size_t>(config.n_series));

  for (int i = 0; i < config.n_series; ++i) {
    const bool high_regime = rng.bernoulli(0.25);
    const double u = rng.next_double();
    const double z = high_regime ? 0.75 + 0.25 * u : 0.25 * u;
    const double var_mult = 1.0 + (config.noise_amplification - 1.0) * z;
    const double future_sd = config.base_noise_sd * std::sqrt(var_mult);
    const double marker_level = 3.0 * stationary_sd * var_mult;

    SeriesWindow w;
    w.id = "s" + std::to_string(i + 1);
    w.past.resize(static_cast<std::size_t>(config.t_past));
    w.past[0] = stationary_sd * rng.next_gaussian();
    for (int t = 1; t < config.t_past; ++t)
      w.past[static_cast<std::size_t>(t)] =
          ar * w.past[static_cast<std::size_t>(t - 1)] + config.base_noise_sd * rng.next_gaussian();
    for (int t = config.t_past - marker_len; t < config.t_past; ++t)
      w.past[static_cast<std::size_t>(t)] += marker_level;

    std::vector<double> future(static_cast<std::size_t>(config.horizon));
    double prev = w.past.back();
    for (int t = 0; t < config.horizon; ++t) {
      prev = ar * prev + future_sd * rng.next_gaussian();
      future[static_cast<std::size_t>(t)] = prev;
    }
    w.future = std::move(future);

    std::vector<double> variances(static_cast<std::size_t>(config.horizon));
    double accum = 0.0;
    double ar_pow = 1.0;  // ar^(2j) running product
    for (int t = 0; t < config.horizon; ++t) {
      accum += ar_pow;
      ar_pow *= ar * ar;
      variances[static_cast<std::size_t>(t)] = future_sd * future_sd * accum;
    }

    data.windows.push_back(std::move(w));
    data.true_variances.push_back(std::move(variances));
  }
  return data;
}

// ---------------------------------------------------------------------------
// CSV ingestion and output
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double parse_double(const std::string& field, std::size_t line_no, const char* what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
  return v;
}

inline long parse_int(const std::string& field, std::size_t line_no, const char* what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(field.c_str(), &end, 10);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
  return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

/// Read `id,t,value` rows into per-series windows, splitting each series at
/// t_past. Every id must cover t = 1..len consecutively with no duplicates,
/// and all series must share the same length >= t_past.
inline std::vector<SeriesWindow> read_series_csv(const std::string& path, int t_past) {
  if (t_past < 1) throw std::invalid_argument("read_series_csv: t_past must be >= 1");
  const std::vector<std::string> lines = detail::read_lines(path);
  if (lines.empty() || lines[0] != "id,t,value")
    throw ParseError(path + ": expected header 'id,t,value'");

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::pair<long, double>>> rows;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = detail::split_csv_line(lines[ln]);
    if (fields.size() != 3)
      throw ParseError(path + ": line " + std::to_string(ln + 1) + ": expected 3 fields");
    const std::string& id = fields[0];
    const long t = detail::parse_int(fields[1], ln + 1, "t");
    const double v = detail::parse_double(fields[2], ln + 1, "value");
    if (t < 1) throw ParseError(path + ": line " + std::to_string(ln + 1) + ": t must be >= 1");
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    for (const auto& existing : it->second)
      if (existing.first == t)
        throw ParseError(path + ": series '" + id + "': duplicate t=" + std::to_string(t) +
                         " at line " + std::to_string(ln + 1));
    it->second.emplace_back(t, v);
  }
  if (order.empty()) throw ParseError(path + ": no data rows");

  std::vector<SeriesWindow> windows;
  windows.reserve(order.size());
  std::size_t common_len = 0;
  for (const auto& id : order) {
    auto& series_rows = rows[id];
    std::sort(series_rows.begin(), series_rows.end());
    for (std::size_t i = 0; i < series_rows.size(); ++i)
      if (series_rows[i].first != static_cast<long>(i + 1))
        throw ParseError(path + ": series '" + id + "': missing t=" + std::to_string(i + 1));
    if (common_len == 0)
      common_len = series_rows.size();
    else if (series_rows.size() != common_len)
      throw ParseError(path + ": series '" + id + "': length " +
                       std::to_string(series_rows.size()) + " differs from " +
                       std::to_string(common_len));
    if (static_cast<int>(common_len) < t_past)
      throw ParseError(path + ": series '" + id + "': shorter than t_past");

    SeriesWindow w;
    w.id = id;
    w.past.reserve(static_cast<std::size_t>(t_past));
    for (int t = 0; t < t_past; ++t) w.past.push_back(series_rows[static_cast<std::size_t>(t)].second);
    if (static_cast<int>(common_len) > t_past) {
      std::vector<double> future;
      future.reserve(common_len - static_cast<std::size_t>(t_past));
      for (std::size_t t = static_cast<std::size_t>(t_past); t < common_len; ++t)
        future.push_back(series_rows[t].second);
      w.future = std::move(future);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

inline std::string series_csv(const std::vector<SeriesWindow>& windows) {
  std::string out = "id,t,value\n";
  for (const auto& w : windows) {
    long t = 1;
    for (double v : w.past) {
      out += w.id + "," + std::to_string(t++) + "," + detail::g17(v) + "\n";
    }
    if (w.future)
      for (double v : *w.future) out += w.id + "," + std::to_string(t++) + "," + detail::g17(v) + "\n";
  }
  return out;
}

/// Read `id,step,mean,variance` rows into forecast bundles; steps must run
/// 1..H consecutively per id and variances must be positive.
inline std::vector<ForecastBundle> read_predictions_csv(const std::string& path) {
  const std::vector<std::string> lines = detail::read_lines(path);
  if (lines.empty() || lines[0] != "id,step,mean,variance")
    throw ParseError(path + ": expected header 'id,step,mean,variance'");

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::pair<long, std::pair<double, double>>>> rows;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = detail::split_csv_line(lines[ln]);
    if (fields.size() != 4)
      throw ParseError(path + ": line " + std::to_string(ln + 1) + ": expected 4 fields");
    const std::string& id = fields[0];
    const long step = detail::parse_int(fields[1], ln + 1, "step");
    const double mean = detail::parse_double(fields[2], ln + 1, "mean");
    const double variance = detail::parse_double(fields[3], ln + 1, "variance");
    if (variance <= 0.0)
      throw ParseError(path + ": line " + std::to_string(ln + 1) +
                       ": variance must be positive");
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    for (const auto& existing : it->second)
      if (existing.first == step)
        throw ParseError(path + ": series '" + id + "': duplicate step=" +
                         std::to_string(step) + " at line " + std::to_string(ln + 1));
    it->second.emplace_back(step, std::make_pair(mean, variance));
  }
  if (order.empty()) throw ParseError(path + ": no data rows");

  std::vector<ForecastBundle> bundles;
  std::size_t common_h = 0;
  for (const auto& id : order) {
    auto& series_rows = rows[id];
    std::sort(series_rows.begin(), series_rows.end());
    for (std::size_t i = 0; i < series_rows.size(); ++i)
      if (series_rows[i].first != static_cast<long>(i + 1))
        throw ParseError(path + ": series '" + id + "': missing step=" + std::to_string(i + 1));
    if (common_h == 0)
      common_h = series_rows.size();
    else if (series_rows.size() != common_h)
      throw ParseError(path + ": series '" + id + "': horizon differs across series");
    ForecastBundle b;
    b.id = id;
    for (const auto& [step, mv] : series_rows) {
      b.means.push_back(mv.first);
      b.variances.push_back(mv.second);
    }
    bundles.push_back(std::move(b));
  }
  return bundles;
}

inline std::string predictions_csv(const std::vector<ForecastBundle>& bundles) {
  std::string out = "id,step,mean,variance\n";
  for (const auto& b : bundles)
    for (int t = 0; t < b.horizon(); ++t)
      out += b.id + "," + std::to_string(t + 1) + "," +
             detail::g17(b.means[static_cast<std::size_t>(t)]) + "," +
             detail::g17(b.variances[static_cast<std::size_t>(t)]) + "\n";
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

// ---------------------------------------------------------------------------
// Normalization and splitting
// ---------------------------------------------------------------------------

struct ScaleRecord {
  std::string id;
  double min = 0.0;
  double max = 1.0;
};

/// Per-series min-max normalization with statistics taken from the past
/// segment only (futures are unavailable at prediction time); the affine map
/// is applied to past and future alike and the statistics are returned for
/// the inverse transform.
inline std::pair<std::vector<SeriesWindow>, std::vector<ScaleRecord>> minmax_normalize(
    std::vector<SeriesWindow> windows) {
  std::vector<ScaleRecord> records;
  records.reserve(windows.size());
  for (auto& w : windows) {
    const auto [lo_it, hi_it] = std::minmax_element(w.past.begin(), w.past.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo))
      throw std::invalid_argument("minmax_normalize: series '" + w.id +
                                  "' has a constant past (degenerate scale)");
    const double scale = 1.0 / (hi - lo);
    for (double& v : w.past) v = (v - lo) * scale;
    if (w.future)
      for (double& v : *w.future) v = (v - lo) * scale;
    records.push_back({w.id, lo, hi});
  }
  return {std::move(windows), std::move(records)};
}

inline std::vector<SeriesWindow> minmax_denormalize(std::vector<SeriesWindow> windows,
                                                    const std::vector<ScaleRecord>& records) {
  if (windows.size() != records.size())
    throw std::invalid_argument("minmax_denormalize: record count mismatch");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double lo = records[i].min, span = records[i].max - records[i].min;
    for (double& v : windows[i].past) v = lo + v * span;
    if (windows[i].future)
      for (double& v : *windows[i].future) v = lo + v * span;
  }
  return windows;
}

struct SplitData {
  std::vector<SeriesWindow> train;
  std::vector<SeriesWindow> calib;
  std::vector<SeriesWindow> test;
};

/// Seeded shuffle followed by a 60/20/20 partition by whole series.
inline SplitData split_60_20_20(const std::vector<SeriesWindow>& windows, std::uint64_t seed) {
  const std::size_t n = windows.size();
  if (n < 5) throw std::invalid_argument("split_60_20_20: need at least 5 series");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
  const auto n_calib = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  SplitData split;
  for (std::size_t i = 0; i < n; ++i) {
    const SeriesWindow& w = windows[idx[i]];
    if (i < n_train)
      split.train.push_back(w);
    else if (i < n_train + n_calib)
      split.calib.push_back(w);
    else
      split.test.push_back(w);
  }
  return split;
}

}  // namespace abstain
