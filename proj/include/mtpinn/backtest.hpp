#pragma once

// Intraday execution backtest on mid-price feeds.
//
// Input CSV `timestamp,mid_price`, timestamps ISO-8601 wall-clock in the
// session's timezone (no offset suffix). Each day is cut into the configured
// windows and resampled onto a fixed grid by last observation carried forward.
// Time is measured in trading days (session length = 1), inventory is
// normalized to chi_0 = 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtpinn/evalkit.hpp"
#include "mtpinn/run_config.hpp"

namespace mtpinn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WindowRecord {
  std::string id;  // "YYYY-MM-DDTHH:MM" of the window start
  std::string date;
  int start_seconds = 0;
  int end_seconds = 0;
  double interval_seconds = 0.0;
  std::vector<double> prices;  // grid start, start + interval, ..., end
  double horizon = 0.0;        // window length in trading days

  /// Price path on the trading-day time grid.
  PricePath path() const {
    PricePath p;
    p.times = euler_times(horizon, static_cast<int>(prices.size()) - 1);
    p.prices = prices;
    return p;
  }
};

struct IngestResult {
  std::vector<WindowRecord> windows;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string clock_text(int seconds) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02d:%02d", seconds / 3600, (seconds / 60) % 60);
  return buf;
}

struct Tick {
  double seconds;  // after local midnight
  double price;
};

/// "YYYY-MM-DDTHH:MM:SS[.fff]" (or a space separator) to (date, seconds).
inline std::pair<std::string, double> parse_timestamp(const std::string& s, std::size_t row) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  char sep = 0;
  int used = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &y, &mo, &d, &sep, &h, &mi, &sec,
                  &used) != 7 ||
      (sep != 'T' && sep != ' ') || static_cast<std::size_t>(used) != s.size() || mo < 1 ||
      mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0)
    throw DataError("feed row " + std::to_string(row) + ": bad timestamp '" + s +
                    "' (expected YYYY-MM-DDTHH:MM:SS, session-local, no offset)");
  char date[16];
  std::snprintf(date, sizeof date, "%04d-%02d-%02d", y, mo, d);
  return {date, h * 3600.0 + mi * 60.0 + sec};
}

}  // namespace detail

/// Reads the feed and cuts every day into the configured windows. A window
/// with no observations is skipped with a warning; a gap longer than
/// max_gap_factor intervals inside a window rejects the day.
inline IngestResult ingest_and_window(std::istream& is, const BacktestConfig& cfg) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("feed: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,mid_price" && line != "timestamp_iso8601,mid_price")
    throw DataError("feed: expected header 'timestamp,mid_price', got '" + line + "'");

  std::map<std::string, std::vector<detail::Tick>> days;
  for (std::size_t row = 2; std::getline(is, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("feed row " + std::to_string(row) + ": missing ','");
    const auto [date, secs] = detail::parse_timestamp(line.substr(0, comma), row);
    double price = 0.0;
    try {
      std::size_t used = 0;
      const std::string p = line.substr(comma + 1);
      price = std::stod(p, &used);
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      throw DataError("feed row " + std::to_string(row) + ": bad price");
    }
    if (!(price > 0.0) || !std::isfinite(price))
      throw DataError("feed row " + std::to_string(row) + ": price must be positive");
    auto& ticks = days[date];
    if (!ticks.empty() && !(secs > ticks.back().seconds))
      throw DataError("feed row " + std::to_string(row) + ": timestamps not strictly increasing on " + date);
    ticks.push_back({secs, price});
  }

  IngestResult out;
  const double dt = cfg.interval_seconds;
  const double max_gap = cfg.max_gap_factor * dt;
  for (const auto& [date, ticks] : days) {
    for (const auto& w : cfg.windows) {
      const std::string label = date + " " + detail::clock_text(w.start_seconds) + "-" +
                                detail::clock_text(w.end_seconds);
      // Last observation at or before the window start, then everything inside.
      auto first_in = std::lower_bound(ticks.begin(), ticks.end(), static_cast<double>(w.start_seconds),
                                       [](const detail::Tick& t, double v) { return t.seconds < v; });
      auto end_in = std::upper_bound(ticks.begin(), ticks.end(), static_cast<double>(w.end_seconds),
                                     [](double v, const detail::Tick& t) { return v < t.seconds; });
      if (first_in == end_in) {
        out.warnings.push_back("no observations in window " + label + "; window skipped");
        continue;
      }
      auto it = (first_in != ticks.begin() && first_in->seconds > w.start_seconds) ? first_in - 1 : first_in;
      double last_seen = it->seconds;
      if (last_seen > w.start_seconds && last_seen - w.start_seconds > max_gap)
        throw DataError("feed day " + date + ": gap of " + std::to_string(last_seen - w.start_seconds) +
                        " s at the start of window " + label + " exceeds " + std::to_string(max_gap) + " s");

      WindowRecord rec;
      rec.id = date + "T" + detail::clock_text(w.start_seconds);
      rec.date = date;
      rec.start_seconds = w.start_seconds;
      rec.end_seconds = w.end_seconds;
      rec.interval_seconds = dt;
      rec.horizon = (w.end_seconds - w.start_seconds) / cfg.trading_day_seconds();
      const int n = (w.end_seconds - w.start_seconds) / cfg.interval_seconds;
      double price = it->price;
      for (int k = 0; k <= n; ++k) {
        const double g = w.start_seconds + k * dt;
        while (it + 1 != ticks.end() && (it + 1)->seconds <= g) {
          ++it;
          price = it->price;
          last_seen = it->seconds;
        }
        if (g - last_seen > max_gap)
          throw DataError("feed day " + date + ": gap of " + std::to_string(g - last_seen) +
                          " s in window " + label + " exceeds " + std::to_string(max_gap) + " s");
        rec.prices.push_back(price);
      }
      out.windows.push_back(std::move(rec));
    }
  }
  return out;
}

/// Mean over windows of the per-window realized volatility in trading-day
/// units: sqrt(sum (r - rbar)^2 / (N - 1)) * sqrt(N) / sqrt(dT_W) over the N
/// log-returns of the window. The sqrt(N) factor turns the per-return std
/// into the window's std, so a GBM with volatility sigma returns sigma.
inline double estimate_volatility(const std::vector<WindowRecord>& windows) {
  if (windows.empty()) throw std::invalid_argument("estimate_volatility: no windows");
  double total = 0.0;
  for (const auto& w : windows) {
    if (w.prices.size() < 3)
      throw std::invalid_argument("estimate_volatility: window " + w.id + " needs at least 2 returns");
    std::vector<double> r;
    for (std::size_t i = 1; i < w.prices.size(); ++i) r.push_back(std::log(w.prices[i] / w.prices[i - 1]));
    const double n = static_cast<double>(r.size());
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    total += std::sqrt(ss / (n - 1.0)) * std::sqrt(n) / std::sqrt(w.horizon);
  }
  return total / static_cast<double>(windows.size());
}

/// Equal slices; the last absorbs rounding so the sum is exactly x0.
inline std::vector<double> twap_schedule(double x0, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("twap_schedule: n_steps must be >= 1");
  std::vector<double> q(static_cast<std::size_t>(n_steps), x0 / n_steps);
  double sum = 0.0;
  for (int k = 0; k + 1 < n_steps; ++k) sum += q[static_cast<std::size_t>(k)];
  q.back() = x0 - sum;
  return q;
}

struct WindowResult {
  std::string window_id;
  std::string policy;  // "twap" or "mtpinn"
  double lambda = 0.0;
  double exposure = 0.0;
  double cost_bps = 0.0;
  double residual = 0.0;  // |chi_N| left after the force-out rule
  bool violation = false;
};

/// (1/N) sum_{k<N} chi_k^2 over inventories chi_0..chi_N (the terminal one is
/// not held over an interval).
inline double inventory_exposure(const std::vector<double>& chi) {
  if (chi.size() < 2) throw std::invalid_argument("inventory_exposure: need chi_0..chi_N with N >= 1");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < chi.size(); ++k) sum += chi[k] * chi[k];
  return sum / static_cast<double>(chi.size() - 1);
}

/// Exposure of the normalized inventory (chi_0 = 1) and cost (S_0 - sum q_k S_k) / S_0 in bps
/// for trades q_k executed at the grid prices.
inline WindowResult score_trades(const WindowRecord& w, const std::vector<double>& q,
                                 double epsilon) {
  const std::size_t n = w.prices.size() - 1;
  WindowResult r;
  r.window_id = w.id;
  if (q.size() != n) throw std::invalid_argument("score_trades: one trade per grid interval expected");
  std::vector<double> held{1.0};
  double chi = 1.0, revenue = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    revenue += q[k] * w.prices[k];
    chi -= q[k];
    held.push_back(chi);
  }
  // Residual handling at the window end: small leftovers are sold at the
  // final price, larger ones are flagged.
  if (std::abs(chi) <= 2.0 * epsilon) {
    revenue += chi * w.prices[n];
    chi = 0.0;
  } else {
    r.violation = true;
  }
  r.residual = std::abs(chi);
  r.exposure = inventory_exposure(held);
  r.cost_bps = (w.prices[0] - revenue) / w.prices[0] * 1e4;
  return r;
}

inline WindowResult run_window_twap(const WindowRecord& w, double epsilon) {
  auto r = score_trades(w, twap_schedule(1.0, static_cast<int>(w.prices.size()) - 1), epsilon);
  r.policy = "twap";
  return r;
}

/// Feedback policy v = Gamma_X / 2 with the no-short clamp and no trading
/// after zero inventory. `cfg` is the model's configuration; the window length
/// must equal its horizon.
inline WindowResult run_window_policy(const ValueField& field, const WindowRecord& w,
                                      const HJBConfig& cfg, double epsilon) {
  if (std::abs(w.horizon - cfg.horizon_T) > 1e-3 * cfg.horizon_T)
    throw std::invalid_argument("run_window: window " + w.id + " lasts " + std::to_string(w.horizon) +
                                " trading days but the model horizon is " + std::to_string(cfg.horizon_T));
  const auto roll = rollout_policy(field, w.path(), 1.0, cfg, {true, true}, false);
  std::vector<double> q(roll.inventory.size());
  for (std::size_t k = 0; k < q.size(); ++k)
    q[k] = roll.inventory[k] - (k + 1 < q.size() ? roll.inventory[k + 1] : roll.terminal);
  auto r = score_trades(w, q, epsilon);
  r.policy = "mtpinn";
  r.lambda = cfg.lambda_;
  return r;
}

struct PolicyAggregate {
  std::string policy;
  double lambda = 0.0;
  std::size_t n_windows = 0;
  double mean_exposure = 0.0, exposure_std = 0.0;
  double mean_cost_bps = 0.0, cost_std_bps = 0.0;
  std::size_t violations = 0;
};

inline PolicyAggregate aggregate(const std::vector<WindowResult>& rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no windows");
  PolicyAggregate a;
  a.policy = rows.front().policy;
  a.lambda = rows.front().lambda;
  a.n_windows = rows.size();
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    a.mean_exposure += r.exposure / n;
    a.mean_cost_bps += r.cost_bps / n;
    a.violations += r.violation ? 1 : 0;
  }
  if (rows.size() > 1) {
    for (const auto& r : rows) {
      a.exposure_std += (r.exposure - a.mean_exposure) * (r.exposure - a.mean_exposure);
      a.cost_std_bps += (r.cost_bps - a.mean_cost_bps) * (r.cost_bps - a.mean_cost_bps);
    }
    a.exposure_std = std::sqrt(a.exposure_std / (n - 1.0));
    a.cost_std_bps = std::sqrt(a.cost_std_bps / (n - 1.0));
  }
  return a;
}

inline void write_window_csv(std::ostream& os, const std::vector<WindowResult>& rows) {
  os << "window_id,policy,lambda,exposure,cost_bps\n";
  for (const auto& r : rows)
    os << r.window_id << ',' << r.policy << ',' << fmt(r.lambda) << ',' << fmt(r.exposure) << ','
       << fmt(r.cost_bps) << '\n';
}

inline nlohmann::ordered_json aggregate_json(const std::vector<PolicyAggregate>& rows, double sigma_hat,
                                             double epsilon) {
  nlohmann::ordered_json j;
  j["volatility_estimate"] = sigma_hat;
  j["volatility_estimator"] = "mean over windows of sqrt(N) * std(log returns, N-1) / sqrt(window length in trading days)";
  j["force_out_threshold"] = 2.0 * epsilon;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& a : rows)
    arr.push_back({{"policy", a.policy},
                   {"lambda", a.lambda},
                   {"n_windows", a.n_windows},
                   {"mean_exposure", a.mean_exposure},
                   {"exposure_std", a.exposure_std},
                   {"mean_cost_bps", a.mean_cost_bps},
                   {"cost_std_bps", a.cost_std_bps},
                   {"violations", a.violations}});
  j["policies"] = arr;
  return j;
}

/// Synthetic feed: `feed_days` weekdays from `feed_start_date`, full session
/// at the configured interval, driftless GBM with `feed_sigma` per trading
/// day and a day-opening price uniform in [feed_s0_min, feed_s0_max].
inline void write_synthetic_feed(std::ostream& os, const BacktestConfig& cfg, std::uint64_t seed) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  if (std::sscanf(cfg.feed_start_date.c_str(), "%d-%u-%u", &y, &m, &d) != 3)
    throw std::invalid_argument("feed_start_date must be YYYY-MM-DD");
  const year_month_day start{year{y}, month{m}, day{d}};
  if (!start.ok()) throw std::invalid_argument("feed_start_date is not a valid date");
  sys_days day_it{start};

  const int n = (cfg.session_close - cfg.session_open) / cfg.interval_seconds;
  const double dt = cfg.interval_seconds / cfg.trading_day_seconds();
  const double drift = -0.5 * cfg.feed_sigma * cfg.feed_sigma * dt;
  const double vol = cfg.feed_sigma * std::sqrt(dt);
  os << "timestamp,mid_price\n";
  char buf[64];
  for (int produced = 0; produced < cfg.feed_days; day_it += days{1}) {
    const weekday wd{day_it};
    if (wd == Saturday || wd == Sunday) continue;
    const year_month_day ymd{day_it};
    Rng rng(derive_seed(seed, "feed_day", static_cast<std::uint64_t>(produced)));
    std::normal_distribution<double> normal(0.0, 1.0);
    double s = cfg.feed_s0_min + (cfg.feed_s0_max - cfg.feed_s0_min) * uniform01(rng);
    for (int k = 0; k <= n; ++k) {
      if (k > 0) s *= std::exp(drift + vol * normal(rng));
      const int t = cfg.session_open + k * cfg.interval_seconds;
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d,%.10f\n", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), t / 3600,
                    (t / 60) % 60, t % 60, s);
      os << buf;
    }
    ++produced;
  }
}

}  // namespace mtpinn
