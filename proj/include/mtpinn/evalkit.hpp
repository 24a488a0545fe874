#pragma once

// Synthetic-benchmark diagnostics: policy rollouts along price paths,
// terminal-inventory statistics, value-surface errors against the closed form,
// and pathwise error curves.
//
// Path-error reference: the closed-form control stepped with the same Euler
// map on the same grid (exact field through rollout_policy), so the exact
// field gives identically zero curves. The discretization gap of that
// reference against the continuous-time optimum is reported separately as
// `euler_gap`.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/field.hpp"
#include "mtpinn/parallel.hpp"
#include "mtpinn/sampler.hpp"

namespace mtpinn {

struct RolloutFlags {
  bool clamp_at_zero = false;  // floor X at 0 and stop trading once it is reached
  bool no_short = false;       // never trade in the direction that grows |X|
};

/// Series at the decision times t_0 .. t_{N-1}; the state after the last step
/// is `terminal`.
struct RolloutResult {
  std::vector<double> times;
  std::vector<double> inventory;
  std::vector<double> rate;
  std::vector<double> value;
  double terminal = 0.0;
};

/// Euler rollout of v = Gamma_X / 2 on the grid of `path`; the horizon is the
/// path's last time. With both flags off and a constant path this is the
/// training rollout step for step.
inline RolloutResult rollout_policy(const ValueField& field, const PricePath& path, double x0,
                                    const HJBConfig& cfg, RolloutFlags flags = {},
                                    bool with_value = true) {
  path.validate();
  const std::size_t n = path.size() - 1;
  if (n < 1) throw std::invalid_argument("rollout_policy: path needs at least one step");
  const double horizon = path.times.back();
  RolloutResult r;
  r.times.assign(path.times.begin(), path.times.end() - 1);
  r.inventory.resize(n);
  r.rate.resize(n);
  r.value.resize(with_value ? n : 0);
  double x = x0;
  bool done = false;
  for (std::size_t k = 0; k < n; ++k) {
    const StatePoint p{std::max(horizon - path.times[k], cfg.tau_min()), x, path.prices[k]};
    r.inventory[k] = x;
    if (with_value) r.value[k] = field.value(p);
    double v = done ? 0.0 : 0.5 * field.d_x(p);
    if (flags.no_short && (x == 0.0 || v * x < 0.0)) v = 0.0;
    r.rate[k] = v;
    double next = x - (path.times[k + 1] - path.times[k]) * v;
    if (!std::isfinite(next))
      throw std::runtime_error("rollout_policy: non-finite inventory at Euler step " +
                               std::to_string(k));
    if ((flags.clamp_at_zero || flags.no_short) && (next == 0.0 || next * x < 0.0)) {
      // Over-liquidation: sell exactly what is left.
      r.rate[k] = x / (path.times[k + 1] - path.times[k]);
      next = 0.0;
    }
    if (flags.clamp_at_zero && next == 0.0) done = true;
    x = next;
  }
  r.terminal = x;
  return r;
}

struct TerminalStats {
  double mean = 0.0;
  double std = 0.0;
  double p95 = 0.0;
  double pass_rate = 0.0;
  double epsilon = 0.0;
  std::size_t n = 0;
};

/// Statistics of |X_T|: sample std with n-1, nearest-rank 95th percentile,
/// pass rate Pr(|X_T| <= eps).
inline TerminalStats terminal_stats(const std::vector<double>& terminals, double epsilon) {
  if (terminals.empty()) throw std::invalid_argument("terminal_stats: empty sample");
  std::vector<double> a(terminals.size());
  std::transform(terminals.begin(), terminals.end(), a.begin(), [](double v) { return std::abs(v); });
  TerminalStats s;
  s.n = a.size();
  s.epsilon = epsilon;
  const double n = static_cast<double>(s.n);
  // Sorted sums make the statistics exactly permutation invariant.
  std::sort(a.begin(), a.end());
  s.mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : a) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  s.p95 = a[std::max<std::size_t>(rank, 1) - 1];
  s.pass_rate = static_cast<double>(std::count_if(a.begin(), a.end(),
                                                  [&](double v) { return v <= epsilon; })) / n;
  return s;
}

inline constexpr double kRelativeErrorFloor = 1e-8;

struct ErrorMetrics {
  double mae = 0.0;
  double max_ae = 0.0;
  double mre = 0.0;
  double rmse = 0.0;
};

/// MAE, MaxAE, MRE (denominator max(|exact|, 1e-8)) and RMSE.
inline ErrorMetrics error_metrics(const std::vector<double>& pred, const std::vector<double>& exact) {
  if (pred.size() != exact.size() || pred.empty())
    throw std::invalid_argument("error_metrics: size mismatch or empty");
  ErrorMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = std::abs(pred[i] - exact[i]);
    m.mae += e;
    m.max_ae = std::max(m.max_ae, e);
    m.mre += e / std::max(std::abs(exact[i]), kRelativeErrorFloor);
    m.rmse += e * e;
  }
  const double n = static_cast<double>(pred.size());
  m.mae /= n;
  m.mre /= n;
  m.rmse = std::sqrt(m.rmse / n);
  return m;
}

struct SurfaceErrorReport {
  ErrorMetrics original;
  ErrorMetrics asinh;  // metrics of asinh(pred) against asinh(exact)
  int n_t = 0;
  int n_x = 0;
  double s = 0.0;
  /// Long-form grid, one entry per (tau_i, X_j): t = T - tau.
  std::vector<double> t, x, pred, exact;
};

/// Grid tau_i = T i / n_t (i = 1..n_t) times an even X lattice, at fixed S.
inline SurfaceErrorReport surface_errors(const ValueField& field, const HJBConfig& cfg, int n_t,
                                         int n_x, double s) {
  if (n_t < 1 || n_x < 1) throw std::invalid_argument("surface_errors: grid counts must be >= 1");
  SurfaceErrorReport r;
  r.n_t = n_t;
  r.n_x = n_x;
  r.s = s;
  const auto xs = lattice(cfg.x_range, static_cast<std::size_t>(n_x));
  std::vector<double> asinh_pred, asinh_exact;
  for (int i = 1; i <= n_t; ++i) {
    const double tau = cfg.horizon_T * i / n_t;
    for (double x : xs) {
      const StatePoint p{tau, x, s};
      r.t.push_back(cfg.horizon_T - tau);
      r.x.push_back(x);
      r.pred.push_back(field.value(p));
      r.exact.push_back(value_exact(p, cfg));
      asinh_pred.push_back(std::asinh(r.pred.back()));
      asinh_exact.push_back(std::asinh(r.exact.back()));
    }
  }
  r.original = error_metrics(r.pred, r.exact);
  r.asinh = error_metrics(asinh_pred, asinh_exact);
  return r;
}

/// Per-time mean and std (n-1) across paths of |Gamma - Gamma_hat|,
/// |x - x_hat|, |v - v_hat|, plus the mean |x_ref - X*| of the reference.
struct PathErrorCurves {
  std::vector<double> times;
  std::vector<double> gamma_mean, gamma_std;
  std::vector<double> x_mean, x_std;
  std::vector<double> v_mean, v_std;
  std::vector<double> euler_gap;
};

inline PathErrorCurves path_error_curves(const ValueField& field, const std::vector<PricePath>& paths,
                                         double x0, const HJBConfig& cfg, int threads = 1) {
  if (paths.size() < 2) throw std::invalid_argument("path_error_curves: needs at least 2 paths");
  const std::size_t n = paths.front().size() - 1;
  for (const auto& p : paths)
    if (p.times != paths.front().times)
      throw std::invalid_argument("path_error_curves: paths must share one time grid");

  struct PerPath {
    std::vector<double> g, x, v, gap;
  };
  std::vector<PerPath> per(paths.size());
  parallel_for(paths.size(), threads, [&](std::size_t i) {
    const auto net = field.clone();
    const ExactField exact(cfg);
    const auto& path = paths[i];
    const auto a = rollout_policy(*net, path, x0, cfg);
    const auto b = rollout_policy(exact, path, x0, cfg);
    const auto star = optimal_inventory_path(path, x0, cfg);
    auto& out = per[i];
    for (std::size_t k = 0; k < n; ++k) {
      out.g.push_back(std::abs(b.value[k] - a.value[k]));
      out.x.push_back(std::abs(b.inventory[k] - a.inventory[k]));
      out.v.push_back(std::abs(b.rate[k] - a.rate[k]));
      out.gap.push_back(std::abs(b.inventory[k] - star[k]));
    }
  });

  PathErrorCurves c;
  c.times.assign(paths.front().times.begin(), paths.front().times.end() - 1);
  const double m = static_cast<double>(paths.size());
  auto stats = [&](auto member, std::vector<double>& mean, std::vector<double>* sd) {
    mean.assign(n, 0.0);
    if (sd) sd->assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (const auto& p : per) s += (p.*member)[k];
      mean[k] = s / m;
      if (!sd) continue;
      double ss = 0.0;
      for (const auto& p : per) ss += ((p.*member)[k] - mean[k]) * ((p.*member)[k] - mean[k]);
      (*sd)[k] = std::sqrt(ss / (m - 1.0));
    }
  };
  stats(&PerPath::g, c.gamma_mean, &c.gamma_std);
  stats(&PerPath::x, c.x_mean, &c.x_std);
  stats(&PerPath::v, c.v_mean, &c.v_std);
  stats(&PerPath::gap, c.euler_gap, nullptr);
  return c;
}

/// The fixed evaluation path set: GBM from s0 with seeds 0..n_paths-1 on an
/// n_steps grid over [0, T].
inline std::vector<PricePath> evaluation_paths(double s0, const HJBConfig& cfg, int n_paths,
                                               int n_steps) {
  std::vector<PricePath> out;
  out.reserve(static_cast<std::size_t>(n_paths));
  for (int i = 0; i < n_paths; ++i)
    out.push_back(simulate_gbm(s0, cfg, static_cast<std::size_t>(n_steps), static_cast<std::uint64_t>(i)));
  return out;
}

/// Terminal inventories of the unclamped policy over `paths`.
inline std::vector<double> terminal_inventories(const ValueField& field,
                                                const std::vector<PricePath>& paths, double x0,
                                                const HJBConfig& cfg, int threads = 1) {
  std::vector<double> out(paths.size());
  parallel_for(paths.size(), threads, [&](std::size_t i) {
    const auto f = field.clone();
    out[i] =
        rollout_policy(*f, paths[i], x0, cfg, {}, false).terminal;
  });
  return out;
}

// ---- exports ---------------------------------------------------------------

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_terminal_stats_csv(std::ostream& os, const std::string& model, double lambda,
                                     const TerminalStats& s) {
  os << "model,lambda,n_paths,epsilon,mean,std,p95,p_eps\n"
     << model << ',' << fmt(lambda) << ',' << s.n << ',' << fmt(s.epsilon) << ',' << fmt(s.mean)
     << ',' << fmt(s.std) << ',' << fmt(s.p95) << ',' << fmt(s.pass_rate) << '\n';
}

inline void write_terminals_csv(std::ostream& os, const std::vector<double>& terminals) {
  os << "path,x_T\n";
  for (std::size_t i = 0; i < terminals.size(); ++i) os << i << ',' << fmt(terminals[i]) << '\n';
}

inline void write_surface_metrics_csv(std::ostream& os, const SurfaceErrorReport& r) {
  os << "space,mae,max_ae,mre,rmse,mre_floor,n_t,n_x,s\n";
  for (const auto& [name, m] : {std::pair{"original", r.original}, std::pair{"asinh", r.asinh}})
    os << name << ',' << fmt(m.mae) << ',' << fmt(m.max_ae) << ',' << fmt(m.mre) << ','
       << fmt(m.rmse) << ',' << fmt(kRelativeErrorFloor) << ',' << r.n_t << ',' << r.n_x << ','
       << fmt(r.s) << '\n';
}

/// Long-form grid `t,x,err,asinh_err` with err = |pred - exact|.
inline void write_surface_grid_csv(std::ostream& os, const SurfaceErrorReport& r) {
  os << "t,x,err,asinh_err\n";
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    const double e = std::abs(r.pred[i] - r.exact[i]);
    os << fmt(r.t[i]) << ',' << fmt(r.x[i]) << ',' << fmt(e) << ',' << fmt(std::asinh(e)) << '\n';
  }
}

inline void write_path_errors_csv(std::ostream& os, const PathErrorCurves& c) {
  os << "t,gamma_err_mean,gamma_err_std,x_err_mean,x_err_std,v_err_mean,v_err_std,euler_gap\n";
  for (std::size_t k = 0; k < c.times.size(); ++k)
    os << fmt(c.times[k]) << ',' << fmt(c.gamma_mean[k]) << ',' << fmt(c.gamma_std[k]) << ','
       << fmt(c.x_mean[k]) << ',' << fmt(c.x_std[k]) << ',' << fmt(c.v_mean[k]) << ','
       << fmt(c.v_std[k]) << ',' << fmt(c.euler_gap[k]) << '\n';
}

inline nlohmann::ordered_json metrics_json(const ErrorMetrics& m) {
  return {{"mae", m.mae}, {"max_ae", m.max_ae}, {"mre", m.mre}, {"rmse", m.rmse}};
}

inline nlohmann::ordered_json terminal_stats_json(const TerminalStats& s) {
  return {{"n_paths", s.n},   {"epsilon", s.epsilon}, {"mean", s.mean},
          {"std", s.std},     {"p95", s.p95},         {"p_eps", s.pass_rate}};
}

}  // namespace mtpinn
