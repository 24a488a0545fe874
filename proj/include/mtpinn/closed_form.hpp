#pragma once

// Exact solutions of the liquidation problem with quadratic
// permanent-impact penalty and linear risk term lambda*S*X.
//
//   value    G(tau,X,S) = k X^2 coth(k tau) + (l X S / k) tanh(k tau / 2)
//                         - l^2 S^2 e^{s^2 tau} / (4 k^2) * I(tau)
//   I(tau)   = int_0^tau tanh^2(k u / 2) e^{-s^2 u} du
//   rate     v = X k coth(k (T-t)) + (l S / 2k) tanh(k (T-t) / 2)
//   path     X_t = sinh(k (T-t)) [X_0 / sinh(k T) - l/(2k) int_0^t S_u / (1 + cosh(k (T-u))) du]

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/quadrature.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct HJBConfig {
  double kappa = 0.1;
  double sigma = 0.1;
  double lambda_ = 0.0;
  double horizon_T = 5.0;
  Interval x_range{-10.0, 10.0};
  Interval s_range{10.0, 100.0};

  bool risk_neutral() const { return lambda_ == 0.0; }
  /// Smallest admissible time-to-maturity; the terminal condition is +inf off X = 0.
  double tau_min() const { return 1e-6 * horizon_T; }

  void validate() const {
    if (!(kappa > 0.0)) throw std::invalid_argument("HJBConfig: kappa must be > 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("HJBConfig: sigma must be >= 0");
    if (!(lambda_ >= 0.0)) throw std::invalid_argument("HJBConfig: lambda must be >= 0");
    if (!(horizon_T > 0.0)) throw std::invalid_argument("HJBConfig: horizon_T must be > 0");
    if (!(x_range.hi >= x_range.lo)) throw std::invalid_argument("HJBConfig: empty x_range");
    if (!(s_range.hi >= s_range.lo)) throw std::invalid_argument("HJBConfig: empty s_range");
  }
};

struct StatePoint {
  double tau = 0.0;
  double x = 0.0;
  double s = 0.0;
};

struct PricePath {
  std::vector<double> times;
  std::vector<double> prices;

  std::size_t size() const { return times.size(); }

  void validate() const {
    if (times.size() != prices.size())
      throw std::invalid_argument("PricePath: times and prices differ in length");
    if (times.empty()) throw std::invalid_argument("PricePath: empty path");
    if (times.front() != 0.0) throw std::invalid_argument("PricePath: times must start at 0");
    for (std::size_t k = 1; k < times.size(); ++k) {
      if (!(times[k] > times[k - 1]))
        throw std::invalid_argument("PricePath: times not strictly increasing at index " +
                                    std::to_string(k));
    }
    for (std::size_t k = 0; k < prices.size(); ++k) {
      if (!(prices[k] > 0.0))
        throw std::invalid_argument("PricePath: non-positive price at index " +
                                    std::to_string(k));
    }
  }
};

namespace detail {

inline double coth(double v) { return 1.0 / std::tanh(v); }

inline double sech2(double v) {
  const double c = std::cosh(v);
  return 1.0 / (c * c);
}

inline void require_positive_tau(double tau, const char* who) {
  if (!(tau > 0.0)) {
    throw std::domain_error(std::string(who) + ": time-to-maturity must be > 0 (got " +
                            std::to_string(tau) + ")");
  }
}

}  // namespace detail

/// I(tau) = int_0^tau tanh^2(k u / 2) e^{-s^2 u} du by adaptive Simpson.
inline double value_integral(double tau, const HJBConfig& cfg,
                             const QuadratureOptions& opts = {}) {
  const double k = cfg.kappa;
  const double s2 = cfg.sigma * cfg.sigma;
  return adaptive_simpson(
      [k, s2](double u) {
        const double t = std::tanh(0.5 * k * u);
        return t * t * std::exp(-s2 * u);
      },
      0.0, tau, opts);
}

inline double value_exact(const StatePoint& p, const HJBConfig& cfg) {
  detail::require_positive_tau(p.tau, "value_exact");
  const double k = cfg.kappa;
  const double base = k * p.x * p.x * detail::coth(p.tau * k);
  if (cfg.risk_neutral()) return base;
  const double l = cfg.lambda_;
  const double cross = l * p.x * p.s / k * std::tanh(0.5 * p.tau * k);
  const double integral = value_integral(p.tau, cfg);
  const double quad = l * l * p.s * p.s * std::exp(cfg.sigma * cfg.sigma * p.tau) /
                      (4.0 * k * k) * integral;
  return base + cross - quad;
}

/// Analytic derivatives of the exact value function at p.
struct ExactDerivatives {
  double value = 0.0;
  double d_tau = 0.0;
  double d_x = 0.0;
  double d_s = 0.0;
  double d_ss = 0.0;
};

inline ExactDerivatives value_exact_derivatives(const StatePoint& p, const HJBConfig& cfg) {
  detail::require_positive_tau(p.tau, "value_exact_derivatives");
  const double k = cfg.kappa;
  const double kt = k * p.tau;
  const double coth = detail::coth(kt);
  const double sinh = std::sinh(kt);
  ExactDerivatives d;
  d.value = k * p.x * p.x * coth;
  d.d_tau = -k * k * p.x * p.x / (sinh * sinh);
  d.d_x = 2.0 * k * p.x * coth;
  if (cfg.risk_neutral()) return d;

  const double l = cfg.lambda_;
  const double s2 = cfg.sigma * cfg.sigma;
  const double th = std::tanh(0.5 * kt);
  const double growth = std::exp(s2 * p.tau);
  const double integral = value_integral(p.tau, cfg);
  const double c = l * l / (4.0 * k * k);

  d.value += l * p.x * p.s / k * th - c * p.s * p.s * growth * integral;
  d.d_tau += 0.5 * l * p.x * p.s * detail::sech2(0.5 * kt) -
             c * p.s * p.s * (s2 * growth * integral + th * th);
  d.d_x += l * p.s / k * th;
  d.d_s = l * p.x / k * th - 2.0 * c * p.s * growth * integral;
  d.d_ss = -2.0 * c * growth * integral;
  return d;
}

/// Optimal selling rate at calendar time t (t < T).
inline double optimal_rate(double t, double x, double s, const HJBConfig& cfg) {
  const double tau = cfg.horizon_T - t;
  if (!(tau > 0.0)) {
    throw std::domain_error("optimal_rate: t must be < T (got t=" + std::to_string(t) + ")");
  }
  const double k = cfg.kappa;
  double v = x * k * detail::coth(k * tau);
  if (!cfg.risk_neutral()) v += cfg.lambda_ * s / (2.0 * k) * std::tanh(0.5 * k * tau);
  return v;
}

/// Closed-form optimal inventory on the grid of `path`; the price integral is
/// the trapezoid rule on that grid.
inline std::vector<double> optimal_inventory_path(const PricePath& path, double x0,
                                                  const HJBConfig& cfg) {
  path.validate();
  const double T = cfg.horizon_T;
  if (std::abs(path.times.back() - T) > 1e-12 * T) {
    throw std::invalid_argument("optimal_inventory_path: path must end at the horizon T");
  }
  const double k = cfg.kappa;
  const std::size_t n = path.size();
  const double scale = x0 / std::sinh(k * T);
  const double drift = cfg.lambda_ / (2.0 * k);

  std::vector<double> out(n);
  double integral = 0.0;
  double prev = path.prices[0] / (1.0 + std::cosh(k * T));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = path.times[i];
    if (i > 0) {
      const double cur = path.prices[i] / (1.0 + std::cosh(k * (T - t)));
      integral += 0.5 * (t - path.times[i - 1]) * (prev + cur);
      prev = cur;
    }
    // The last grid point is the horizon itself; sinh(0) pins it to zero.
    const double remaining = (i + 1 == n) ? 0.0 : T - t;
    out[i] = std::sinh(k * remaining) * (scale - drift * integral);
  }
  // X*_0 = x0 exactly, not sinh(kT) * (x0 / sinh(kT)).
  out[0] = x0;
  return out;
}

/// Reduced HJB residual. lambda = 0 ignores d_ss and s.
inline double hjb_residual(const StatePoint& p, double d_tau, double d_x, double d_ss,
                           const HJBConfig& cfg) {
  const double k2x2 = cfg.kappa * cfg.kappa * p.x * p.x;
  double r = d_tau - k2x2 + 0.25 * d_x * d_x;
  if (!cfg.risk_neutral()) {
    r -= 0.5 * cfg.sigma * cfg.sigma * p.s * p.s * d_ss + cfg.lambda_ * p.s * p.x;
  }
  return r;
}

/// Driftless GBM on a uniform grid of n_steps intervals over [0, T], using the
/// exact log-normal transition.
inline PricePath simulate_gbm(double s0, const HJBConfig& cfg, std::size_t n_steps,
                              std::uint64_t seed) {
  if (!(s0 > 0.0)) throw std::invalid_argument("simulate_gbm: s0 must be > 0");
  if (n_steps < 1) throw std::invalid_argument("simulate_gbm: n_steps must be >= 1");
  const double dt = cfg.horizon_T / static_cast<double>(n_steps);
  const double drift = -0.5 * cfg.sigma * cfg.sigma * dt;
  const double vol = cfg.sigma * std::sqrt(dt);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PricePath path;
  path.times.resize(n_steps + 1);
  path.prices.resize(n_steps + 1);
  path.times[0] = 0.0;
  path.prices[0] = s0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    path.times[k + 1] = static_cast<double>(k + 1) * dt;
    path.prices[k + 1] = path.prices[k] * std::exp(drift + vol * normal(rng));
  }
  path.times[n_steps] = cfg.horizon_T;
  return path;
}

inline void write_price_path_csv(std::ostream& os, const PricePath& path) {
  os << "time,price\n";
  char buf[64];
  for (std::size_t i = 0; i < path.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", path.times[i], path.prices[i]);
    os << buf;
  }
}

inline PricePath read_price_path_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("price path CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time,price") {
    throw std::runtime_error("price path CSV: expected header 'time,price', got '" + line + "'");
  }
  PricePath path;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("price path CSV: malformed row " + std::to_string(row));
    }
    try {
      path.times.push_back(std::stod(line.substr(0, comma)));
      path.prices.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw std::runtime_error("price path CSV: malformed number in row " + std::to_string(row));
    }
  }
  path.validate();
  return path;
}

}  // namespace mtpinn
