#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// they are used to check.

#include <cmath>
#include <functional>
#include <vector>

#include "mtpinn/diffnet.hpp"

namespace mtpinn::oracle {

/// Romberg integration (Richardson-refined trapezoid) in long double.
inline long double romberg(const std::function<long double(long double)>& f, long double a,
                           long double b, long double tol = 1e-13L, int max_levels = 24) {
  std::vector<long double> prev(1), cur;
  long double h = b - a;
  prev[0] = 0.5L * h * (f(a) + f(b));
  for (int level = 1; level < max_levels; ++level) {
    h *= 0.5L;
    long double sum = 0.0L;
    const long n = 1L << (level - 1);
    for (long i = 0; i < n; ++i) sum += f(a + (2 * i + 1) * h);
    cur.assign(level + 1, 0.0L);
    cur[0] = 0.5L * prev[0] + h * sum;
    long double factor = 4.0L;
    for (int j = 1; j <= level; ++j) {
      cur[j] = cur[j - 1] + (cur[j - 1] - prev[j - 1]) / (factor - 1.0L);
      factor *= 4.0L;
    }
    if (level > 4 && std::fabs(cur[level] - prev[level - 1]) < tol) return cur[level];
    prev.swap(cur);
  }
  return prev.back();
}

/// Exact value function re-derived in long double with Romberg quadrature.
inline long double value(long double tau, long double x, long double s, const HJBConfig& cfg) {
  const long double k = cfg.kappa, l = cfg.lambda_, sg = cfg.sigma;
  long double v = k * x * x * std::cosh(k * tau) / std::sinh(k * tau);
  if (l == 0.0L) return v;
  const long double integral = romberg(
      [&](long double u) {
        const long double t = std::tanh(k * u / 2.0L);
        return t * t * std::exp(-sg * sg * u);
      },
      0.0L, tau);
  v += l * x * s / k * std::tanh(tau * k / 2.0L);
  v -= l * l * s * s * std::exp(sg * sg * tau) / (4.0L * k * k) * integral;
  return v;
}

/// Optimal rate as half the X-derivative of the value; the value is
/// quadratic in X, so the central difference with step 1 is exact.
inline long double rate(long double tau, long double x, long double s, const HJBConfig& cfg) {
  return (value(tau, x + 1.0L, s, cfg) - value(tau, x - 1.0L, s, cfg)) / 4.0L;
}

/// Optimal inventory under a constant price, with the price integral done in
/// closed form: int_0^t du / (1 + cosh(k (T-u))) = (tanh(kT/2) - tanh(k(T-t)/2)) / k.
inline long double inventory_const_price(long double t, long double x0, long double s,
                                         const HJBConfig& cfg) {
  const long double k = cfg.kappa, T = cfg.horizon_T, l = cfg.lambda_;
  const long double integral = s * (std::tanh(k * T / 2.0L) - std::tanh(k * (T - t) / 2.0L)) / k;
  return std::sinh(k * (T - t)) * (x0 / std::sinh(k * T) - l / (2.0L * k) * integral);
}

/// Central finite difference of f along coordinate `coord` of a state.
template <typename F>
double fd_state(F&& f, StatePoint p, int coord, double h) {
  auto shifted = [&](double delta) {
    StatePoint q = p;
    if (coord == kTau) q.tau += delta;
    if (coord == kX) q.x += delta;
    if (coord == kS) q.s += delta;
    return f(q);
  };
  return (shifted(h) - shifted(-h)) / (2.0 * h);
}

/// Central-difference gradient of a scalar functional over every parameter.
template <typename Loss>
std::vector<double> fd_param_gradient(const ModelParams& params, Loss&& loss, double h = 1e-6) {
  std::vector<double> flat = flatten(params);
  std::vector<double> grad(flat.size());
  ModelParams probe = params;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double orig = flat[i];
    flat[i] = orig + h;
    unflatten(probe, flat);
    const double up = loss(probe);
    flat[i] = orig - h;
    unflatten(probe, flat);
    const double down = loss(probe);
    flat[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-8) {
  double scale = floor, err = 0.0;
  for (double v : b) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::fabs(a[i] - b[i]));
  return err / scale;
}

}  // namespace mtpinn::oracle
