#pragma once

// Seeded collocation and trajectory batches. Uniform draws take the top 53
// bits of mt19937_64 directly, so batches are identical across standard
// libraries.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

struct SamplerCounts {
  std::size_t n_pde = 3000;
  std::size_t n_ic = 500;
  std::size_t n_term = 200;
  std::size_t n_zero_term = 100;
};

/// PDE points cover the full box; IC points sit on X = 0; terminal points on
/// tau = 0; zero-term points on (tau, X) = (0, 0) and carry only S.
struct CollocationBatch {
  std::vector<StatePoint> pde_points;
  std::vector<StatePoint> ic_points;
  std::vector<StatePoint> term_points;
  std::vector<StatePoint> zero_term_points;
};

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_in(Rng& rng, Interval r) {
  if (r.lo == r.hi) return r.lo;
  return r.lo + (r.hi - r.lo) * uniform01(rng);
}

inline CollocationBatch sample_batch(const HJBConfig& cfg, const SamplerCounts& counts,
                                     std::uint64_t seed) {
  cfg.validate();
  if (counts.n_pde == 0 || counts.n_ic == 0 || counts.n_term == 0 || counts.n_zero_term == 0)
    throw std::invalid_argument("sample_batch: every count must be > 0");
  const Interval tau{cfg.tau_min(), cfg.horizon_T};
  CollocationBatch b;
  Rng r_pde(derive_seed(seed, "pde")), r_ic(derive_seed(seed, "ic")),
      r_term(derive_seed(seed, "term")), r_zero(derive_seed(seed, "zero_term"));
  for (std::size_t i = 0; i < counts.n_pde; ++i) {
    const double t = uniform_in(r_pde, tau);
    const double x = uniform_in(r_pde, cfg.x_range);
    b.pde_points.push_back({t, x, uniform_in(r_pde, cfg.s_range)});
  }
  for (std::size_t i = 0; i < counts.n_ic; ++i) {
    const double t = uniform_in(r_ic, tau);
    b.ic_points.push_back({t, 0.0, uniform_in(r_ic, cfg.s_range)});
  }
  for (std::size_t i = 0; i < counts.n_term; ++i) {
    const double x = uniform_in(r_term, cfg.x_range);
    b.term_points.push_back({0.0, x, uniform_in(r_term, cfg.s_range)});
  }
  for (std::size_t i = 0; i < counts.n_zero_term; ++i)
    b.zero_term_points.push_back({0.0, 0.0, uniform_in(r_zero, cfg.s_range)});
  return b;
}

/// n evenly spaced points including both endpoints; n = 1 gives the midpoint.
inline std::vector<double> lattice(Interval r, std::size_t n) {
  if (n == 0) throw std::invalid_argument("lattice: n must be >= 1");
  if (n == 1) return {r.mid()};
  std::vector<double> out(n);
  const double step = r.width() / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = r.lo + step * static_cast<double>(i);
  out.back() = r.hi;
  return out;
}

struct TrajectorySpec {
  std::vector<double> x0_grid;
  std::vector<double> s0_grid;  // empty in the risk-neutral regime
  std::vector<double> horizons;
  int n_dt = 1;

  std::size_t initial_states() const {
    return x0_grid.size() * (s0_grid.empty() ? 1 : s0_grid.size());
  }
  std::size_t rollouts() const { return initial_states() * horizons.size(); }

  void validate(const HJBConfig& cfg) const {
    if (initial_states() == 0) throw std::invalid_argument("TrajectorySpec: P must be > 0");
    if (horizons.empty()) throw std::invalid_argument("TrajectorySpec: no horizons");
    for (std::size_t j = 0; j < horizons.size(); ++j) {
      if (!(horizons[j] > 0.0 && horizons[j] <= cfg.horizon_T * (1 + 1e-12)))
        throw std::invalid_argument("TrajectorySpec: horizon " + std::to_string(horizons[j]) +
                                    " outside (0, T]");
      if (j > 0 && !(horizons[j] > horizons[j - 1]))
        throw std::invalid_argument("TrajectorySpec: horizons must be strictly ascending");
    }
    if (n_dt < 1) throw std::invalid_argument("TrajectorySpec: n_dt must be >= 1");
  }
};

inline TrajectorySpec make_trajectory_spec(const HJBConfig& cfg, std::size_t n_x, std::size_t n_s,
                                           const std::vector<double>& horizon_fractions,
                                           int n_dt) {
  if (n_x < 1) throw std::invalid_argument("make_trajectory_spec: n_X must be >= 1");
  TrajectorySpec spec;
  spec.x0_grid = lattice(cfg.x_range, n_x);
  if (!cfg.risk_neutral()) spec.s0_grid = lattice(cfg.s_range, std::max<std::size_t>(n_s, 1));
  for (double f : horizon_fractions) spec.horizons.push_back(f * cfg.horizon_T);
  spec.n_dt = n_dt;
  spec.validate(cfg);
  return spec;
}

}  // namespace mtpinn
