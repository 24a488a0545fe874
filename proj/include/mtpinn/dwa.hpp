#pragma once

// Loss-weight rebalancing, applied every `delta` epochs:
//   ema_i <- beta ema_i + (1-beta) L_i / L_i(0)
//   r_i    = ema_i / geomean_j(ema_j)
//   w_i   <- w_i r_i^alpha, then projected onto
//            { w : w_min <= w_i <= w_max, mean(w) = 1 }
// over the adapting (active, unfrozen) terms. A term whose ema stays below
// the freeze tolerance for `freeze_after` consecutive updates keeps its
// current weight from then on.
//
// The projection is a clip followed by a rescale that is repeated on the
// still-free weights until both the range and the mean hold, i.e. the unique
// c with mean(clip(c w)) = 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mtpinn/losses.hpp"

namespace mtpinn {

struct DwaConfig {
  double beta = 0.95;
  double alpha = 0.3;
  int delta = 1000;
  double w_min = 0.1;
  double w_max = 2.0;
  double freeze_tol = 1e-4;
  int freeze_after = 3;

  void validate() const {
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("DwaConfig: beta in [0,1)");
    if (delta < 1) throw std::invalid_argument("DwaConfig: delta must be >= 1");
    if (!(w_min > 0.0 && w_min <= 1.0 && w_max >= 1.0))
      throw std::invalid_argument("DwaConfig: clip range must contain 1 and be positive");
    if (freeze_after < 1) throw std::invalid_argument("DwaConfig: freeze_after must be >= 1");
  }
};

struct WeightState {
  TermWeights weights{};
  std::array<double, kTermCount> ema{};
  std::array<double, kTermCount> initial{};
  std::array<int, kTermCount> below_tol{};
  TermSet active;
  TermSet frozen;
  bool initialized = false;

  static WeightState start(const TermWeights& w, TermSet active) {
    WeightState s;
    s.weights = w;
    s.active = active;
    s.ema.fill(1.0);
    s.initial.fill(std::numeric_limits<double>::quiet_NaN());
    return s;
  }

  bool adapting(int i) const { return active.test(i) && !frozen.test(i); }
};

/// Records the first observed loss of each term as its scale.
inline void dwa_observe_initial(WeightState& ws, const LossVector& losses) {
  for (Term t : kAllTerms) {
    const int i = index_of(t);
    if (!ws.active.test(i)) continue;
    const double l = losses[t];
    ws.initial[i] = (std::isfinite(l) && l > 0.0) ? l : 1.0;
    ws.ema[i] = 1.0;
  }
  ws.initialized = true;
}

/// Unique c with sum_i clip(c w_i, lo, hi) = total; returns the clipped c w.
/// An unreachable total ends with every weight at the nearer bound.
inline std::vector<double> project_to_sum(std::vector<double> w, double total, double lo, double hi) {
  const std::size_t n = w.size();
  if (n == 0) return w;
  std::vector<int> state(n, 0);  // -1 pinned at lo, +1 pinned at hi
  for (std::size_t pass = 0; pass <= n; ++pass) {
    double free_sum = 0.0, pinned = 0.0;
    std::size_t n_free = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (state[i] == 0) {
        free_sum += w[i];
        ++n_free;
      } else {
        pinned += state[i] < 0 ? lo : hi;
      }
    }
    if (n_free == 0) break;
    const double c = (total - pinned) / free_sum;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (state[i] != 0) continue;
      const double v = c * w[i];
      if (v < lo) state[i] = -1, changed = true;
      if (v > hi) state[i] = 1, changed = true;
    }
    if (!changed) {
      for (std::size_t i = 0; i < n; ++i) w[i] = state[i] == 0 ? c * w[i] : (state[i] < 0 ? lo : hi);
      return w;
    }
  }
  for (std::size_t i = 0; i < n; ++i) w[i] = state[i] < 0 ? lo : hi;
  return w;
}

inline std::vector<double> project_mean_one(std::vector<double> w, double lo, double hi) {
  const double n = static_cast<double>(w.size());
  return project_to_sum(std::move(w), n, lo, hi);
}

/// Proposal w_i r_i^alpha clipped to the range, before the mean-one projection.
inline TermWeights dwa_proposal(const WeightState& ws, const DwaConfig& cfg) {
  double log_sum = 0.0;
  int n = 0;
  for (int i = 0; i < kTermCount; ++i) {
    if (!ws.adapting(i)) continue;
    log_sum += std::log(ws.ema[i]);
    ++n;
  }
  TermWeights out = ws.weights;
  if (n == 0) return out;
  const double geomean = std::exp(log_sum / n);
  for (int i = 0; i < kTermCount; ++i) {
    if (!ws.adapting(i)) continue;
    const double r = ws.ema[i] / geomean;
    out[i] = std::clamp(ws.weights[i] * std::pow(r, cfg.alpha), cfg.w_min, cfg.w_max);
  }
  return out;
}

inline void dwa_update(WeightState& ws, const LossVector& losses, const DwaConfig& cfg) {
  if (!ws.initialized) throw std::logic_error("dwa_update: call dwa_observe_initial first");
  for (int i = 0; i < kTermCount; ++i) {
    if (!ws.adapting(i)) continue;
    const double rel = losses.value[i] / ws.initial[i];
    // Floor keeps the geometric mean defined when a loss reaches exactly 0.
    ws.ema[i] = std::max(cfg.beta * ws.ema[i] + (1.0 - cfg.beta) * rel, 1e-300);
  }
  const TermWeights proposal = dwa_proposal(ws, cfg);
  std::vector<int> idx;
  std::vector<double> w;
  for (int i = 0; i < kTermCount; ++i) {
    if (!ws.adapting(i)) continue;
    idx.push_back(i);
    w.push_back(proposal[i]);
  }
  // Frozen weights keep their value; the adapting ones take up the rest so
  // that all active weights still average 1.
  double total = 0.0;
  for (int i = 0; i < kTermCount; ++i)
    if (ws.active.test(i)) total += ws.adapting(i) ? 1.0 : 1.0 - ws.weights[i];
  const auto projected = project_to_sum(w, total, cfg.w_min, cfg.w_max);
  for (std::size_t k = 0; k < idx.size(); ++k) ws.weights[idx[k]] = projected[k];

  for (int i : idx) {
    ws.below_tol[i] = ws.ema[i] < cfg.freeze_tol ? ws.below_tol[i] + 1 : 0;
    if (ws.below_tol[i] >= cfg.freeze_after) ws.frozen.set(i);
  }
}

}  // namespace mtpinn
