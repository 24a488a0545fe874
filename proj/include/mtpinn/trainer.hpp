#pragma once

// Training loop and the three model presets.
//
//   vanilla    PDE + IC + sym + terminal penalty [+ zero-term], trained at the
//              target lambda directly
//   pinn_curr  same terms, lambda-curriculum
//   mtpinn     PDE + traj + IC + sym [+ zero-term], lambda-curriculum
//
// Curriculum: phase A trains a (tau, X) network at lambda = 0; phase B widens
// it to (tau, X, S) and trains one stage per fraction alpha at alpha *
// lambda*, each warm-started from the previous one. Optimizer moments and the
// loss-weight state restart at every stage; collocation points are drawn once
// per phase (static batch) unless per-epoch resampling is switched on.

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/diffnet.hpp"
#include "mtpinn/dwa.hpp"
#include "mtpinn/losses.hpp"
#include "mtpinn/optim.hpp"
#include "mtpinn/run_config.hpp"
#include "mtpinn/sampler.hpp"

namespace mtpinn {

enum class Preset { kVanilla, kPinnCurriculum, kMtPinn };

inline const char* preset_name(Preset p) {
  switch (p) {
    case Preset::kVanilla: return "vanilla";
    case Preset::kPinnCurriculum: return "pinn_curr";
    case Preset::kMtPinn: return "mtpinn";
  }
  return "?";
}

inline Preset parse_preset(const std::string& s) {
  if (s == "vanilla") return Preset::kVanilla;
  if (s == "pinn_curr") return Preset::kPinnCurriculum;
  if (s == "mtpinn") return Preset::kMtPinn;
  throw std::invalid_argument("unknown preset '" + s + "' (expected vanilla, pinn_curr or mtpinn)");
}

inline TermSet active_terms(Preset preset, bool risk_averse) {
  TermSet s = make_term_set({Term::kPde, Term::kIc, Term::kSym});
  s.set(index_of(preset == Preset::kMtPinn ? Term::kTraj : Term::kTermPenalty));
  if (risk_averse) s.set(index_of(Term::kZeroTerm));
  return s;
}

struct EpochRecord {
  long epoch = 0;
  LossVector losses;
  TermWeights weights{};
  double total = 0.0;
};

struct StageResult {
  std::string name;  // "phase_a", "stage_1", ..., or "vanilla"
  double lambda = 0.0;
  ModelParams params;
  std::vector<EpochRecord> history;
  WeightState weights;
  bool diverged = false;
  std::string diagnostic;
};

struct TrainOptions {
  int threads = 1;
  /// Called after each epoch's losses are known; may be empty.
  std::function<void(const std::string& stage, const EpochRecord&)> on_epoch;
};

namespace detail {

template <typename S>
StageResult train_stage_impl(Preset preset, ModelParams params, const RunConfig& rc,
                             double lambda, long epochs, std::uint64_t seed, long epoch_offset,
                             const CollocationBatch& batch, const TrainOptions& opts) {
  HJBConfig cfg = rc.hjb;
  cfg.lambda_ = lambda;
  LossSetup setup;
  setup.cfg = cfg;
  setup.input_dim = params.input_dim;
  setup.terms = active_terms(preset, !cfg.risk_neutral());
  setup.batch = batch;
  setup.penalty_c = rc.penalty_c;
  if (preset == Preset::kMtPinn)
    setup.spec = make_trajectory_spec(cfg, rc.n_x, rc.n_s, rc.horizon_fractions, rc.n_dt);
  auto engine = std::make_unique<LossEngine<S>>(setup, opts.threads);

  StageResult out;
  out.lambda = lambda;
  out.weights = WeightState::start(rc.initial_weights, setup.terms);
  OptimizerState opt = OptimizerState::fresh(params, rc.optim);
  auto grad = GradientAccumulator::zeros_like(params);

  for (long e = 0; e < epochs; ++e) {
    if (rc.resample_each_epoch && e > 0) {
      const SamplerCounts c{batch.pde_points.size(), batch.ic_points.size(),
                            batch.term_points.size(), batch.zero_term_points.size()};
      setup.batch = sample_batch(rc.hjb, c, derive_seed(seed, "resample", epoch_offset + e));
      engine = std::make_unique<LossEngine<S>>(setup, opts.threads);
    }
    grad.set_zero();
    EpochRecord rec;
    rec.epoch = epoch_offset + e;
    rec.weights = out.weights.weights;
    try {
      rec.losses = engine->evaluate(params, out.weights.weights, &grad);
    } catch (const NonFiniteLoss& err) {
      out.diverged = true;
      out.diagnostic = "epoch " + std::to_string(rec.epoch) + ": " + err.what();
      break;
    }
    rec.total = rec.losses.weighted_total(rec.weights);
    out.history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(out.name, rec);

    if (e == 0) dwa_observe_initial(out.weights, rec.losses);
    if ((e + 1) % rc.dwa.delta == 0) dwa_update(out.weights, rec.losses, rc.dwa);

    ModelParams next = params;
    adamw_step(next, grad, opt);
    bool finite = true;
    for (const auto& l : next.layers) finite = finite && l.weight.allFinite() && l.bias.allFinite();
    if (!finite) {
      out.diverged = true;
      out.diagnostic = "epoch " + std::to_string(rec.epoch) + ": non-finite parameters after step";
      break;
    }
    params = std::move(next);
  }
  out.params = std::move(params);
  return out;
}

}  // namespace detail

/// Trains one stage at fixed lambda. Epoch numbers in the history start at
/// `epoch_offset`.
inline StageResult train_stage(Preset preset, const ModelParams& params, const RunConfig& rc,
                               double lambda, long epochs, std::uint64_t seed,
                               const CollocationBatch& batch, long epoch_offset = 0,
                               const TrainOptions& opts = {}) {
  if (epochs < 0) throw std::invalid_argument("train_stage: epochs must be >= 0");
  if (rc.precision == Precision::kFloat32)
    return detail::train_stage_impl<float>(preset, params, rc, lambda, epochs, seed, epoch_offset,
                                           batch, opts);
  return detail::train_stage_impl<double>(preset, params, rc, lambda, epochs, seed, epoch_offset,
                                          batch, opts);
}

struct StagePlan {
  std::string name;
  double lambda = 0.0;
  long epochs = 0;
  int input_dim = 2;
  double lr = 0.0;  // 0: rc.optim.lr
};

/// Stage sequence of a run; the vanilla preset has a single stage.
inline std::vector<StagePlan> plan_stages(Preset preset, const RunConfig& rc) {
  const double target = rc.hjb.lambda_;
  const auto& cur = rc.curriculum;
  const double lr = rc.optim.lr;
  if (target == 0.0) return {{"phase_a", 0.0, cur.phase_a_epochs, 2, lr}};
  if (preset == Preset::kVanilla) return {{"vanilla", target, cur.vanilla_epochs, 3, lr}};
  std::vector<StagePlan> plan{{"phase_a", 0.0, cur.phase_a_epochs, 2, lr}};
  for (std::size_t k = 0; k < cur.fractions.size(); ++k)
    plan.push_back({"stage_" + std::to_string(k + 1), cur.fractions[k] * target, cur.stage_epochs, 3,
                    rc.stage_lr});
  return plan;
}

inline const std::vector<int>& preset_widths(Preset preset, const RunConfig& rc) {
  return preset == Preset::kMtPinn ? rc.widths : rc.baseline_widths;
}

inline ModelParams initial_params(Preset preset, int input_dim, const RunConfig& rc,
                                  std::uint64_t seed) {
  ModelParams p =
      init_params(input_dim, preset_widths(preset, rc), derive_seed(seed, "init", input_dim));
  if (rc.input_scaling == InputScaling::kAll) set_input_scaling(p, rc.hjb);
  return p;
}

inline ModelParams widen_to_price(const ModelParams& p2, const RunConfig& rc) {
  if (rc.input_scaling == InputScaling::kNone) return warm_start_1d_to_2d(p2);
  const Interval s = rc.hjb.s_range;
  return warm_start_1d_to_2d(p2, s.mid(), s.width() > 0 ? 2.0 / s.width() : 1.0);
}

struct CurriculumResult {
  Preset preset = Preset::kMtPinn;
  std::vector<StageResult> stages;

  const ModelParams& final_params() const { return stages.back().params; }
  bool diverged() const {
    for (const auto& s : stages)
      if (s.diverged) return true;
    return false;
  }
};

/// Collocation batch of a stage: the lambda = 0 phase has its own PDE count
/// and seed; all later stages share one batch.
inline CollocationBatch stage_batch(const StagePlan& stage, const RunConfig& rc,
                                    std::uint64_t seed) {
  if (stage.input_dim == 2) {
    SamplerCounts c = rc.counts;
    c.n_pde = rc.n_pde_phase_a;
    return sample_batch(rc.hjb, c, derive_seed(seed, "batch_a"));
  }
  return sample_batch(rc.hjb, rc.counts, derive_seed(seed, "batch_b"));
}

/// Optional persistence hooks for resuming a run stage by stage.
struct StageStore {
  std::function<std::optional<StageResult>(const StagePlan&)> load;
  std::function<void(const StageResult&)> save;
};

inline CurriculumResult run_curriculum(Preset preset, const RunConfig& rc, std::uint64_t seed,
                                       const TrainOptions& opts = {},
                                       const StageStore& store = {}) {
  const auto plan = plan_stages(preset, rc);
  CurriculumResult out;
  out.preset = preset;
  long epoch = 0;
  std::optional<ModelParams> prev;
  for (const auto& stage : plan) {
    ModelParams start;
    if (!prev)
      start = initial_params(preset, stage.input_dim, rc, seed);
    else if (prev->input_dim == 2 && stage.input_dim == 3)
      start = widen_to_price(*prev, rc);
    else
      start = *prev;

    std::optional<StageResult> done;
    if (store.load) done = store.load(stage);
    if (!done) {
      RunConfig stage_rc = rc;
      if (stage.lr > 0.0) stage_rc.optim.lr = stage.lr;
      done = train_stage(preset, start, stage_rc, stage.lambda, stage.epochs,
                         derive_seed(seed, stage.name), stage_batch(stage, rc, seed), epoch, opts);
      done->name = stage.name;
      if (store.save) store.save(*done);
    }
    epoch += stage.epochs;
    prev = done->params;
    const bool stop = done->diverged;
    out.stages.push_back(std::move(*done));
    if (stop) break;
  }
  return out;
}

/// History CSV: epoch,term,raw_loss,weight,total (one row per active term).
inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history,
                              bool header = true) {
  if (header) os << "epoch,term,raw_loss,weight,total\n";
  char buf[160];
  for (const auto& r : history) {
    for (Term t : kAllTerms) {
      if (!r.losses.has(t)) continue;
      std::snprintf(buf, sizeof buf, "%ld,%s,%.17g,%.17g,%.17g\n", r.epoch, term_name(t),
                    r.losses[t], r.weights[index_of(t)], r.total);
      os << buf;
    }
  }
}

}  // namespace mtpinn
