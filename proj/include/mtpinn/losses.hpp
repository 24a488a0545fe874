#pragma once

// Loss terms of the MT-PINN and the baseline PINNs.
//
// LossEngine<S> owns pre-packed inputs for every active term, split into
// fixed column chunks. evaluate() runs the chunks (optionally on several
// workers), then reduces values and gradients in chunk order.
//
// Trajectory loss: every (initial state, horizon) pair is rolled out with
//   x_{k+1} = x_k - 1/2 Gamma_X(tau_k, x_k, s0) dt_k
// and the terminal inventories are penalized with psi. The reverse pass walks
// the steps backwards, re-running each step's forward tape from the stored
// x_k, and carries xbar_k = xbar_{k+1} (1 - 1/2 dt_k Gamma_XX) while adding
// the step's parameter gradient.

#include <array>
#include <bitset>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/diffnet.hpp"
#include "mtpinn/parallel.hpp"
#include "mtpinn/sampler.hpp"

namespace mtpinn {

enum class Term : int { kPde = 0, kTraj, kIc, kSym, kZeroTerm, kTermPenalty };
inline constexpr int kTermCount = 6;
inline constexpr std::array<Term, kTermCount> kAllTerms{
    Term::kPde, Term::kTraj, Term::kIc, Term::kSym, Term::kZeroTerm, Term::kTermPenalty};

inline const char* term_name(Term t) {
  switch (t) {
    case Term::kPde: return "pde";
    case Term::kTraj: return "traj";
    case Term::kIc: return "ic";
    case Term::kSym: return "sym";
    case Term::kZeroTerm: return "zero_term";
    case Term::kTermPenalty: return "term_penalty";
  }
  return "?";
}

inline int index_of(Term t) { return static_cast<int>(t); }

using TermSet = std::bitset<kTermCount>;
using TermWeights = std::array<double, kTermCount>;

inline TermSet make_term_set(std::initializer_list<Term> terms) {
  TermSet s;
  for (Term t : terms) s.set(index_of(t));
  return s;
}

/// Raw loss values; only terms in `active` are meaningful.
struct LossVector {
  std::array<double, kTermCount> value{};
  TermSet active;

  bool has(Term t) const { return active.test(index_of(t)); }
  double operator[](Term t) const {
    if (!has(t)) throw std::logic_error(std::string("LossVector: inactive term ") + term_name(t));
    return value[index_of(t)];
  }
  double weighted_total(const TermWeights& w) const {
    double total = 0.0;
    for (Term t : kAllTerms)
      if (has(t)) total += w[index_of(t)] * value[index_of(t)];
    return total;
  }
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(Term term, const std::string& detail)
      : std::runtime_error(std::string("non-finite ") + term_name(term) + " loss: " + detail),
        term_(term) {}
  Term term() const { return term_; }

 private:
  Term term_;
};

/// |x| inside the unit band, x^2 outside.
inline double psi(double x) {
  const double a = std::abs(x);
  return a <= 1.0 ? a : x * x;
}

inline double psi_grad(double x) {
  if (std::abs(x) <= 1.0) return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return 2.0 * x;
}

/// Euler grid on [0, horizon]: t_k = k * horizon / n with t_n = horizon.
/// Shared by training rollouts and evaluation so both step identically.
inline std::vector<double> euler_times(double horizon, int n) {
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  const double dt = horizon / n;
  for (int k = 0; k <= n; ++k) t[static_cast<std::size_t>(k)] = dt * k;
  t.back() = horizon;
  return t;
}

/// Everything a loss needs besides the parameters.
struct LossSetup {
  HJBConfig cfg;
  int input_dim = 2;
  TermSet terms;
  CollocationBatch batch;
  TrajectorySpec spec;
  double penalty_c = 100.0;
};

template <typename S>
class LossEngine {
 public:
  using Mat = MatrixT<S>;
  using Row = RowVectorT<S>;

  explicit LossEngine(LossSetup setup, int threads = 1, Eigen::Index chunk = 512)
      : setup_(std::move(setup)), threads_(threads) {
    setup_.cfg.validate();
    if (setup_.input_dim != 2 && setup_.input_dim != 3)
      throw std::invalid_argument("LossEngine: input_dim must be 2 or 3");
    if (!setup_.cfg.risk_neutral() && setup_.input_dim != 3)
      throw std::invalid_argument("LossEngine: lambda > 0 needs a three-input network");
    if (has(Term::kZeroTerm) && setup_.cfg.risk_neutral())
      throw std::invalid_argument("LossEngine: zero_term is only active when lambda > 0");
    if (has(Term::kTermPenalty) && !(setup_.penalty_c > 0.0))
      throw std::invalid_argument("LossEngine: terminal penalty strength must be > 0");
    if (has(Term::kPde)) build_point_term(Term::kPde, setup_.batch.pde_points, chunk);
    if (has(Term::kIc)) build_point_term(Term::kIc, setup_.batch.ic_points, chunk);
    if (has(Term::kSym)) build_point_term(Term::kSym, setup_.batch.pde_points, chunk);
    if (has(Term::kZeroTerm))
      build_point_term(Term::kZeroTerm, setup_.batch.zero_term_points, chunk);
    if (has(Term::kTermPenalty))
      build_point_term(Term::kTermPenalty, setup_.batch.term_points, chunk);
    if (has(Term::kTraj)) build_traj(chunk);
  }

  const LossSetup& setup() const { return setup_; }
  bool has(Term t) const { return setup_.terms.test(index_of(t)); }

  /// Raw losses of every active term. With `grad`, adds the gradient of
  /// sum_i weights[i] * L_i; a non-finite term then throws NonFiniteLoss.
  LossVector evaluate(const ModelParams& params, const TermWeights& weights,
                      GradientAccumulator* grad = nullptr) {
    if (params.input_dim != setup_.input_dim)
      throw std::invalid_argument("LossEngine: network input_dim does not match the setup");
    view_.assign(params);
    for (auto& c : chunks_) {
      c.sum = 0.0;
      c.diag.clear();
      c.weight = grad ? static_cast<S>(weights[index_of(c.term)] / count(c.term)) : S(0);
      if (!c.grad || !c.grad->matches(view_))
        c.grad = std::make_unique<GradBuffer<S>>(view_);
      else
        c.grad->set_zero();
    }
    parallel_for(chunks_.size(), threads_, [&](std::size_t i) { run(chunks_[i]); });

    LossVector out;
    out.active = setup_.terms;
    for (const auto& c : chunks_) out.value[index_of(c.term)] += c.sum;
    for (Term t : kAllTerms)
      if (has(t)) out.value[index_of(t)] /= count(t);
    if (grad) {
      for (Term t : kAllTerms) {
        if (!has(t) || std::isfinite(out[t])) continue;
        std::string diag = "value " + std::to_string(out[t]);
        for (const auto& c : chunks_)
          if (c.term == t && !c.diag.empty()) diag = c.diag;
        throw NonFiniteLoss(t, diag);
      }
      for (const auto& c : chunks_)
        if (c.weight != S(0)) c.grad->add_to(*grad);
    }
    return out;
  }

 private:
  struct Chunk {
    Term term;
    Mat inputs;  // packed points; for sym the mirrored copy follows
    Row a, b;    // per-term constants (see run())
    // trajectory chunks
    Mat tau, dt;  // n_dt x B
    Mat xs;       // (n_dt + 1) x B stored inventories
    Row s0;
    BasicFieldTape<S> tape;
    std::unique_ptr<GradBuffer<S>> grad;
    double sum = 0.0;
    S weight = 0;
    std::string diag;
  };

  double count(Term t) const {
    switch (t) {
      case Term::kPde:
      case Term::kSym: return static_cast<double>(setup_.batch.pde_points.size());
      case Term::kIc: return static_cast<double>(setup_.batch.ic_points.size());
      case Term::kZeroTerm: return static_cast<double>(setup_.batch.zero_term_points.size());
      case Term::kTermPenalty: return static_cast<double>(setup_.batch.term_points.size());
      case Term::kTraj: return static_cast<double>(setup_.spec.rollouts());
    }
    return 1.0;
  }

  Mat pack(const std::vector<StatePoint>& pts, std::ptrdiff_t begin, std::ptrdiff_t size) const {
    const int dim = setup_.input_dim;
    Mat z(dim, size);
    for (std::ptrdiff_t i = 0; i < size; ++i) {
      const StatePoint& p = pts[static_cast<std::size_t>(begin + i)];
      z(kTau, i) = static_cast<S>(p.tau);
      z(kX, i) = static_cast<S>(p.x);
      if (dim == 3) z(kS, i) = static_cast<S>(p.s);
    }
    return z;
  }

  void build_point_term(Term term, const std::vector<StatePoint>& pts, Eigen::Index chunk) {
    if (pts.empty())
      throw std::invalid_argument(std::string("LossEngine: no points for ") + term_name(term));
    const HJBConfig& cfg = setup_.cfg;
    const bool risk = !cfg.risk_neutral();
    for (const auto& r : make_chunks(static_cast<std::ptrdiff_t>(pts.size()), chunk)) {
      Chunk c;
      c.term = term;
      c.inputs = pack(pts, r.begin, r.size);
      if (term == Term::kPde) {
        // R = Gamma_tau + a * Gamma_SS + b + Gamma_X^2 / 4
        c.a = Row::Zero(r.size);
        c.b.resize(r.size);
        for (std::ptrdiff_t i = 0; i < r.size; ++i) {
          const StatePoint& p = pts[static_cast<std::size_t>(r.begin + i)];
          double b = -cfg.kappa * cfg.kappa * p.x * p.x;
          if (risk) {
            c.a(i) = static_cast<S>(-0.5 * cfg.sigma * cfg.sigma * p.s * p.s);
            b -= cfg.lambda_ * p.s * p.x;
          }
          c.b(i) = static_cast<S>(b);
        }
      } else if (term == Term::kSym) {
        Mat mirrored = c.inputs;
        mirrored.row(kX) *= S(-1);
        if (risk) mirrored.row(kS) *= S(-1);
        Mat both(c.inputs.rows(), 2 * r.size);
        both << c.inputs, mirrored;
        c.inputs = std::move(both);
      } else if (term == Term::kTermPenalty) {
        c.b.resize(r.size);
        for (std::ptrdiff_t i = 0; i < r.size; ++i) {
          const double x = pts[static_cast<std::size_t>(r.begin + i)].x;
          c.b(i) = static_cast<S>(setup_.penalty_c * x * x);
        }
      }
      chunks_.push_back(std::move(c));
    }
  }

  void build_traj(Eigen::Index chunk) {
    const TrajectorySpec& spec = setup_.spec;
    spec.validate(setup_.cfg);
    const int n = spec.n_dt;
    const double tau_min = setup_.cfg.tau_min();
    std::vector<std::vector<double>> grids;
    for (double h : spec.horizons) grids.push_back(euler_times(h, n));

    // Column order: x0 outer, s0 middle, horizon inner.
    struct Col {
      double x0, s0;
      std::size_t j;
    };
    std::vector<Col> cols;
    const std::vector<double> s_grid = spec.s0_grid.empty() ? std::vector<double>{0.0} : spec.s0_grid;
    for (double x0 : spec.x0_grid)
      for (double s0 : s_grid)
        for (std::size_t j = 0; j < spec.horizons.size(); ++j) cols.push_back({x0, s0, j});

    for (const auto& r : make_chunks(static_cast<std::ptrdiff_t>(cols.size()), chunk)) {
      Chunk c;
      c.term = Term::kTraj;
      c.tau.resize(n, r.size);
      c.dt.resize(n, r.size);
      c.xs.resize(n + 1, r.size);
      c.s0.resize(r.size);
      for (std::ptrdiff_t i = 0; i < r.size; ++i) {
        const Col& col = cols[static_cast<std::size_t>(r.begin + i)];
        const auto& t = grids[col.j];
        const double horizon = spec.horizons[col.j];
        for (int k = 0; k < n; ++k) {
          c.tau(k, i) = static_cast<S>(std::max(horizon - t[k], tau_min));
          c.dt(k, i) = static_cast<S>(t[k + 1] - t[k]);
        }
        c.xs(0, i) = static_cast<S>(col.x0);
        c.s0(i) = static_cast<S>(col.s0);
      }
      c.inputs.resize(setup_.input_dim, r.size);
      chunks_.push_back(std::move(c));
    }
  }

  void run(Chunk& c) {
    if (c.term == Term::kTraj) return run_traj(c);
    const bool want_grad = c.weight != S(0);
    const bool risk = !setup_.cfg.risk_neutral();
    const Eigen::Index B = c.inputs.cols();
    BasicOutputAdjoints<S> adj;

    switch (c.term) {
      case Term::kPde: {
        c.tape.forward(view_, c.inputs, {true, true, risk, risk});
        Row r = c.tape.d_tau() + c.b + (S(0.25) * c.tape.d_x().array().square()).matrix();
        if (risk) r.array() += c.a.array() * c.tape.d_ss().array();
        c.sum = r.template cast<double>().squaredNorm();
        if (want_grad && std::isfinite(c.sum)) {
          adj.d_tau = S(2) * c.weight * r;
          adj.d_x = (c.weight * r.array() * c.tape.d_x().array()).matrix();
          if (risk) adj.d_ss = (S(2) * c.weight * r.array() * c.a.array()).matrix();
          c.tape.backward(adj, *c.grad);
        }
        break;
      }
      case Term::kIc:
      case Term::kZeroTerm:
      case Term::kTermPenalty: {
        c.tape.forward(view_, c.inputs, DerivRequest::none());
        Row e = c.tape.value();
        if (c.term == Term::kIc && risk) e = e.cwiseMax(S(0));  // one-sided: Gamma(tau, 0, S) <= 0
        if (c.term == Term::kTermPenalty) e -= c.b;
        c.sum = e.template cast<double>().squaredNorm();
        if (want_grad && std::isfinite(c.sum)) {
          adj.value = S(2) * c.weight * e;
          c.tape.backward(adj, *c.grad);
        }
        break;
      }
      case Term::kSym: {
        c.tape.forward(view_, c.inputs, DerivRequest::none());
        const Eigen::Index n = B / 2;
        const Row d = c.tape.value().leftCols(n) - c.tape.value().rightCols(n);
        c.sum = d.template cast<double>().squaredNorm();
        if (want_grad && std::isfinite(c.sum)) {
          adj.value.resize(B);
          adj.value.leftCols(n) = S(2) * c.weight * d;
          adj.value.rightCols(n) = S(-2) * c.weight * d;
          c.tape.backward(adj, *c.grad);
        }
        break;
      }
      case Term::kTraj: break;
    }
    if (!std::isfinite(c.sum)) c.diag = "non-finite value in chunk";
  }

  void step_inputs(Chunk& c, int k) {
    c.inputs.row(kTau) = c.tau.row(k);
    c.inputs.row(kX) = c.xs.row(k);
    if (setup_.input_dim == 3) c.inputs.row(kS) = c.s0;
  }

  void run_traj(Chunk& c) {
    const int n = setup_.spec.n_dt;
    const DerivRequest req{false, true, false, false};
    for (int k = 0; k < n; ++k) {
      step_inputs(c, k);
      c.tape.forward(view_, c.inputs, req);
      c.xs.row(k + 1) = c.xs.row(k) - (S(0.5) * c.dt.row(k).array() * c.tape.d_x().array()).matrix();
      if (!c.xs.row(k + 1).allFinite()) {
        c.sum = std::numeric_limits<double>::infinity();
        c.diag = "rollout diverged at Euler step " + std::to_string(k);
        return;
      }
    }
    const Eigen::Index B = c.xs.cols();
    Row xbar(B);
    for (Eigen::Index i = 0; i < B; ++i) {
      const double x = static_cast<double>(c.xs(n, i));
      c.sum += psi(x);
      xbar(i) = c.weight * static_cast<S>(psi_grad(x));
    }
    if (c.weight == S(0)) return;

    BasicOutputAdjoints<S> adj;
    Mat zbar;
    for (int k = n - 1; k >= 0; --k) {
      step_inputs(c, k);
      c.tape.forward(view_, c.inputs, req);
      adj.d_x = (S(-0.5) * c.dt.row(k).array() * xbar.array()).matrix();
      c.tape.backward(adj, *c.grad, &zbar);
      xbar += zbar.row(kX);
    }
  }

  LossSetup setup_;
  int threads_ = 1;
  NetworkView<S> view_;
  std::vector<Chunk> chunks_;
};

// Double-precision conveniences, one term at a time.

struct LossAndGrad {
  double value = 0.0;
  GradientAccumulator grad;
};

inline LossAndGrad grad_of_loss(const ModelParams& params, Term term, LossSetup setup) {
  setup.terms = make_term_set({term});
  setup.input_dim = params.input_dim;
  LossEngine<double> engine(std::move(setup));
  TermWeights w{};
  w[index_of(term)] = 1.0;
  LossAndGrad out;
  out.grad = GradientAccumulator::zeros_like(params);
  out.value = engine.evaluate(params, w, &out.grad)[term];
  return out;
}

inline double loss_value(const ModelParams& params, Term term, LossSetup setup) {
  setup.terms = make_term_set({term});
  setup.input_dim = params.input_dim;
  LossEngine<double> engine(std::move(setup));
  return engine.evaluate(params, TermWeights{})[term];
}

inline double pde_loss(const ModelParams& params, const std::vector<StatePoint>& points,
                       const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.batch.pde_points = points;
  return loss_value(params, Term::kPde, std::move(s));
}

inline double ic_loss(const ModelParams& params, const std::vector<StatePoint>& points,
                      const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.batch.ic_points = points;
  return loss_value(params, Term::kIc, std::move(s));
}

inline double sym_loss(const ModelParams& params, const std::vector<StatePoint>& points,
                       const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.batch.pde_points = points;
  return loss_value(params, Term::kSym, std::move(s));
}

inline double zero_term_loss(const ModelParams& params, const std::vector<StatePoint>& points,
                             const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.batch.zero_term_points = points;
  return loss_value(params, Term::kZeroTerm, std::move(s));
}

inline double terminal_penalty_loss(const ModelParams& params,
                                    const std::vector<StatePoint>& points, double c,
                                    const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.batch.term_points = points;
  s.penalty_c = c;
  return loss_value(params, Term::kTermPenalty, std::move(s));
}

inline double traj_loss(const ModelParams& params, const TrajectorySpec& spec,
                        const HJBConfig& cfg) {
  LossSetup s;
  s.cfg = cfg;
  s.spec = spec;
  return loss_value(params, Term::kTraj, std::move(s));
}

class RolloutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Terminal inventory of one Euler rollout with the price frozen at s0.
inline double rollout_inventory(const ModelParams& params, double x0, double s0, double horizon,
                                int n_dt, const HJBConfig& cfg) {
  if (!(horizon > 0.0 && horizon <= cfg.horizon_T * (1 + 1e-12)))
    throw std::invalid_argument("rollout_inventory: horizon outside (0, T]");
  if (n_dt < 1) throw std::invalid_argument("rollout_inventory: n_dt must be >= 1");
  const NetworkView<double> view(params);
  BasicFieldTape<double> tape;
  const auto t = euler_times(horizon, n_dt);
  Matrix z(params.input_dim, 1);
  double x = x0;
  for (int k = 0; k < n_dt; ++k) {
    z(kTau, 0) = std::max(horizon - t[k], cfg.tau_min());
    z(kX, 0) = x;
    if (params.input_dim == 3) z(kS, 0) = s0;
    tape.forward(view, z, {false, true, false, false});
    x = x - 0.5 * (t[k + 1] - t[k]) * tape.d_x()(0);
    if (!std::isfinite(x))
      throw RolloutError("rollout_inventory: non-finite inventory at Euler step " +
                         std::to_string(k));
  }
  return x;
}

}  // namespace mtpinn
