// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Trains the desk presets once and shares the runs between
// criteria (phase A of a curriculum is the same run for every target lambda).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtpinn/commands.hpp"
#include "oracles.hpp"

using namespace mtpinn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double secs) {
  std::printf("%s  %d. %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

/// Runs a criterion; an exception counts as a failure with its message.
void criterion(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + "error: " + e.what();
  }
  report(id, name, o, seconds_since(t0));
}

std::map<std::string, std::string> config_entries(const std::string& file, double lambda) {
  auto e = read_config_file(std::string(MTPINN_CONFIG_DIR) + "/" + file);
  e["hjb.lambda"] = fmt(lambda);
  return e;
}

// ---- shared training runs ----------------------------------------------------

struct Run {
  CurriculumResult result;
  RunConfig rc;
  double seconds = 0.0;
};

class Runs {
 public:
  explicit Runs(std::string file) : file_(std::move(file)) {}

  const Run& get(Preset preset, double lambda) {
    const std::string key = std::string(preset_name(preset)) + "@" + fmt(lambda);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    Run r;
    r.rc = build_run_config(config_entries(file_, lambda));
    const std::string family = preset == Preset::kMtPinn ? "mt/" : "pinn/";
    StageStore store;
    store.load = [&](const StagePlan& sp) -> std::optional<StageResult> {
      auto s = stages_.find(family + sp.name + "@" + fmt(sp.lambda));
      if (s == stages_.end()) return std::nullopt;
      return s->second;
    };
    store.save = [&](const StageResult& s) { stages_[family + s.name + "@" + fmt(s.lambda)] = s; };
    const auto t0 = Clock::now();
    r.result = run_curriculum(preset, r.rc, 0, {}, store);
    r.seconds = seconds_since(t0);
    std::fprintf(stderr, "  trained %s lambda %g (%s) in %.0f s\n", preset_name(preset), lambda, file_.c_str(),
                 r.seconds);
    return runs_.emplace(key, std::move(r)).first->second;
  }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::map<std::string, Run> runs_;
  std::map<std::string, StageResult> stages_;
};

struct TerminalEval {
  TerminalStats stats;
  double seconds = 0.0;
};

TerminalEval terminal_eval(const Run& r) {
  const auto t0 = Clock::now();
  const EvalConfig& e = *r.rc.eval;
  const auto paths = evaluation_paths(e.s0, r.rc.hjb, e.n_paths, r.rc.n_dt);
  const NetworkField f(r.result.final_params());
  TerminalEval out;
  out.stats = terminal_stats(terminal_inventories(f, paths, e.x0, r.rc.hjb), e.epsilon);
  out.seconds = seconds_since(t0);
  return out;
}

/// Silences std::cout (the commands print their tables) while in scope.
struct MuteStdout {
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  ~MuteStdout() { std::cout.rdbuf(old); }
};

std::string stats_text(const TerminalStats& s) {
  return "mean " + num(s.mean) + " std " + num(s.std) + " p95 " + num(s.p95) + " p_eps " + num(s.pass_rate, "%.3f");
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::map<std::string, std::string> fa, fb;
  auto slurp = [](const fs::path& root, std::map<std::string, std::string>& m) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      std::ifstream in(e.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      m[fs::relative(e.path(), root).string()] = ss.str();
    }
  };
  slurp(a, fa);
  slurp(b, fb);
  if (fa.size() != fb.size()) {
    why = "file sets differ";
    return false;
  }
  for (const auto& [k, v] : fa) {
    auto it = fb.find(k);
    if (it == fb.end() || it->second != v) {
      why = k + " differs";
      return false;
    }
  }
  return !fa.empty();
}

void save_model(const fs::path& path, const Run& r, Preset preset, const std::string& file) {
  Checkpoint ck;
  ck.params = r.result.final_params();
  ck.hjb = r.rc.hjb;
  ck.preset = preset_name(preset);
  ck.config_hash = config_hash(config_entries(file, r.rc.hjb.lambda_));
  ck.stage = "final";
  save_checkpoint(path, ck);
}

}  // namespace

int main() {
  const auto t_all = Clock::now();
  const fs::path work = fs::temp_directory_path() / "mtpinn_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // 1 ---------------------------------------------------------------------------
  criterion(1, "closed-form oracles", [](Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> tau(0.05, 5.0), x(-10, 10), s(10, 100);
    const double lambdas[] = {0.0, 0.05, 0.1};
    double worst_v = 0, worst_r = 0, worst_p = 0;
    for (int i = 0; i < 1000; ++i) {
      HJBConfig cfg;
      cfg.lambda_ = lambdas[i % 3];
      const StatePoint p{tau(rng), x(rng), s(rng)};
      const double v = value_exact(p, cfg);
      const double vr = static_cast<double>(oracle::value(p.tau, p.x, p.s, cfg));
      worst_v = std::max(worst_v, std::abs(v - vr) / std::max(std::abs(vr), 1.0));
      const double r = optimal_rate(cfg.horizon_T - p.tau, p.x, p.s, cfg);
      const double rr = static_cast<double>(oracle::rate(p.tau, p.x, p.s, cfg));
      worst_r = std::max(worst_r, std::abs(r - rr) / std::max(std::abs(rr), 1.0));
      // Inventory path under a constant price on a fine grid.
      const std::size_t n = 4000;
      PricePath path;
      path.times = euler_times(cfg.horizon_T, static_cast<int>(n));
      path.prices.assign(n + 1, p.s);
      const auto xs = optimal_inventory_path(path, p.x, cfg);
      double scale = 1.0, err = 0.0;
      for (std::size_t k = 0; k <= n; k += 250) {
        const double ref = static_cast<double>(oracle::inventory_const_price(path.times[k], p.x, p.s, cfg));
        scale = std::max(scale, std::abs(ref));
        err = std::max(err, std::abs(xs[k] - ref));
      }
      worst_p = std::max(worst_p, err / scale);
    }
    HJBConfig cfg;
    double worst_res = 0.0;
    for (int i = 1; i <= 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const StatePoint p{cfg.horizon_T * i / 50.0, -10.0 + 20.0 * j / 49.0, 55.0};
        const auto d = value_exact_derivatives(p, cfg);
        worst_res = std::max(worst_res, std::abs(hjb_residual(p, d.d_tau, d.d_x, d.d_ss, cfg)));
      }
    const double secs = seconds_since(t0);
    o.require(worst_v <= 1e-8, "value rel err " + num(worst_v));
    o.require(worst_r <= 1e-8, "rate rel err " + num(worst_r));
    o.require(worst_p <= 1e-8, "inventory path rel err " + num(worst_p));
    o.require(worst_res <= 1e-9, "lambda=0 residual on 50x50 " + num(worst_res));
    o.require(secs < 10.0, "runtime " + num(secs) + " s < 10 s");
  });

  // 2 ---------------------------------------------------------------------------
  criterion(2, "differentiation", [](Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> tau(0.0, 5.0), x(-10, 10), s(10, 100);
    HJBConfig cfg;
    double worst_field = 0.0;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-3); };
    for (int c = 0; c < 100; ++c) {
      const int dim = (c % 2) ? 3 : 2;
      auto p = init_params(dim, {6, 5}, derive_seed(c, "acceptance_fd"));
      set_input_scaling(p, cfg);
      const StatePoint q{tau(rng), x(rng), s(rng)};
      const auto e = eval_field(p, q);
      const auto g = [&](const StatePoint& r) { return eval_field(p, r).gamma; };
      worst_field = std::max(worst_field, rel(e.d_tau, oracle::fd_state(g, q, kTau, 1e-4)));
      worst_field = std::max(worst_field, rel(e.d_x, oracle::fd_state(g, q, kX, 1e-4)));
      if (dim == 3) {
        worst_field = std::max(worst_field, rel(*e.d_s, oracle::fd_state(g, q, kS, 1e-4)));
        const auto gs = [&](const StatePoint& r) { return *eval_field(p, r).d_s; };
        worst_field = std::max(worst_field, rel(*e.d_ss, oracle::fd_state(gs, q, kS, 1e-4)));
      }
    }
    o.require(worst_field <= 1e-5, "field derivatives rel err " + num(worst_field));

    struct Case {
      Term term;
      double lambda;
    };
    const Case cases[] = {{Term::kPde, 0.0},  {Term::kPde, 0.1},      {Term::kTraj, 0.0},
                          {Term::kTraj, 0.1}, {Term::kIc, 0.1},       {Term::kSym, 0.1},
                          {Term::kZeroTerm, 0.1}, {Term::kTermPenalty, 0.1}};
    double worst_grad = 0.0;
    std::size_t max_params = 0;
    for (const auto& c : cases) {
      HJBConfig h;
      h.lambda_ = c.lambda;
      const int dim = c.lambda > 0 ? 3 : 2;
      auto p = init_params(dim, {4, 4}, 500 + index_of(c.term));
      set_input_scaling(p, h);
      if (c.term == Term::kIc) p.layers.back().bias(0) = 0.3;  // hinge active somewhere
      max_params = std::max(max_params, p.parameter_count());
      LossSetup setup;
      setup.cfg = h;
      setup.batch = sample_batch(h, {25, 10, 10, 10}, 8);
      setup.spec = make_trajectory_spec(h, 3, 2, {0.4, 1.0}, 5);  // 5-step rollouts
      const auto got = grad_of_loss(p, c.term, setup);
      const auto fd = oracle::fd_param_gradient(p, [&](const ModelParams& m) { return loss_value(m, c.term, setup); });
      worst_grad = std::max(worst_grad, oracle::max_rel_error(flatten(got.grad), fd));
    }
    const double secs = seconds_since(t0);
    o.require(worst_grad <= 1e-4, "parameter gradients (all terms, " + std::to_string(max_params) +
                                      " params) rel err " + num(worst_grad));
    o.require(secs < 60.0, "runtime " + num(secs) + " s < 60 s");
  });

  // 3, 4 --------------------------------------------------------------------------
  Runs synthetic("synthetic_desk.ini");
  std::map<std::string, TerminalEval> evals;
  auto eval_of = [&](Preset p, double lambda) -> const TerminalEval& {
    const std::string key = std::string(preset_name(p)) + "@" + fmt(lambda);
    auto it = evals.find(key);
    if (it == evals.end()) it = evals.emplace(key, terminal_eval(synthetic.get(p, lambda))).first;
    return it->second;
  };

  criterion(3, "terminal-inventory enforcement, desk scale", [&](Outcome& o) {
    const auto t0 = Clock::now();
    const auto& mt0 = eval_of(Preset::kMtPinn, 0.0);
    const auto& mt1 = eval_of(Preset::kMtPinn, 0.1);
    const auto& va1 = eval_of(Preset::kVanilla, 0.1);
    const double secs = seconds_since(t0);
    const RunConfig& rc = synthetic.get(Preset::kMtPinn, 0.1).rc;
    const double x0 = rc.eval->x0;
    o.detail = "200 paths, x0 " + num(x0) + ", P " + std::to_string(rc.n_x * rc.n_s) + ", n_dt " +
               std::to_string(rc.n_dt);
    o.require(mt0.stats.mean <= 0.10 * x0, "lambda=0 MT " + stats_text(mt0.stats) + ", mean <= " + num(0.1 * x0));
    // The eval preset's epsilon is 0.05 * x0 / 10.
    o.require(mt0.stats.pass_rate >= 0.8 && mt0.stats.epsilon == 0.05 * x0 / 10.0,
              "lambda=0 p_" + num(mt0.stats.epsilon) + " >= 0.8");
    o.require(mt1.stats.pass_rate >= 0.4, "lambda=0.1 MT " + stats_text(mt1.stats) + ", p_eps >= 0.4");
    o.require(mt1.stats.mean < va1.stats.mean,
              "lambda=0.1 MT mean " + num(mt1.stats.mean) + " < vanilla " + num(va1.stats.mean));
    o.require(secs <= 1200.0, "train+eval " + num(secs, "%.0f") + " s <= 1200 s");
  });

  criterion(4, "baseline ordering", [&](Outcome& o) {
    const double mt0 = eval_of(Preset::kMtPinn, 0.0).stats.mean;
    const double va0 = eval_of(Preset::kVanilla, 0.0).stats.mean;
    o.require(mt0 < va0, "lambda=0: MT " + num(mt0) + " < vanilla " + num(va0));
    const double mt1 = eval_of(Preset::kMtPinn, 0.1).stats.mean;
    const double pc1 = eval_of(Preset::kPinnCurriculum, 0.1).stats.mean;
    const double va1 = eval_of(Preset::kVanilla, 0.1).stats.mean;
    o.require(mt1 < pc1 && pc1 < va1,
              "lambda=0.1: MT " + num(mt1) + " < PINN-curr " + num(pc1) + " < vanilla " + num(va1));
  });

  // 5 ---------------------------------------------------------------------------
  criterion(5, "loss-weight invariants", [&](Outcome& o) {
    // Every recorded weight vector of the trained runs, plus random loss streams.
    double worst_mean = 0.0;
    bool in_range = true;
    std::size_t checked = 0;
    auto check = [&](const TermWeights& w, const TermSet& active, const DwaConfig& cfg) {
      double sum = 0.0;
      int n = 0;
      for (int i = 0; i < kTermCount; ++i)
        if (active.test(i)) {
          in_range = in_range && w[i] >= cfg.w_min && w[i] <= cfg.w_max;
          sum += w[i];
          ++n;
        }
      worst_mean = std::max(worst_mean, std::abs(sum / n - 1.0));
      ++checked;
    };
    for (Preset p : {Preset::kMtPinn, Preset::kPinnCurriculum, Preset::kVanilla}) {
      const Run& r = synthetic.get(p, 0.1);
      for (const auto& st : r.result.stages)
        for (std::size_t e = r.rc.dwa.delta; e < st.history.size(); e += r.rc.dwa.delta)
          check(st.history[e].weights, st.history[e].losses.active, r.rc.dwa);
    }
    std::mt19937_64 rng(5);
    std::lognormal_distribution<double> jump(0.0, 2.0);
    const TermSet all = make_term_set({Term::kPde, Term::kTraj, Term::kIc, Term::kSym, Term::kZeroTerm});
    for (int run = 0; run < 50; ++run) {
      DwaConfig cfg;
      cfg.w_max = run % 2 ? 5.0 : 2.0;
      auto ws = WeightState::start({1.0, 1.0, 0.1, 0.5, 0.5, 1.0}, all);
      LossVector l;
      l.active = all;
      for (int i = 0; i < kTermCount; ++i) l.value[i] = jump(rng);
      dwa_observe_initial(ws, l);
      for (int k = 0; k < 40; ++k) {
        for (int i = 0; i < kTermCount; ++i) l.value[i] *= jump(rng) * (k > 20 && i == 2 ? 1e-3 : 1.0);
        dwa_update(ws, l, cfg);
        check(ws.weights, all, cfg);
      }
    }
    o.require(in_range, std::to_string(checked) + " updates inside the clip range");
    o.require(worst_mean <= 1e-12, "max |mean - 1| " + num(worst_mean));
    // Equal relative losses leave the weights where they are.
    auto ws = WeightState::start({1.0, 1.0, 1.0, 1.0, 1.0, 1.0}, all);
    LossVector l;
    l.active = all;
    l.value = {4.0, 2.0, 1.0, 8.0, 0.5, 0.0};
    dwa_observe_initial(ws, l);
    double drift = 0.0;
    for (int k = 1; k <= 20; ++k) {
      LossVector m = l;
      for (double& v : m.value) v *= std::pow(0.7, k);
      dwa_update(ws, m, DwaConfig{});
      for (int i = 0; i < kTermCount; ++i)
        if (all.test(i)) drift = std::max(drift, std::abs(ws.weights[i] - 1.0));
    }
    o.require(drift <= 4 * std::numeric_limits<double>::epsilon(), "equal-loss fixed point drift " + num(drift));
  });

  // 6, 7, 8 ---------------------------------------------------------------------
  Runs intraday("backtest_desk.ini");
  const auto bt_cfg = build_run_config(config_entries("backtest_desk.ini", 0.0), {"backtest"});
  std::vector<fs::path> models;
  std::optional<BacktestSummary> bt;
  auto backtest = [&]() -> const BacktestSummary& {
    if (bt) return *bt;
    for (double lambda : bt_cfg.backtest->lambdas) {
      const fs::path p = work / ("intraday_" + fmt(lambda) + ".json");
      save_model(p, intraday.get(Preset::kMtPinn, lambda), Preset::kMtPinn, intraday.file());
      models.push_back(p);
    }
    CommandOptions co;
    co.config = std::string(MTPINN_CONFIG_DIR) + "/backtest_desk.ini";
    co.out = work / "backtest_a";
    MuteStdout mute;
    co.log = &mute.sink;
    bt = cmd_backtest(co, models, std::nullopt);
    return *bt;
  };

  criterion(6, "TWAP consistency", [&](Outcome& o) {
    const auto& b = backtest();
    const auto& twap = b.policies[0];
    const auto& mt0 = b.policies[1];
    o.require(b.n_windows == 21, std::to_string(b.n_windows) + " windows (21 expected)");
    const double rel = std::abs(mt0.mean_exposure - twap.mean_exposure) / twap.mean_exposure;
    o.require(rel <= 0.05, "lambda=0 exposure " + num(mt0.mean_exposure) + " vs TWAP " + num(twap.mean_exposure) +
                               " (" + num(100 * rel, "%.2f") + "% <= 5%)");
    const double third = std::abs(twap.mean_exposure - 1.0 / 3.0) / (1.0 / 3.0);
    o.require(third <= 0.02, "TWAP exposure within " + num(100 * third, "%.2f") + "% of 1/3");
    o.require(mt0.violations == 0, "lambda=0 residual violations " + std::to_string(mt0.violations));

    // Flat price: zero cost for TWAP and the trained policy; falling price: positive.
    const Run& r0 = intraday.get(Preset::kMtPinn, 0.0);
    const NetworkField f(r0.result.final_params());
    const int n = static_cast<int>(std::lround(r0.rc.hjb.horizon_T * bt_cfg.backtest->trading_day_seconds() /
                                               bt_cfg.backtest->interval_seconds));
    WindowRecord flat, down;
    flat.id = down.id = "probe";
    flat.horizon = down.horizon = r0.rc.hjb.horizon_T;
    for (int k = 0; k <= n; ++k) {
      flat.prices.push_back(605.0);
      down.prices.push_back(605.0 - 10.0 * k / n);
    }
    const auto tf = run_window_twap(flat, bt_cfg.backtest->epsilon);
    const auto pf = run_window_policy(f, flat, r0.rc.hjb, bt_cfg.backtest->epsilon);
    o.require(std::abs(tf.cost_bps) < 1e-9 && std::abs(pf.cost_bps) < 1e-9 && !pf.violation,
              "flat price cost TWAP " + num(tf.cost_bps) + " / policy " + num(pf.cost_bps) + " bps");
    const auto td = run_window_twap(down, bt_cfg.backtest->epsilon);
    const auto pd = run_window_policy(f, down, r0.rc.hjb, bt_cfg.backtest->epsilon);
    o.require(td.cost_bps > 0 && pd.cost_bps > 0,
              "falling price cost TWAP " + num(td.cost_bps) + " / policy " + num(pd.cost_bps) + " bps > 0");
  });

  criterion(7, "risk-exposure frontier", [&](Outcome& o) {
    const auto& b = backtest();
    bool ok = true;
    std::string line;
    for (std::size_t i = 1; i < b.policies.size(); ++i) {
      line += (i > 1 ? " > " : "") + num(b.policies[i].mean_exposure) + " (lambda " + num(b.policies[i].lambda) + ")";
      if (i > 1) ok = ok && b.policies[i - 1].mean_exposure - b.policies[i].mean_exposure >= 0.02;
    }
    o.require(b.policies.size() == 4, "three trained lambdas");
    o.require(ok, "exposure " + line + ", gaps >= 0.02");
  });

  criterion(8, "volatility estimator", [&](Outcome& o) {
    const auto& b = backtest();
    const double target = bt_cfg.backtest->feed_sigma;
    o.require(std::abs(b.sigma_hat - target) <= 0.1 * target,
              "sigma_hat " + num(b.sigma_hat) + " vs " + num(target) + " over " + std::to_string(b.n_windows) + " windows");
  });

  // 9 ---------------------------------------------------------------------------
  criterion(9, "determinism", [&](Outcome& o) {
    MuteStdout mute;
    auto opts = [&](const std::string& dir, const std::string& config) {
      CommandOptions co;
      co.config = config;
      co.out = work / dir;
      co.log = &mute.sink;
      co.seed = 3;
      return co;
    };
    const std::string desk = std::string(MTPINN_CONFIG_DIR) + "/synthetic_desk.ini";
    const std::string intr = std::string(MTPINN_CONFIG_DIR) + "/backtest_desk.ini";
    // A short training config derived from the desk preset.
    auto tiny = read_config_file(desk);
    tiny["curriculum.phase_a_epochs"] = "40";
    tiny["curriculum.stage_epochs"] = "20";
    tiny["sampler.n_pde"] = tiny["sampler.n_pde_phase_a"] = "300";
    const fs::path tiny_file = work / "tiny.ini";
    {
      std::ofstream out(tiny_file);
      std::string section;
      for (const auto& [k, v] : tiny) {
        const auto dot = k.find('.');
        if (k.substr(0, dot) != section) out << "[" << (section = k.substr(0, dot)) << "]\n";
        out << k.substr(dot + 1) << " = " << v << "\n";
      }
    }
    std::string why;
    for (const char* d : {"train_a", "train_b"}) cmd_train(opts(d, tiny_file.string()), Preset::kMtPinn, 0.1);
    o.require(same_tree(work / "train_a", work / "train_b", why), "train" + (why.empty() ? "" : " (" + why + ")"));
    why.clear();
    for (const char* d : {"eval_a", "eval_b"}) cmd_eval(opts(d, desk), work / "train_a" / "model.json");
    o.require(same_tree(work / "eval_a", work / "eval_b", why), "eval" + (why.empty() ? "" : " (" + why + ")"));
    why.clear();
    for (const char* d : {"feed_a", "feed_b"}) cmd_simulate_feed(opts(d, intr));
    o.require(same_tree(work / "feed_a", work / "feed_b", why), "simulate-feed" + (why.empty() ? "" : " (" + why + ")"));
    why.clear();
    backtest();
    cmd_backtest(opts("backtest_b", intr), models, work / "feed_a" / "feed.csv");
    cmd_backtest(opts("backtest_c", intr), models, work / "feed_a" / "feed.csv");
    o.require(same_tree(work / "backtest_b", work / "backtest_c", why), "backtest" + (why.empty() ? "" : " (" + why + ")"));
  });

  std::printf("%d of 9 criteria failed; total %.0f s\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
