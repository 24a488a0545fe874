#pragma once

// The four CLI commands as library calls. Every command writes into an output
// directory and finishes with manifest.json listing each file it wrote with a
// content hash; nothing run-dependent (clock, host, paths) goes into any output,
// so reruns with the same config and seed reproduce every byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtpinn/backtest.hpp"
#include "mtpinn/checkpoint.hpp"
#include "mtpinn/evalkit.hpp"
#include "mtpinn/field.hpp"
#include "mtpinn/run_config.hpp"
#include "mtpinn/trainer.hpp"

namespace mtpinn {

namespace fs = std::filesystem;

struct CommandOptions {
  std::string config;         // explicit config file; empty = shipped preset for `scale`
  std::string scale = "desk";  // desk | paper
  std::uint64_t seed = 0;
  fs::path out = "out";
  int threads = 1;
  std::ostream* log = &std::cerr;  // progress and warnings
};

/// Collects the files a command writes, for the manifest.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& rel, const std::string& text) {
    write_file_atomic(dir_ / rel, text);
    files_[rel] = git_blob_sha1(text);
  }
  /// Records a file written earlier (e.g. a resumed stage).
  void adopt(const std::string& rel) {
    std::ifstream in(dir_ / rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files_[rel] = git_blob_sha1(ss.str());
  }

  void finish(const std::string& command, const std::string& config_hash, std::uint64_t seed,
              nlohmann::ordered_json extra = {}) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    for (auto& [k, v] : extra.items()) j[k] = v;
    auto files = nlohmann::ordered_json::array();
    for (const auto& [rel, hash] : files_) files.push_back({{"path", rel}, {"sha1", hash}});
    j["files"] = files;
    write_file_atomic(dir_ / "manifest.json", j.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> files_;
};

inline std::string preset_file(const std::string& family, const std::string& scale) {
  if (scale != "desk" && scale != "paper")
    throw ConfigError("--scale must be 'desk' or 'paper', got '" + scale + "'");
  return std::string(MTPINN_CONFIG_DIR) + "/" + family + "_" + scale + ".ini";
}

struct LoadedConfig {
  std::map<std::string, std::string> entries;
  RunConfig rc;
  std::string hash;
  std::string path;
};

inline LoadedConfig load_config(const CommandOptions& o, const std::string& family,
                                const std::set<std::string>& required = {},
                                std::optional<double> lambda = std::nullopt) {
  LoadedConfig c;
  c.path = o.config.empty() ? preset_file(family, o.scale) : o.config;
  c.entries = read_config_file(c.path);
  if (lambda) c.entries["hjb.lambda"] = fmt(*lambda);
  c.rc = build_run_config(c.entries, required);
  c.hash = config_hash(c.entries);
  return c;
}

inline std::string text_of(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

// ---- train -----------------------------------------------------------------

struct TrainSummary {
  CurriculumResult result;
  fs::path model_path;
  long total_epochs = 0;
};

/// Run description printed before training (also what `--scale paper` echoes).
inline std::string describe_run(Preset preset, const RunConfig& rc) {
  const auto plan = plan_stages(preset, rc);
  long epochs = 0;
  for (const auto& s : plan) epochs += s.epochs;
  const bool curriculum = plan.size() > 1;
  std::ostringstream os;
  os << "preset " << preset_name(preset) << ", lambda* " << rc.hjb.lambda_ << "\n";
  os << "  widths";
  for (int w : preset_widths(preset, rc)) os << ' ' << w;
  os << ", " << (rc.precision == Precision::kFloat32 ? "float32" : "float64") << "\n";
  os << "  collocation points " << (plan.front().input_dim == 2 ? rc.n_pde_phase_a : rc.counts.n_pde);
  if (curriculum) os << " (phase A), " << rc.counts.n_pde << " (price stages)";
  os << "; IC " << rc.counts.n_ic;
  if (preset == Preset::kMtPinn)
    os << "; trajectories " << rc.n_x * (rc.hjb.risk_neutral() ? 1 : rc.n_s) << " x "
       << rc.horizon_fractions.size() << " horizons x " << rc.n_dt << " steps";
  else
    os << "; terminal " << rc.counts.n_term;
  os << "\n  epochs " << epochs;
  if (curriculum) os << " (" << plan.front().epochs << " + " << plan.size() - 1 << " x " << plan[1].epochs << ")";
  os << "\n";
  return os.str();
}

inline std::string history_text(const std::vector<EpochRecord>& h, bool header) {
  return text_of([&](std::ostream& os) { write_history_csv(os, h, header); });
}

/// Trains into `o.out`. Each finished stage is stored under stages/, and a
/// rerun into the same directory resumes after the last stored stage.
inline TrainSummary cmd_train(const CommandOptions& o, Preset preset, std::optional<double> lambda) {
  const auto cfg = load_config(o, "synthetic", {}, lambda);
  const RunConfig& rc = cfg.rc;
  *o.log << describe_run(preset, rc);

  OutputSet out(o.out);
  auto stage_rel = [](const std::string& name) { return "stages/" + name + ".json"; };
  auto hist_rel = [](const std::string& name) { return "stages/" + name + ".history.csv"; };

  StageStore store;
  store.load = [&](const StagePlan& sp) -> std::optional<StageResult> {
    const fs::path p = o.out / stage_rel(sp.name);
    if (!fs::exists(p)) return std::nullopt;
    const Checkpoint ck = load_checkpoint(p);
    if (ck.config_hash != cfg.hash || ck.seed != static_cast<long>(o.seed) ||
        ck.preset != preset_name(preset) || !ck.params)
      throw CheckpointError("stored stage '" + p.string() +
                            "' belongs to a different run (config, seed or preset); use a fresh --out");
    *o.log << "resuming: " << sp.name << " loaded from " << p.string() << "\n";
    StageResult r;
    r.name = sp.name;
    r.lambda = sp.lambda;
    r.params = *ck.params;
    out.adopt(stage_rel(sp.name));
    out.adopt(hist_rel(sp.name));
    return r;
  };
  store.save = [&](const StageResult& r) {
    if (r.diverged) return;  // never resume from a diverged stage
    Checkpoint ck;
    ck.params = r.params;
    ck.hjb = rc.hjb;
    ck.hjb.lambda_ = r.lambda;
    ck.preset = preset_name(preset);
    ck.config_hash = cfg.hash;
    ck.seed = static_cast<long>(o.seed);
    ck.stage = r.name;
    out.write(hist_rel(r.name), history_text(r.history, true));
    out.write(stage_rel(r.name), checkpoint_to_json(ck).dump(1) + "\n");
  };

  TrainOptions topts;
  topts.threads = o.threads;
  topts.on_epoch = [&](const std::string&, const EpochRecord& r) {
    if (r.epoch % 500 != 0) return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "epoch %ld  loss %.6g\n", r.epoch, r.total);
    *o.log << buf;
  };

  TrainSummary s;
  s.result = run_curriculum(preset, rc, o.seed, topts, store);
  for (const auto& st : plan_stages(preset, rc)) s.total_epochs += st.epochs;

  // Full history: the per-stage files concatenated in stage order.
  std::string history = "epoch,term,raw_loss,weight,total\n";
  for (const auto& st : s.result.stages) {
    if (st.diverged) {
      history += history_text(st.history, false);
      continue;
    }
    std::ifstream in(o.out / hist_rel(st.name));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) history += line + "\n";
  }
  out.write("history.csv", history);

  nlohmann::ordered_json extra;
  extra["preset"] = preset_name(preset);
  extra["lambda"] = rc.hjb.lambda_;
  extra["epochs"] = s.total_epochs;
  if (s.result.diverged()) {
    const auto& bad = s.result.stages.back();
    extra["diverged"] = bad.name + ": " + bad.diagnostic;
    out.finish("train", cfg.hash, o.seed, extra);
    throw std::runtime_error("training diverged in " + bad.name + " (" + bad.diagnostic + ")");
  }
  Checkpoint ck;
  ck.params = s.result.final_params();
  ck.hjb = rc.hjb;
  ck.preset = preset_name(preset);
  ck.config_hash = cfg.hash;
  ck.seed = static_cast<long>(o.seed);
  ck.stage = "final";
  out.write("model.json", checkpoint_to_json(ck).dump(1) + "\n");
  out.finish("train", cfg.hash, o.seed, extra);
  s.model_path = o.out / "model.json";
  return s;
}

// ---- eval ------------------------------------------------------------------

inline std::unique_ptr<ValueField> field_of(const Checkpoint& ck) {
  if (ck.exact()) return std::make_unique<ExactField>(ck.hjb);
  return std::make_unique<NetworkField>(*ck.params);
}

/// The checkpoint's market must be the config's (lambda may differ: the
/// checkpoint's own lambda is used).
inline HJBConfig regime_of(const Checkpoint& ck, const HJBConfig& cfg, const std::string& where) {
  const HJBConfig& h = ck.hjb;
  if (h.kappa != cfg.kappa || h.sigma != cfg.sigma || h.horizon_T != cfg.horizon_T ||
      h.x_range.lo != cfg.x_range.lo || h.x_range.hi != cfg.x_range.hi ||
      h.s_range.lo != cfg.s_range.lo || h.s_range.hi != cfg.s_range.hi)
    throw ConfigError(where + ": checkpoint market (kappa, sigma, T, domain) differs from the config");
  return h;
}

struct EvalSummary {
  TerminalStats stats;
  ErrorMetrics surface;
};

inline EvalSummary cmd_eval(const CommandOptions& o, const fs::path& checkpoint) {
  const auto cfg = load_config(o, "synthetic", {"eval"});
  const EvalConfig& e = *cfg.rc.eval;
  const Checkpoint ck = load_checkpoint(checkpoint);
  const HJBConfig hjb = regime_of(ck, cfg.rc.hjb, checkpoint.string());
  const auto field = field_of(ck);
  const std::string model = ck.exact() ? "closed_form" : (ck.preset.empty() ? "mlp" : ck.preset);

  const auto paths = evaluation_paths(e.s0, hjb, e.n_paths, cfg.rc.n_dt);
  const auto terminals = terminal_inventories(*field, paths, e.x0, hjb, o.threads);
  EvalSummary s;
  s.stats = terminal_stats(terminals, e.epsilon);
  const auto surface = surface_errors(*field, hjb, e.surface_nt, e.surface_nx, e.surface_s);
  s.surface = surface.original;
  const auto curves = path_error_curves(*field, paths, e.x0, hjb, o.threads);

  OutputSet out(o.out);
  const std::string stats_csv =
      text_of([&](std::ostream& os) { write_terminal_stats_csv(os, model, hjb.lambda_, s.stats); });
  out.write("terminal_stats.csv", stats_csv);
  out.write("terminals.csv", text_of([&](std::ostream& os) { write_terminals_csv(os, terminals); }));
  out.write("surface_metrics.csv", text_of([&](std::ostream& os) { write_surface_metrics_csv(os, surface); }));
  out.write("surface_grid.csv", text_of([&](std::ostream& os) { write_surface_grid_csv(os, surface); }));
  out.write("path_errors.csv", text_of([&](std::ostream& os) { write_path_errors_csv(os, curves); }));
  nlohmann::ordered_json m;
  m["model"] = model;
  m["lambda"] = hjb.lambda_;
  m["terminal"] = terminal_stats_json(s.stats);
  m["surface"] = metrics_json(surface.original);
  m["surface_asinh"] = metrics_json(surface.asinh);
  out.write("metrics.json", m.dump(2) + "\n");
  out.finish("eval", cfg.hash, o.seed, {{"checkpoint_config_hash", ck.config_hash}});
  std::cout << stats_csv;
  return s;
}

// ---- backtest / simulate-feed ----------------------------------------------

inline std::string synthetic_feed_text(const BacktestConfig& b, std::uint64_t seed) {
  return text_of([&](std::ostream& os) { write_synthetic_feed(os, b, seed); });
}

inline void cmd_simulate_feed(const CommandOptions& o) {
  const auto cfg = load_config(o, "backtest", {"backtest"});
  OutputSet out(o.out);
  out.write("feed.csv", synthetic_feed_text(*cfg.rc.backtest, o.seed));
  out.finish("simulate-feed", cfg.hash, o.seed);
}

struct BacktestSummary {
  std::vector<PolicyAggregate> policies;  // TWAP first, then checkpoints in order
  double sigma_hat = 0.0;
  std::size_t n_windows = 0;
  std::vector<std::string> warnings;
};

/// TWAP plus every checkpoint over all windows of the feed (a CSV file, or
/// the seeded synthetic feed when `data` is empty).
inline BacktestSummary cmd_backtest(const CommandOptions& o, const std::vector<fs::path>& checkpoints,
                                    const std::optional<fs::path>& data) {
  const auto cfg = load_config(o, "backtest", {"backtest"});
  const BacktestConfig& b = *cfg.rc.backtest;
  // Every input is checked before anything is written.
  std::vector<std::pair<Checkpoint, HJBConfig>> models;
  for (const auto& path : checkpoints) {
    Checkpoint ck = load_checkpoint(path);
    const HJBConfig hjb = regime_of(ck, cfg.rc.hjb, path.string());
    models.emplace_back(std::move(ck), hjb);
  }

  std::string feed;
  if (data) {
    std::ifstream in(*data, std::ios::binary);
    if (!in) throw DataError("cannot open feed '" + data->string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    feed = ss.str();
  } else {
    feed = synthetic_feed_text(b, o.seed);
  }
  std::istringstream is(feed);
  const IngestResult ing = ingest_and_window(is, b);
  for (const auto& w : ing.warnings) *o.log << "warning: " << w << "\n";
  if (ing.windows.empty()) throw DataError("feed: no complete windows");

  OutputSet out(o.out);
  if (!data) out.write("feed.csv", feed);

  BacktestSummary s;
  s.n_windows = ing.windows.size();
  s.warnings = ing.warnings;
  s.sigma_hat = estimate_volatility(ing.windows);

  std::vector<WindowResult> rows;
  std::vector<WindowResult> twap;
  for (const auto& w : ing.windows) twap.push_back(run_window_twap(w, b.epsilon));
  s.policies.push_back(aggregate(twap));
  rows.insert(rows.end(), twap.begin(), twap.end());

  auto sources = nlohmann::ordered_json::array();
  for (const auto& [ck, hjb] : models) {
    const auto field = field_of(ck);
    std::vector<WindowResult> mine(ing.windows.size());
    parallel_for(ing.windows.size(), o.threads, [&](std::size_t i) {
      const auto f = field->clone();
      mine[i] = run_window_policy(*f, ing.windows[i], hjb, b.epsilon);
    });
    if (ck.exact())
      for (auto& r : mine) r.policy = "closed_form";
    s.policies.push_back(aggregate(mine));
    rows.insert(rows.end(), mine.begin(), mine.end());
    sources.push_back({{"lambda", hjb.lambda_}, {"config_hash", ck.config_hash}, {"model", ck.model}});
  }

  out.write("windows.csv", text_of([&](std::ostream& os) { write_window_csv(os, rows); }));
  std::string table = "policy,lambda,n_windows,mean_exposure,exposure_std,mean_cost_bps,cost_std_bps,violations\n";
  for (const auto& a : s.policies)
    table += a.policy + "," + fmt(a.lambda) + "," + std::to_string(a.n_windows) + "," + fmt(a.mean_exposure) +
             "," + fmt(a.exposure_std) + "," + fmt(a.mean_cost_bps) + "," + fmt(a.cost_std_bps) + "," +
             std::to_string(a.violations) + "\n";
  out.write("aggregate.csv", table);
  auto j = aggregate_json(s.policies, s.sigma_hat, b.epsilon);
  j["warnings"] = ing.warnings;
  out.write("aggregate.json", j.dump(2) + "\n");
  out.finish("backtest", cfg.hash, o.seed,
             {{"data", data ? "csv" : "synthetic"}, {"checkpoints", sources}});
  std::cout << table;
  return s;
}

}  // namespace mtpinn
