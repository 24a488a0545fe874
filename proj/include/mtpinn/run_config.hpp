#pragma once

// Run configuration: INI text with sections [model] [hjb] [sampler] [dwa]
// [curriculum] [optim], plus [eval] and [backtest] for the commands that need
// them. Every key of a section in use is required and unknown keys are
// rejected, so a typo cannot silently fall back to a default.
//
// config_hash() is a git blob SHA-1 over the sorted "section.key=value" lines
// of the effective configuration (after command-line overrides).

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/dwa.hpp"
#include "mtpinn/losses.hpp"
#include "mtpinn/optim.hpp"
#include "mtpinn/sampler.hpp"

namespace mtpinn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { kFloat32, kFloat64 };

/// Affine map of network inputs onto [-1, 1]: off, the price axis only, or
/// every axis.
enum class InputScaling { kNone, kPrice, kAll };

struct CurriculumSchedule {
  std::vector<double> fractions{0.25, 0.5, 0.75, 0.9, 1.0};
  long phase_a_epochs = 3000;
  long stage_epochs = 1000;
  long vanilla_epochs = 8000;  // single-stage budget of the vanilla preset when lambda > 0

  void validate() const {
    if (fractions.empty()) throw ConfigError("curriculum.fractions must be nonempty");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (!(fractions[i] > 0.0) || (i > 0 && !(fractions[i] > fractions[i - 1])))
        throw ConfigError("curriculum.fractions must be positive and strictly increasing");
    }
    if (fractions.back() != 1.0) throw ConfigError("curriculum.fractions must end at 1.0");
    if (phase_a_epochs < 0 || stage_epochs < 0 || vanilla_epochs < 0)
      throw ConfigError("curriculum epoch counts must be >= 0");
  }
};

struct EvalConfig {
  double x0 = 10.0;
  double s0 = 55.0;
  int n_paths = 200;
  double epsilon = 0.05;
  int surface_nt = 50;
  int surface_nx = 41;
  double surface_s = 55.0;
};

struct WindowSpec {
  int start_seconds = 0;  // seconds after midnight, session-local
  int end_seconds = 0;
};

struct BacktestConfig {
  int interval_seconds = 5;
  int session_open = 9 * 3600 + 30 * 60;
  int session_close = 16 * 3600;
  std::vector<WindowSpec> windows;
  double max_gap_factor = 10.0;
  double epsilon = 0.025;
  std::vector<double> lambdas{0.0, 0.05, 0.1};
  int feed_days = 7;
  std::string feed_start_date = "2025-02-10";
  double feed_s0_min = 590.0;
  double feed_s0_max = 620.0;
  double feed_sigma = 0.0038;

  double trading_day_seconds() const { return session_close - session_open; }
};

struct RunConfig {
  std::vector<int> widths{32, 32, 32};
  std::vector<int> baseline_widths{32, 32, 32};  // vanilla and pinn_curr presets
  Precision precision = Precision::kFloat32;
  InputScaling input_scaling = InputScaling::kNone;

  HJBConfig hjb;  // lambda_ holds the target lambda*

  SamplerCounts counts;
  std::size_t n_pde_phase_a = 3000;  // PDE points of the lambda = 0 phase
  std::size_t n_x = 41;
  std::size_t n_s = 2;
  std::vector<double> horizon_fractions{0.02, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  int n_dt = 100;
  double penalty_c = 100.0;
  bool resample_each_epoch = false;

  DwaConfig dwa;
  TermWeights initial_weights{1.0, 1.0, 0.1, 0.5, 0.5, 1.0};

  CurriculumSchedule curriculum;
  AdamWConfig optim;     // optim.lr drives phase A and the vanilla run
  double stage_lr = 5e-4;  // curriculum stages at lambda > 0

  std::optional<EvalConfig> eval;
  std::optional<BacktestConfig> backtest;

  /// Effective key/value text, one entry per key.
  std::map<std::string, std::string> entries;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

/// "HH:MM" to seconds after midnight.
inline int parse_clock(const std::string& key, const std::string& v) {
  int h = 0, m = 0;
  char tail = 0;
  if (std::sscanf(v.c_str(), "%d:%d%c", &h, &m, &tail) != 2 || h < 0 || h > 23 || m < 0 || m > 59)
    throw ConfigError("config key '" + key + "': expected HH:MM, got '" + v + "'");
  return h * 3600 + m * 60;
}

}  // namespace detail

inline const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema{
      {"model", {"widths", "baseline_widths", "precision", "input_scaling"}},
      {"hjb", {"kappa", "sigma", "lambda", "horizon_T", "x_min", "x_max", "s_min", "s_max"}},
      {"sampler",
       {"n_pde", "n_pde_phase_a", "n_ic", "n_term", "n_zero_term", "n_x", "n_s", "horizons", "n_dt", "penalty_c",
        "resample_each_epoch"}},
      {"dwa",
       {"beta", "alpha", "delta", "w_min", "w_max", "freeze_tol", "freeze_after", "w_pde",
        "w_traj", "w_ic", "w_sym", "w_zero_term", "w_term"}},
      {"curriculum", {"fractions", "phase_a_epochs", "stage_epochs", "vanilla_epochs"}},
      {"optim", {"lr", "stage_lr", "beta1", "beta2", "eps", "weight_decay"}},
      {"eval", {"x0", "s0", "n_paths", "epsilon", "surface_nt", "surface_nx", "surface_s"}},
      {"backtest",
       {"interval_seconds", "session_open", "session_close", "windows", "max_gap_factor",
        "epsilon", "lambdas", "feed_days", "feed_start_date", "feed_s0_min", "feed_s0_max",
        "feed_sigma"}},
  };
  return schema;
}

inline const std::set<std::string>& core_sections() {
  static const std::set<std::string> s{"model", "hjb", "sampler", "dwa", "curriculum", "optim"};
  return s;
}

/// Flattens INI text into "section.key" -> value, rejecting unknown entries.
inline std::map<std::string, std::string> read_config_entries(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  const auto& schema = config_schema();
  std::map<std::string, std::string> out;
  for (const auto& [section, body] : tree) {
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      out[section + "." + key] = detail::trim(value.get_value<std::string>());
    }
  }
  return out;
}

/// Builds a RunConfig from flattened entries. Sections listed in `required`
/// (besides the core ones) must be present.
inline RunConfig build_run_config(const std::map<std::string, std::string>& entries,
                                  const std::set<std::string>& required = {}) {
  const auto& schema = config_schema();
  std::set<std::string> present;
  for (const auto& [k, v] : entries) present.insert(k.substr(0, k.find('.')));
  std::set<std::string> need = core_sections();
  need.insert(required.begin(), required.end());
  for (const auto& section : present) need.insert(section);
  for (const auto& section : need) {
    for (const auto& key : schema.at(section)) {
      if (!entries.count(section + "." + key))
        throw ConfigError("missing config key '" + section + "." + key + "'");
    }
  }

  auto str = [&](const std::string& k) { return entries.at(k); };
  auto num = [&](const std::string& k) { return detail::parse_double(k, str(k)); };
  auto integer = [&](const std::string& k) { return detail::parse_long(k, str(k)); };
  auto count = [&](const std::string& k) {
    const long v = integer(k);
    if (v < 0) throw ConfigError("config key '" + k + "' must be >= 0");
    return static_cast<std::size_t>(v);
  };
  auto list = [&](const std::string& k) {
    std::vector<double> out;
    for (const auto& item : detail::split(str(k), ',')) out.push_back(detail::parse_double(k, item));
    return out;
  };

  RunConfig rc;
  rc.entries = entries;
  auto widths = [&](const std::string& k) {
    std::vector<int> out;
    for (const auto& item : detail::split(str(k), ',')) {
      const long w = detail::parse_long(k, item);
      if (w <= 0) throw ConfigError("config key '" + k + "': widths must be positive");
      out.push_back(static_cast<int>(w));
    }
    return out;
  };
  rc.widths = widths("model.widths");
  rc.baseline_widths = widths("model.baseline_widths");
  const std::string prec = str("model.precision");
  if (prec == "float32")
    rc.precision = Precision::kFloat32;
  else if (prec == "float64")
    rc.precision = Precision::kFloat64;
  else
    throw ConfigError("config key 'model.precision': expected float32 or float64");
  const std::string scaling = str("model.input_scaling");
  if (scaling == "none")
    rc.input_scaling = InputScaling::kNone;
  else if (scaling == "price")
    rc.input_scaling = InputScaling::kPrice;
  else if (scaling == "all")
    rc.input_scaling = InputScaling::kAll;
  else
    throw ConfigError("config key 'model.input_scaling': expected none, price or all");

  rc.hjb.kappa = num("hjb.kappa");
  rc.hjb.sigma = num("hjb.sigma");
  rc.hjb.lambda_ = num("hjb.lambda");
  rc.hjb.horizon_T = num("hjb.horizon_T");
  rc.hjb.x_range = {num("hjb.x_min"), num("hjb.x_max")};
  rc.hjb.s_range = {num("hjb.s_min"), num("hjb.s_max")};
  try {
    rc.hjb.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[hjb] ") + e.what());
  }

  rc.counts = {count("sampler.n_pde"), count("sampler.n_ic"), count("sampler.n_term"),
               count("sampler.n_zero_term")};
  rc.n_pde_phase_a = count("sampler.n_pde_phase_a");
  rc.n_x = count("sampler.n_x");
  rc.n_s = count("sampler.n_s");
  rc.horizon_fractions = list("sampler.horizons");
  rc.n_dt = static_cast<int>(integer("sampler.n_dt"));
  rc.penalty_c = num("sampler.penalty_c");
  rc.resample_each_epoch =
      detail::parse_bool("sampler.resample_each_epoch", str("sampler.resample_each_epoch"));

  rc.dwa.beta = num("dwa.beta");
  rc.dwa.alpha = num("dwa.alpha");
  rc.dwa.delta = static_cast<int>(integer("dwa.delta"));
  rc.dwa.w_min = num("dwa.w_min");
  rc.dwa.w_max = num("dwa.w_max");
  rc.dwa.freeze_tol = num("dwa.freeze_tol");
  rc.dwa.freeze_after = static_cast<int>(integer("dwa.freeze_after"));
  try {
    rc.dwa.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[dwa] ") + e.what());
  }
  rc.initial_weights[index_of(Term::kPde)] = num("dwa.w_pde");
  rc.initial_weights[index_of(Term::kTraj)] = num("dwa.w_traj");
  rc.initial_weights[index_of(Term::kIc)] = num("dwa.w_ic");
  rc.initial_weights[index_of(Term::kSym)] = num("dwa.w_sym");
  rc.initial_weights[index_of(Term::kZeroTerm)] = num("dwa.w_zero_term");
  rc.initial_weights[index_of(Term::kTermPenalty)] = num("dwa.w_term");

  rc.curriculum.fractions = list("curriculum.fractions");
  rc.curriculum.phase_a_epochs = integer("curriculum.phase_a_epochs");
  rc.curriculum.stage_epochs = integer("curriculum.stage_epochs");
  rc.curriculum.vanilla_epochs = integer("curriculum.vanilla_epochs");
  rc.curriculum.validate();

  rc.optim = {num("optim.lr"), num("optim.beta1"), num("optim.beta2"), num("optim.eps"),
              num("optim.weight_decay")};
  rc.stage_lr = num("optim.stage_lr");
  if (!(rc.optim.lr > 0.0) || !(rc.stage_lr > 0.0)) throw ConfigError("[optim] learning rates must be > 0");

  if (need.count("eval")) {
    EvalConfig e;
    e.x0 = num("eval.x0");
    e.s0 = num("eval.s0");
    e.n_paths = static_cast<int>(integer("eval.n_paths"));
    e.epsilon = num("eval.epsilon");
    e.surface_nt = static_cast<int>(integer("eval.surface_nt"));
    e.surface_nx = static_cast<int>(integer("eval.surface_nx"));
    e.surface_s = num("eval.surface_s");
    if (e.n_paths < 1 || e.surface_nt < 1 || e.surface_nx < 1)
      throw ConfigError("[eval] counts must be >= 1");
    rc.eval = e;
  }
  if (need.count("backtest")) {
    BacktestConfig b;
    b.interval_seconds = static_cast<int>(integer("backtest.interval_seconds"));
    b.session_open = detail::parse_clock("backtest.session_open", str("backtest.session_open"));
    b.session_close = detail::parse_clock("backtest.session_close", str("backtest.session_close"));
    for (const auto& w : detail::split(str("backtest.windows"), ',')) {
      const auto dash = w.find('-');
      if (dash == std::string::npos)
        throw ConfigError("config key 'backtest.windows': expected HH:MM-HH:MM, got '" + w + "'");
      b.windows.push_back({detail::parse_clock("backtest.windows", detail::trim(w.substr(0, dash))),
                           detail::parse_clock("backtest.windows", detail::trim(w.substr(dash + 1)))});
    }
    b.max_gap_factor = num("backtest.max_gap_factor");
    b.epsilon = num("backtest.epsilon");
    b.lambdas = list("backtest.lambdas");
    b.feed_days = static_cast<int>(integer("backtest.feed_days"));
    b.feed_start_date = str("backtest.feed_start_date");
    b.feed_s0_min = num("backtest.feed_s0_min");
    b.feed_s0_max = num("backtest.feed_s0_max");
    b.feed_sigma = num("backtest.feed_sigma");
    if (b.interval_seconds < 1) throw ConfigError("backtest.interval_seconds must be >= 1");
    if (!(b.session_close > b.session_open)) throw ConfigError("backtest session is empty");
    for (const auto& w : b.windows) {
      if (!(w.end_seconds > w.start_seconds) || w.start_seconds < b.session_open ||
          w.end_seconds > b.session_close)
        throw ConfigError("backtest window outside the session or empty");
      if ((w.end_seconds - w.start_seconds) % b.interval_seconds != 0)
        throw ConfigError("backtest window length is not a multiple of the interval");
    }
    rc.backtest = b;
  }
  return rc;
}

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return read_config_entries(in);
}

inline std::string hex_digest(const unsigned char* d, std::size_t n) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += hex[d[i] >> 4];
    out += hex[d[i] & 15];
  }
  return out;
}

/// git-style blob SHA-1 of arbitrary bytes.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  return hex_digest(digest, len);
}

inline std::string canonical_config_text(const std::map<std::string, std::string>& entries) {
  std::string text;
  for (const auto& [k, v] : entries) text += k + "=" + v + "\n";  // std::map iterates sorted
  return text;
}

inline std::string config_hash(const std::map<std::string, std::string>& entries) {
  return git_blob_sha1(canonical_config_text(entries));
}

}  // namespace mtpinn
