#pragma once

// JSON checkpoints with header "MTPINN-CKPT-1". A checkpoint either carries a
// network ("model": "mlp") or names the closed-form field ("model":
// "closed_form"), which evaluation treats as an exact stub. Weights are stored
// row-major; doubles are printed with round-trip precision, so save/load is
// lossless and byte-stable.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/diffnet.hpp"

namespace mtpinn {

inline constexpr const char* kCheckpointFormat = "MTPINN-CKPT-1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string model = "mlp";  // "mlp" or "closed_form"
  std::optional<ModelParams> params;
  HJBConfig hjb;
  std::string preset;
  std::string config_hash;
  long seed = 0;
  std::string stage;  // e.g. "phase_a", "stage_3", "final"

  bool exact() const { return model == "closed_form"; }
};

inline nlohmann::ordered_json hjb_to_json(const HJBConfig& c) {
  return {{"kappa", c.kappa},         {"sigma", c.sigma},
          {"lambda", c.lambda_},      {"horizon_T", c.horizon_T},
          {"x_range", {c.x_range.lo, c.x_range.hi}},
          {"s_range", {c.s_range.lo, c.s_range.hi}}};
}

inline HJBConfig hjb_from_json(const nlohmann::json& j) {
  HJBConfig c;
  c.kappa = j.at("kappa").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.lambda_ = j.at("lambda").get<double>();
  c.horizon_T = j.at("horizon_T").get<double>();
  c.x_range = {j.at("x_range").at(0).get<double>(), j.at("x_range").at(1).get<double>()};
  c.s_range = {j.at("s_range").at(0).get<double>(), j.at("s_range").at(1).get<double>()};
  c.validate();
  return c;
}

inline nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["model"] = ck.model;
  j["preset"] = ck.preset;
  j["stage"] = ck.stage;
  j["seed"] = ck.seed;
  j["config_hash"] = ck.config_hash;
  j["hjb"] = hjb_to_json(ck.hjb);
  if (ck.model == "mlp") {
    if (!ck.params) throw CheckpointError("checkpoint: mlp model without parameters");
    const ModelParams& p = *ck.params;
    j["input_dim"] = p.input_dim;
    j["widths"] = p.widths();
    j["input_shift"] = std::vector<double>(p.input_shift.data(), p.input_shift.data() + p.input_dim);
    j["input_scale"] = std::vector<double>(p.input_scale.data(), p.input_scale.data() + p.input_dim);
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : p.layers) {
      std::vector<double> w;
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
      layers.push_back({{"rows", l.weight.rows()},
                        {"cols", l.weight.cols()},
                        {"weight", w},
                        {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    j["layers"] = layers;
  } else if (ck.model != "closed_form") {
    throw CheckpointError("checkpoint: unknown model kind '" + ck.model + "'");
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw CheckpointError("checkpoint: unsupported format '" + j.at("format").get<std::string>() +
                            "'");
    Checkpoint ck;
    ck.model = j.at("model").get<std::string>();
    ck.preset = j.value("preset", "");
    ck.stage = j.value("stage", "");
    ck.seed = j.value("seed", 0L);
    ck.config_hash = j.value("config_hash", "");
    ck.hjb = hjb_from_json(j.at("hjb"));
    if (ck.model == "mlp") {
      ModelParams p;
      p.input_dim = j.at("input_dim").get<int>();
      const auto shift = j.at("input_shift").get<std::vector<double>>();
      const auto scale = j.at("input_scale").get<std::vector<double>>();
      p.input_shift = Eigen::Map<const Vector>(shift.data(), static_cast<Eigen::Index>(shift.size()));
      p.input_scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
      for (const auto& lj : j.at("layers")) {
        const auto rows = lj.at("rows").get<Eigen::Index>();
        const auto cols = lj.at("cols").get<Eigen::Index>();
        const auto w = lj.at("weight").get<std::vector<double>>();
        const auto b = lj.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
            static_cast<Eigen::Index>(b.size()) != rows)
          throw CheckpointError("checkpoint: layer array sizes do not match rows/cols");
        LayerParams l{Matrix(rows, cols), Vector(rows)};
        for (Eigen::Index r = 0; r < rows; ++r)
          for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        for (Eigen::Index r = 0; r < rows; ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
        p.layers.push_back(std::move(l));
      }
      try {
        p.validate();
      } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
      }
      if (j.contains("widths") && j.at("widths").get<std::vector<int>>() != p.widths())
        throw CheckpointError("checkpoint: widths do not match the layer arrays");
      ck.params = std::move(p);
    } else if (ck.model != "closed_form") {
      throw CheckpointError("checkpoint: unknown model kind '" + ck.model + "'");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
}

/// Writes `text` to `path` via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, checkpoint_to_json(ck).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace mtpinn
