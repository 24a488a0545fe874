// mtpinn: train / eval / backtest / simulate-feed.
//
// Exit codes: 0 ok, 1 usage, 2 config or checkpoint error, 3 data error,
// 4 training diverged or another runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtpinn/commands.hpp"

namespace {

void common_flags(CLI::App* cmd, mtpinn::CommandOptions& o, std::string& out) {
  cmd->add_option("--config", o.config, "config file (default: shipped preset for --scale)");
  cmd->add_option("--scale", o.scale, "shipped preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", out, "output directory")->required();
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-trajectory PINN for optimal execution"};
  app.require_subcommand(1);

  mtpinn::CommandOptions o;
  std::string out;
  std::string preset = "mtpinn";
  std::optional<double> lambda;
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::string data;

  auto* train = app.add_subcommand("train", "train a preset (stage-resumable in --out)");
  common_flags(train, o, out);
  train->add_option("--preset", preset, "vanilla, pinn_curr or mtpinn")
      ->check(CLI::IsMember({"vanilla", "pinn_curr", "mtpinn"}));
  train->add_option("--lambda", lambda, "target risk aversion (overrides hjb.lambda)");

  auto* eval = app.add_subcommand("eval", "terminal statistics and error surfaces of a checkpoint");
  common_flags(eval, o, out);
  eval->add_option("--checkpoint", checkpoint, "model.json from train")->required();

  auto* backtest = app.add_subcommand("backtest", "TWAP and trained policies over intraday windows");
  common_flags(backtest, o, out);
  backtest->add_option("--checkpoint", checkpoints, "one model.json per lambda (repeatable)");
  backtest->add_option("--data", data, "feed CSV timestamp,mid_price (default: seeded synthetic feed)");

  auto* feed = app.add_subcommand("simulate-feed", "write the seeded synthetic mid-price feed");
  common_flags(feed, o, out);

  CLI11_PARSE(app, argc, argv);
  o.out = out;

  try {
    if (train->parsed()) {
      mtpinn::cmd_train(o, mtpinn::parse_preset(preset), lambda);
    } else if (eval->parsed()) {
      mtpinn::cmd_eval(o, checkpoint);
    } else if (backtest->parsed()) {
      std::vector<std::filesystem::path> paths(checkpoints.begin(), checkpoints.end());
      std::optional<std::filesystem::path> src;
      if (!data.empty()) src = data;
      mtpinn::cmd_backtest(o, paths, src);
    } else {
      mtpinn::cmd_simulate_feed(o);
    }
  } catch (const mtpinn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mtpinn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const mtpinn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
