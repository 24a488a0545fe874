#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mtpinn/evalkit.hpp"
#include "mtpinn/losses.hpp"

namespace mtpinn {
namespace {

ModelParams zero_net(int dim) {
  ModelParams p = init_params(dim, {4, 4}, 0);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return p;
}

PricePath flat_path(double s, double T, int n) {
  PricePath p;
  p.times = euler_times(T, n);
  p.prices.assign(p.times.size(), s);
  return p;
}

/// Gamma = a X: constant rate a/2, overshoots zero for large a.
class LinearField final : public ValueField {
 public:
  explicit LinearField(double a) : a_(a) {}
  double value(const StatePoint& p) const override { return a_ * p.x; }
  double d_x(const StatePoint&) const override { return a_; }
  std::unique_ptr<ValueField> clone() const override { return std::make_unique<LinearField>(a_); }

 private:
  double a_;
};

TEST(Rollout, ZeroGradientKeepsInventory) {
  const HJBConfig cfg;
  const NetworkField f(zero_net(2));
  const auto r = rollout_policy(f, simulate_gbm(55, cfg, 50, 1), 10.0, cfg);
  EXPECT_EQ(r.terminal, 10.0);
  for (double x : r.inventory) EXPECT_EQ(x, 10.0);
  EXPECT_EQ(r.times.size(), r.inventory.size());
  EXPECT_EQ(r.rate.size(), r.value.size());
}

TEST(Rollout, ClosedFormControlLiquidatesWithEulerError) {
  const HJBConfig cfg;
  const ExactField f(cfg);
  const double e200 = std::abs(rollout_policy(f, flat_path(55, 5, 200), 10.0, cfg).terminal);
  const double e400 = std::abs(rollout_policy(f, flat_path(55, 5, 400), 10.0, cfg).terminal);
  EXPECT_LE(e200, 5e-3 * 10.0);
  EXPECT_LT(e400, e200);
}

TEST(Rollout, ClampStopsAtZeroAndNeverShorts) {
  const HJBConfig cfg;
  const LinearField f(40.0);
  const auto path = flat_path(55, 5, 20);
  const auto free = rollout_policy(f, path, 1.0, cfg);
  EXPECT_LT(*std::min_element(free.inventory.begin(), free.inventory.end()), 0.0);
  const auto r = rollout_policy(f, path, 1.0, cfg, {true, true});
  EXPECT_EQ(*std::min_element(r.inventory.begin(), r.inventory.end()), 0.0);
  EXPECT_EQ(r.terminal, 0.0);
  bool zero_seen = false;
  for (std::size_t k = 0; k < r.rate.size(); ++k) {
    if (zero_seen) EXPECT_EQ(r.rate[k], 0.0);
    zero_seen = zero_seen || r.inventory[k] == 0.0;
  }
}

TEST(Rollout, NoShortIgnoresBuyingControl) {
  const HJBConfig cfg;
  const LinearField f(-4.0);
  const auto r = rollout_policy(f, flat_path(55, 5, 10), 1.0, cfg, {false, true});
  EXPECT_EQ(r.terminal, 1.0);
}

TEST(Rollout, UnclampedMatchesTrainingRolloutBitForBit) {
  HJBConfig cfg;
  cfg.lambda_ = 0.1;
  for (int dim : {2, 3}) {
    const ModelParams p = init_params(dim, {8, 8}, 17 + dim);
    const NetworkField f(p);
    for (double x0 : {-7.0, 3.0, 10.0}) {
      const double a = rollout_policy(f, flat_path(42.0, cfg.horizon_T, 37), x0, cfg).terminal;
      const double b = rollout_inventory(p, x0, 42.0, cfg.horizon_T, 37, cfg);
      EXPECT_EQ(a, b) << dim << " " << x0;
    }
  }
}

TEST(TerminalStats, Basics) {
  const auto z = terminal_stats({0, 0, 0}, 0.05);
  EXPECT_EQ(z.mean, 0.0);
  EXPECT_EQ(z.pass_rate, 1.0);
  const auto s = terminal_stats({0.1, 0.0}, 0.05);
  EXPECT_DOUBLE_EQ(s.mean, 0.05);
  EXPECT_EQ(s.pass_rate, 0.5);
  EXPECT_NEAR(s.std, std::sqrt(0.005), 1e-15);  // n-1
  EXPECT_EQ(terminal_stats({-0.2}, 0.05).mean, 0.2);
  EXPECT_THROW(terminal_stats({}, 0.05), std::invalid_argument);
}

TEST(TerminalStats, NearestRankPercentile) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_EQ(terminal_stats(v, 0).p95, 95.0);
  v.resize(20);
  EXPECT_EQ(terminal_stats(v, 0).p95, 19.0);
  EXPECT_EQ(terminal_stats({3.0}, 0).p95, 3.0);
}

TEST(TerminalStats, PermutationInvariantScaleEquivariant) {
  Rng rng(3);
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(uniform01(rng) * 0.3 - 0.1);
  const auto a = terminal_stats(v, 0.05);
  auto w = v;
  std::reverse(w.begin(), w.end());
  std::rotate(w.begin(), w.begin() + 37, w.end());
  const auto b = terminal_stats(w, 0.05);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
  EXPECT_EQ(a.p95, b.p95);
  EXPECT_EQ(a.pass_rate, b.pass_rate);
  for (auto& x : w) x *= 4.0;
  const auto c = terminal_stats(w, 0.05);
  EXPECT_NEAR(c.mean, 4 * a.mean, 1e-14);
  EXPECT_NEAR(c.std, 4 * a.std, 1e-14);
  EXPECT_EQ(c.p95, 4 * a.p95);
  EXPECT_LE(c.pass_rate, a.pass_rate);
}

TEST(Surface, ExactFieldHasZeroError) {
  HJBConfig cfg;
  cfg.lambda_ = 0.05;
  const auto r = surface_errors(ExactField(cfg), cfg, 10, 11, 55);
  EXPECT_EQ(r.original.max_ae, 0.0);
  EXPECT_EQ(r.asinh.max_ae, 0.0);
  EXPECT_EQ(r.t.size(), 110u);
}

TEST(Surface, ZeroNetworkMaeIsMeanOfValue) {
  const HJBConfig cfg;
  const auto r = surface_errors(NetworkField(zero_net(2)), cfg, 20, 21, 55);
  double sum = 0.0;
  for (int i = 1; i <= 20; ++i)
    for (int j = 0; j < 21; ++j) {
      const double tau = 5.0 * i / 20, x = -10.0 + j;
      sum += 0.1 * x * x * std::cosh(0.1 * tau) / std::sinh(0.1 * tau);
    }
  EXPECT_NEAR(r.original.mae, sum / 420, 1e-10 * sum / 420);
  EXPECT_GE(r.original.max_ae, r.original.rmse);
  EXPECT_GE(r.original.rmse, r.original.mae);
  EXPECT_GE(r.asinh.max_ae, r.asinh.rmse);
  EXPECT_GE(r.asinh.rmse, r.asinh.mae);
}

TEST(Surface, AsinhMetricsIgnoreMatchingOutliers) {
  const std::vector<double> p{1.0, 2.0, -3.0}, e{1.5, 2.0, -2.0};
  auto ap = p, ae = e;
  ap.push_back(1e300);
  ae.push_back(1e300);
  auto as = [](std::vector<double> v) {
    for (auto& x : v) x = std::asinh(x);
    return v;
  };
  const auto m1 = error_metrics(as(p), as(e));
  const auto m2 = error_metrics(as(ap), as(ae));
  EXPECT_EQ(m1.max_ae, m2.max_ae);
  EXPECT_NEAR(m2.mae * 4, m1.mae * 3, 1e-15);
}

TEST(PathErrors, ExactFieldGivesZeroCurves) {
  HJBConfig cfg;
  cfg.lambda_ = 0.1;
  const auto paths = evaluation_paths(55, cfg, 4, 50);
  const auto c = path_error_curves(ExactField(cfg), paths, 10, cfg);
  ASSERT_EQ(c.times.size(), 50u);
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    EXPECT_EQ(c.gamma_mean[k], 0.0);
    EXPECT_EQ(c.x_mean[k], 0.0);
    EXPECT_EQ(c.v_mean[k], 0.0);
    EXPECT_EQ(c.x_std[k], 0.0);
  }
  EXPECT_GT(c.euler_gap.back(), 0.0);  // the Euler reference is not the continuum path
}

TEST(PathErrors, RiskNeutralCurvesArePriceInvariant) {
  const HJBConfig cfg;
  const auto paths = evaluation_paths(55, cfg, 2, 40);
  ASSERT_NE(paths[0].prices, paths[1].prices);
  const auto c = path_error_curves(NetworkField(init_params(2, {6}, 4)), paths, 10, cfg, 2);
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    EXPECT_EQ(c.gamma_std[k], 0.0);
    EXPECT_EQ(c.x_std[k], 0.0);
    EXPECT_EQ(c.v_std[k], 0.0);
  }
  EXPECT_GT(c.x_mean.back(), 0.0);
}

TEST(Exports, DeterministicText) {
  const HJBConfig cfg;
  const NetworkField f(init_params(2, {6}, 4));
  auto run = [&] {
    std::ostringstream os;
    const auto paths = evaluation_paths(55, cfg, 5, 20);
    write_terminal_stats_csv(os, "mtpinn", 0, terminal_stats(terminal_inventories(f, paths, 10, cfg, 3), 0.05));
    write_surface_grid_csv(os, surface_errors(f, cfg, 3, 3, 55));
    write_path_errors_csv(os, path_error_curves(f, paths, 10, cfg, 2));
    return os.str();
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.rfind("model,lambda,n_paths,epsilon,mean,std,p95,p_eps\n", 0), 0u);
  EXPECT_NE(a.find("t,x,err,asinh_err\n"), std::string::npos);
}

}  // namespace
}  // namespace mtpinn
