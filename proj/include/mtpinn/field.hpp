#pragma once

// A value field Gamma(tau, X, S) together with its X-derivative, which is all a
// feedback policy needs (v = Gamma_X / 2). Either a trained network or the
// closed form; evaluation code is written against this interface so the exact
// field doubles as a zero-error stub.

#include <algorithm>
#include <memory>

#include "mtpinn/closed_form.hpp"
#include "mtpinn/diffnet.hpp"

namespace mtpinn {

class ValueField {
 public:
  virtual ~ValueField() = default;
  virtual double value(const StatePoint& p) const = 0;
  virtual double d_x(const StatePoint& p) const = 0;
  double rate(const StatePoint& p) const { return 0.5 * d_x(p); }
  /// Independent copy for use on another thread (evaluation scratch is per object).
  virtual std::unique_ptr<ValueField> clone() const = 0;
};

/// Network field. Evaluates one column at a time with the same tape request as
/// the training rollout, so rollouts reproduce rollout_inventory exactly.
class NetworkField final : public ValueField {
 public:
  explicit NetworkField(ModelParams params) : params_(std::move(params)), view_(params_) {}

  double value(const StatePoint& p) const override {
    column(p);
    tape_.forward(view_, z_, DerivRequest::none());
    return tape_.value()(0);
  }
  double d_x(const StatePoint& p) const override {
    column(p);
    tape_.forward(view_, z_, {false, true, false, false});
    return tape_.d_x()(0);
  }
  const ModelParams& params() const { return params_; }
  std::unique_ptr<ValueField> clone() const override {
    return std::make_unique<NetworkField>(params_);
  }

 private:
  void column(const StatePoint& p) const {
    z_.resize(params_.input_dim, 1);
    z_(kTau, 0) = p.tau;
    z_(kX, 0) = p.x;
    if (params_.input_dim == 3) z_(kS, 0) = p.s;
  }

  ModelParams params_;
  NetworkView<double> view_;
  mutable BasicFieldTape<double> tape_;
  mutable Matrix z_;
};

class ExactField final : public ValueField {
 public:
  explicit ExactField(const HJBConfig& cfg) : cfg_(cfg) {}

  double value(const StatePoint& p) const override { return value_exact(p, cfg_); }
  double d_x(const StatePoint& p) const override {
    // 2 v*, written in time-to-maturity.
    const double k = cfg_.kappa;
    double g = 2.0 * p.x * k / std::tanh(k * p.tau);
    if (!cfg_.risk_neutral()) g += cfg_.lambda_ * p.s / k * std::tanh(0.5 * k * p.tau);
    return g;
  }
  std::unique_ptr<ValueField> clone() const override { return std::make_unique<ExactField>(cfg_); }

 private:
  HJBConfig cfg_;
};

}  // namespace mtpinn
