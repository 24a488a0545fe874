#pragma once

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (mhat / (sqrt(vhat) + eps) + decay * theta)

#include <cmath>
#include <stdexcept>

#include "mtpinn/diffnet.hpp"

namespace mtpinn {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  AdamWConfig config;
  GradientAccumulator m;
  GradientAccumulator v;
  long step = 0;

  static OptimizerState fresh(const ModelParams& params, const AdamWConfig& config) {
    return {config, GradientAccumulator::zeros_like(params),
            GradientAccumulator::zeros_like(params), 0};
  }
};

inline void adamw_step(ModelParams& params, const GradientAccumulator& grad, OptimizerState& opt) {
  if (!grad.shape_matches(params) || !opt.m.shape_matches(params))
    throw std::invalid_argument("adamw_step: gradient or moments do not match the parameters");
  const AdamWConfig& c = opt.config;
  ++opt.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    theta -= c.lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + c.eps) +
                     c.weight_decay * theta.array())
                        .matrix();
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grad.layers[l].weight, opt.m.layers[l].weight,
           opt.v.layers[l].weight);
    update(params.layers[l].bias, grad.layers[l].bias, opt.m.layers[l].bias,
           opt.v.layers[l].bias);
  }
}

}  // namespace mtpinn
