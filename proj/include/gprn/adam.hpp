#pragma once

#include "gprn/common.hpp"

namespace gprn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 2000;
};

inline void validate(const AdamConfig& c) {
  if (c.learning_rate <= 0.0) throw ConfigError("adam: learning_rate must be positive");
  if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0)
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (c.epsilon <= 0.0) throw ConfigError("adam: epsilon must be positive");
  if (c.epochs < 0) throw ConfigError("adam: epochs must be non-negative");
}

// Optimizer state is an immutable snapshot; each step produces a new one.
struct AdamState {
  VectorXd params;
  VectorXd m;
  VectorXd v;
  long step = 0;

  static AdamState init(VectorXd initial_params) {
    const Index len = initial_params.size();
    return AdamState{std::move(initial_params), VectorXd::Zero(len), VectorXd::Zero(len), 0};
  }
};

// One Adam ASCENT step (the ELBO is maximized) with bias correction.
inline AdamState adam_step(const AdamState& state, const VectorXd& grad, const AdamConfig& config) {
  if (grad.size() != state.params.size()) throw std::invalid_argument("adam_step: gradient length mismatch");
  AdamState next;
  next.step = state.step + 1;
  next.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  next.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(next.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(next.step));
  const VectorXd m_hat = next.m / bc1;
  const VectorXd v_hat = next.v / bc2;
  next.params =
      state.params + config.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + config.epsilon)).matrix();
  return next;
}

}  // namespace gprn
