#include "posereg/optim.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace posereg {

OptimizerState make_optimizer_state(std::span<const Tensor> params, double base_lr,
                                    double momentum, double decay_factor,
                                    std::size_t decay_period_epochs) {
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay_factor must lie in (0, 1]");
  }
  if (decay_period_epochs == 0) throw std::invalid_argument("decay period must be positive");
  OptimizerState state;
  state.base_lr = base_lr;
  state.momentum = momentum;
  state.decay_factor = decay_factor;
  state.decay_period_epochs = decay_period_epochs;
  for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
  return state;
}

double lr_schedule(const OptimizerState& state, std::size_t epoch) {
  const auto steps = epoch / state.decay_period_epochs;
  double lr = state.base_lr;
  for (std::size_t i = 0; i < steps; ++i) lr *= state.decay_factor;
  // Rates are decimal hyperparameters: 1e-5 * 0.1 is 1.0000000000000002e-06 in
  // binary64, so the product is rounded to 15 significant digits to land on
  // the double nearest the decimal value (1e-06).
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", lr);
  return std::strtod(buf, nullptr);
}

void sgd_momentum_step(std::span<Tensor> params, OptimizerState& state, std::size_t epoch) {
  if (state.velocity.size() != params.size()) {
    throw std::logic_error("optimizer tracks " + std::to_string(state.velocity.size()) +
                           " velocity buffers for " + std::to_string(params.size()) +
                           " parameters");
  }
  const double lr = lr_schedule(state, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].values();
    auto grad = params[i].grad();
    auto& v = state.velocity[i];
    if (v.size() != values.size()) {
      throw std::logic_error("velocity buffer " + std::to_string(i) + " has " +
                             std::to_string(v.size()) + " entries, parameter has " +
                             std::to_string(values.size()));
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      v[j] = state.momentum * v[j] - lr * grad[j];
      values[j] += v[j];
    }
    params[i].zero_grad();
  }
}

}  // namespace posereg
