#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posereg/tensor.hpp"

namespace posereg {

struct OptimizerState {
  std::vector<std::vector<double>> velocity;  // one buffer per parameter
  double momentum = 0.9;
  double base_lr = 1e-5;
  double decay_factor = 0.1;
  std::size_t decay_period_epochs = 80;
};

/// Zero velocity buffers matching each parameter's size.
OptimizerState make_optimizer_state(std::span<const Tensor> params, double base_lr,
                                    double momentum, double decay_factor,
                                    std::size_t decay_period_epochs);

/// base_lr * decay_factor^floor(epoch / decay_period_epochs)
double lr_schedule(const OptimizerState& state, std::size_t epoch);

/// v <- momentum*v - lr(epoch)*grad; p <- p + v; then zeroes every gradient.
/// Throws std::logic_error when the state does not track every parameter.
void sgd_momentum_step(std::span<Tensor> params, OptimizerState& state, std::size_t epoch);

}  // namespace posereg
