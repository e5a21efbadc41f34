#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "posereg/rng.hpp"
#include "posereg/tensor.hpp"

namespace testutil {

inline posereg::Tensor random_tensor(posereg::Rng& rng, posereg::Shape shape, double lo = -1.0,
                                     double hi = 1.0, bool requires_grad = true) {
  std::vector<double> v(posereg::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return posereg::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Largest relative error between backward() and central differences of
/// `objective` over every element of every leaf.
inline double max_fd_error(std::vector<posereg::Tensor> leaves,
                           const std::function<posereg::Tensor(const std::vector<posereg::Tensor>&)>& objective,
                           double eps = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  objective(leaves).backward();
  double worst = 0.0;
  posereg::NoGradGuard guard;
  for (auto& leaf : leaves) {
    auto values = leaf.values();
    const auto grad = leaf.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + eps;
      const double up = objective(leaves).item();
      values[i] = keep - eps;
      const double down = objective(leaves).item();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
    }
  }
  return worst;
}

}  // namespace testutil
