#pragma once

#include <cstddef>

#include "posereg/tensor.hpp"

namespace posereg {

/// Zero-padded cross-correlation of a [C_in,H,W] input with [C_out,C_in,kH,kW]
/// kernels plus per-channel bias.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Gradient goes to the first (row-major) maximal element of each window.
Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride);

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Subgradient at exactly zero is zero.
Tensor relu(const Tensor& input);

/// [C,H,W] -> [C]
Tensor global_avg_pool(const Tensor& input);

/// Any shape -> [N]
Tensor flatten(const Tensor& input);

/// Euclidean norm of a - b as a scalar. At a == b the gradient is taken as zero.
Tensor l2_norm_diff(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Elements [begin, begin + length) of a 1-D tensor.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t length);

/// -log softmax(logits)[label], numerically stabilised.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace posereg
