#pragma once

// Dense loop kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial` is the reference used by tests and
// `parallel` splits the outermost channel loop across OpenMP threads. Each
// output element is owned by exactly one iteration of that loop and is summed
// in the same order in both variants, so results are bit-identical for any
// thread count.

#include <cstddef>
#include <span>

namespace posereg::kernels {

struct ConvDims {
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
};

struct PoolDims {
  std::size_t channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t window = 1;
  std::size_t stride = 1;

  std::size_t out_h() const { return (in_h - window) / stride + 1; }
  std::size_t out_w() const { return (in_w - window) / stride + 1; }
};

namespace serial {
// out[co] = bias[co] + sum over ci of weights[co,ci] cross-correlated with input[ci].
void conv2d_forward(const ConvDims& d, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);
// Accumulates into grad_input.
void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_input);
// Accumulates into grad_weights and grad_bias.
void conv2d_backward_params(const ConvDims& d, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weights,
                            std::span<double> grad_bias);
// argmax receives the flat input index picked for each output; the first
// maximum in row-major window order wins ties.
void max_pool_forward(const PoolDims& d, std::span<const double> input, std::span<double> out,
                      std::span<std::size_t> argmax);
void max_pool_backward(const PoolDims& d, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_input);
// out = weights[rows x cols] * input + bias
void linear_forward(std::size_t rows, std::size_t cols, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);
// grad_input may be empty when the input needs no gradient.
void linear_backward(std::size_t rows, std::size_t cols, std::span<const double> grad_out,
                     std::span<const double> input, std::span<const double> weights,
                     std::span<double> grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias);
}  // namespace serial

namespace parallel {
// out[co] = bias[co] + sum over ci of weights[co,ci] cross-correlated with input[ci].
void conv2d_forward(const ConvDims& d, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);
// Accumulates into grad_input.
void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_input);
// Accumulates into grad_weights and grad_bias.
void conv2d_backward_params(const ConvDims& d, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weights,
                            std::span<double> grad_bias);
// argmax receives the flat input index picked for each output; the first
// maximum in row-major window order wins ties.
void max_pool_forward(const PoolDims& d, std::span<const double> input, std::span<double> out,
                      std::span<std::size_t> argmax);
void max_pool_backward(const PoolDims& d, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_input);
// out = weights[rows x cols] * input + bias
void linear_forward(std::size_t rows, std::size_t cols, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out);
// grad_input may be empty when the input needs no gradient.
void linear_backward(std::size_t rows, std::size_t cols, std::span<const double> grad_out,
                     std::span<const double> input, std::span<const double> weights,
                     std::span<double> grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias);
}  // namespace parallel

}  // namespace posereg::kernels
