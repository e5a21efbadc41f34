#include "posereg/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace posereg::kernels {

namespace {

using Index = std::ptrdiff_t;

// Output positions o in [lo, hi) whose input tap o*stride + k - pad lies in
// [0, in_len).
struct TapRange {
  Index lo;
  Index hi;
};

TapRange valid_outputs(Index k, Index pad, Index stride, Index in_len, Index out_len) {
  Index lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  Index last = in_len - 1 + pad - k;
  Index hi = last < 0 ? 0 : std::min(out_len, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

void conv_forward_channel(const ConvDims& d, std::size_t co, const double* input,
                          const double* weights, const double* bias, double* out) {
  const Index in_h = Index(d.in_h), in_w = Index(d.in_w);
  const Index out_h = Index(d.out_h()), out_w = Index(d.out_w());
  const Index s = Index(d.stride), p = Index(d.padding);
  double* plane = out + co * out_h * out_w;
  std::fill(plane, plane + out_h * out_w, bias[co]);
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
    const double* src = input + ci * in_h * in_w;
    const double* wk = weights + (co * d.in_channels + ci) * d.kernel_h * d.kernel_w;
    for (Index kh = 0; kh < Index(d.kernel_h); ++kh) {
      const auto rows = valid_outputs(kh, p, s, in_h, out_h);
      for (Index kw = 0; kw < Index(d.kernel_w); ++kw) {
        const auto cols = valid_outputs(kw, p, s, in_w, out_w);
        const double w = wk[kh * Index(d.kernel_w) + kw];
        for (Index oh = rows.lo; oh < rows.hi; ++oh) {
          const Index base = (oh * s + kh - p) * in_w + kw - p;
          double* dst = plane + oh * out_w;
          for (Index ow = cols.lo; ow < cols.hi; ++ow) dst[ow] += w * src[base + ow * s];
        }
      }
    }
  }
}

void conv_backward_input_channel(const ConvDims& d, std::size_t ci, const double* grad_out,
                                 const double* weights, double* grad_input) {
  const Index in_h = Index(d.in_h), in_w = Index(d.in_w);
  const Index out_h = Index(d.out_h()), out_w = Index(d.out_w());
  const Index s = Index(d.stride), p = Index(d.padding);
  double* dst_plane = grad_input + ci * in_h * in_w;
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    const double* g = grad_out + co * out_h * out_w;
    const double* wk = weights + (co * d.in_channels + ci) * d.kernel_h * d.kernel_w;
    for (Index kh = 0; kh < Index(d.kernel_h); ++kh) {
      const auto rows = valid_outputs(kh, p, s, in_h, out_h);
      for (Index kw = 0; kw < Index(d.kernel_w); ++kw) {
        const auto cols = valid_outputs(kw, p, s, in_w, out_w);
        const double w = wk[kh * Index(d.kernel_w) + kw];
        for (Index oh = rows.lo; oh < rows.hi; ++oh) {
          const Index base = (oh * s + kh - p) * in_w + kw - p;
          const double* grow = g + oh * out_w;
          for (Index ow = cols.lo; ow < cols.hi; ++ow) dst_plane[base + ow * s] += w * grow[ow];
        }
      }
    }
  }
}

void conv_backward_params_channel(const ConvDims& d, std::size_t co, const double* grad_out,
                                  const double* input, double* grad_weights, double* grad_bias) {
  const Index in_h = Index(d.in_h), in_w = Index(d.in_w);
  const Index out_h = Index(d.out_h()), out_w = Index(d.out_w());
  const Index s = Index(d.stride), p = Index(d.padding);
  const double* g = grad_out + co * out_h * out_w;
  double bias_sum = 0.0;
  for (Index i = 0; i < out_h * out_w; ++i) bias_sum += g[i];
  grad_bias[co] += bias_sum;
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
    const double* src = input + ci * in_h * in_w;
    double* gw = grad_weights + (co * d.in_channels + ci) * d.kernel_h * d.kernel_w;
    for (Index kh = 0; kh < Index(d.kernel_h); ++kh) {
      const auto rows = valid_outputs(kh, p, s, in_h, out_h);
      for (Index kw = 0; kw < Index(d.kernel_w); ++kw) {
        const auto cols = valid_outputs(kw, p, s, in_w, out_w);
        double acc = 0.0;
        for (Index oh = rows.lo; oh < rows.hi; ++oh) {
          const Index base = (oh * s + kh - p) * in_w + kw - p;
          const double* grow = g + oh * out_w;
          for (Index ow = cols.lo; ow < cols.hi; ++ow) acc += grow[ow] * src[base + ow * s];
        }
        gw[kh * Index(d.kernel_w) + kw] += acc;
      }
    }
  }
}

void pool_forward_channel(const PoolDims& d, std::size_t c, const double* input, double* out,
                          std::size_t* argmax) {
  const std::size_t oh_n = d.out_h(), ow_n = d.out_w();
  const std::size_t base = c * d.in_h * d.in_w;
  for (std::size_t oh = 0; oh < oh_n; ++oh) {
    for (std::size_t ow = 0; ow < ow_n; ++ow) {
      std::size_t best = base + (oh * d.stride) * d.in_w + ow * d.stride;
      for (std::size_t wh = 0; wh < d.window; ++wh) {
        for (std::size_t ww = 0; ww < d.window; ++ww) {
          std::size_t idx = base + (oh * d.stride + wh) * d.in_w + ow * d.stride + ww;
          if (input[idx] > input[best]) best = idx;
        }
      }
      const std::size_t o = (c * oh_n + oh) * ow_n + ow;
      out[o] = input[best];
      argmax[o] = best;
    }
  }
}

void pool_backward_channel(const PoolDims& d, std::size_t c, const double* grad_out,
                           const std::size_t* argmax, double* grad_input) {
  const std::size_t n = d.out_h() * d.out_w();
  for (std::size_t i = c * n; i < (c + 1) * n; ++i) grad_input[argmax[i]] += grad_out[i];
}

void linear_row(std::size_t r, std::size_t cols, const double* input, const double* weights,
                const double* bias, double* out) {
  const double* w = weights + r * cols;
  double acc = bias[r];
  for (std::size_t c = 0; c < cols; ++c) acc += w[c] * input[c];
  out[r] = acc;
}

void linear_grad_row(std::size_t r, std::size_t cols, const double* grad_out, const double* input,
                     double* grad_weights, double* grad_bias) {
  const double g = grad_out[r];
  double* gw = grad_weights + r * cols;
  for (std::size_t c = 0; c < cols; ++c) gw[c] += g * input[c];
  grad_bias[r] += g;
}

void linear_grad_input_col(std::size_t c, std::size_t rows, std::size_t cols,
                           const double* grad_out, const double* weights, double* grad_input) {
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) acc += grad_out[r] * weights[r * cols + c];
  grad_input[c] += acc;
}

}  // namespace

namespace serial {

void conv2d_forward(const ConvDims& d, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out) {
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    conv_forward_channel(d, co, input.data(), weights.data(), bias.data(), out.data());
  }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_input) {
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
    conv_backward_input_channel(d, ci, grad_out.data(), weights.data(), grad_input.data());
  }
}

void conv2d_backward_params(const ConvDims& d, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weights,
                            std::span<double> grad_bias) {
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    conv_backward_params_channel(d, co, grad_out.data(), input.data(), grad_weights.data(),
                                 grad_bias.data());
  }
}

void max_pool_forward(const PoolDims& d, std::span<const double> input, std::span<double> out,
                      std::span<std::size_t> argmax) {
  for (std::size_t c = 0; c < d.channels; ++c) {
    pool_forward_channel(d, c, input.data(), out.data(), argmax.data());
  }
}

void max_pool_backward(const PoolDims& d, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_input) {
  for (std::size_t c = 0; c < d.channels; ++c) {
    pool_backward_channel(d, c, grad_out.data(), argmax.data(), grad_input.data());
  }
}

void linear_forward(std::size_t rows, std::size_t cols, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    linear_row(r, cols, input.data(), weights.data(), bias.data(), out.data());
  }
}

void linear_backward(std::size_t rows, std::size_t cols, std::span<const double> grad_out,
                     std::span<const double> input, std::span<const double> weights,
                     std::span<double> grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    linear_grad_row(r, cols, grad_out.data(), input.data(), grad_weights.data(), grad_bias.data());
  }
  if (grad_input.empty()) return;
  for (std::size_t c = 0; c < cols; ++c) {
    linear_grad_input_col(c, rows, cols, grad_out.data(), weights.data(), grad_input.data());
  }
}

}  // namespace serial

namespace parallel {

// Loop bounds are converted to signed ints for OpenMP canonical form.

void conv2d_forward(const ConvDims& d, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out) {
  const auto n = static_cast<std::int64_t>(d.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < n; ++co) {
    conv_forward_channel(d, std::size_t(co), input.data(), weights.data(), bias.data(),
                         out.data());
  }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weights, std::span<double> grad_input) {
  const auto n = static_cast<std::int64_t>(d.in_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < n; ++ci) {
    conv_backward_input_channel(d, std::size_t(ci), grad_out.data(), weights.data(),
                                grad_input.data());
  }
}

void conv2d_backward_params(const ConvDims& d, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weights,
                            std::span<double> grad_bias) {
  const auto n = static_cast<std::int64_t>(d.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < n; ++co) {
    conv_backward_params_channel(d, std::size_t(co), grad_out.data(), input.data(),
                                 grad_weights.data(), grad_bias.data());
  }
}

void max_pool_forward(const PoolDims& d, std::span<const double> input, std::span<double> out,
                      std::span<std::size_t> argmax) {
  const auto n = static_cast<std::int64_t>(d.channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < n; ++c) {
    pool_forward_channel(d, std::size_t(c), input.data(), out.data(), argmax.data());
  }
}

void max_pool_backward(const PoolDims& d, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_input) {
  // Windows overlap across outputs but never across channels.
  const auto n = static_cast<std::int64_t>(d.channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < n; ++c) {
    pool_backward_channel(d, std::size_t(c), grad_out.data(), argmax.data(), grad_input.data());
  }
}

void linear_forward(std::size_t rows, std::size_t cols, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    linear_row(std::size_t(r), cols, input.data(), weights.data(), bias.data(), out.data());
  }
}

void linear_backward(std::size_t rows, std::size_t cols, std::span<const double> grad_out,
                     std::span<const double> input, std::span<const double> weights,
                     std::span<double> grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias) {
  const auto n_rows = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n_rows; ++r) {
    linear_grad_row(std::size_t(r), cols, grad_out.data(), input.data(), grad_weights.data(),
                    grad_bias.data());
  }
  if (grad_input.empty()) return;
  const auto n_cols = static_cast<std::int64_t>(cols);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < n_cols; ++c) {
    linear_grad_input_col(std::size_t(c), rows, cols, grad_out.data(), weights.data(),
                          grad_input.data());
  }
}

}  // namespace parallel

}  // namespace posereg::kernels
