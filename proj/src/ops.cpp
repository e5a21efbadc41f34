#include "posereg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "posereg/kernels.hpp"

namespace posereg {

namespace {

namespace k = kernels::parallel;

[[noreturn]] void mismatch(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const std::string& op, const std::string& name, const Tensor& t,
                  std::size_t rank) {
  if (t.shape().size() != rank) {
    mismatch(op, name + " must have rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

std::span<double> grad_of(detail::Node& n) { return n.grad; }

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const std::string op = "conv2d";
  require_rank(op, "input", input, 3);
  require_rank(op, "kernels", kernels, 4);
  require_rank(op, "bias", bias, 1);
  if (stride == 0) mismatch(op, "stride must be positive");
  kernels::ConvDims d;
  d.in_channels = input.dim(0);
  d.in_h = input.dim(1);
  d.in_w = input.dim(2);
  d.out_channels = kernels.dim(0);
  d.kernel_h = kernels.dim(2);
  d.kernel_w = kernels.dim(3);
  d.stride = stride;
  d.padding = padding;
  if (kernels.dim(1) != d.in_channels) {
    mismatch(op, "kernel input channels " + std::to_string(kernels.dim(1)) +
                     " != input channels " + std::to_string(d.in_channels));
  }
  if (bias.dim(0) != d.out_channels) {
    mismatch(op, "bias length " + std::to_string(bias.dim(0)) + " != output channels " +
                     std::to_string(d.out_channels));
  }
  if (d.kernel_h > d.in_h + 2 * padding) {
    mismatch(op, "kernel height " + std::to_string(d.kernel_h) + " exceeds padded input height " +
                     std::to_string(d.in_h + 2 * padding));
  }
  if (d.kernel_w > d.in_w + 2 * padding) {
    mismatch(op, "kernel width " + std::to_string(d.kernel_w) + " exceeds padded input width " +
                     std::to_string(d.in_w + 2 * padding));
  }
  Shape out_shape{d.out_channels, d.out_h(), d.out_w()};
  std::vector<double> out(shape_numel(out_shape));
  k::conv2d_forward(d, input.values(), kernels.values(), bias.values(), out);

  return Tensor::make_result(std::move(out_shape), std::move(out), {input, kernels, bias},
                             [d](detail::Node& self) {
                               auto& in = *self.parents[0];
                               auto& w = *self.parents[1];
                               auto& b = *self.parents[2];
                               if (in.requires_grad) {
                                 k::conv2d_backward_input(d, self.grad, w.values, grad_of(in));
                               }
                               if (w.requires_grad || b.requires_grad) {
                                 // Kernel and bias gradients share one pass; a
                                 // frozen operand gets a scratch buffer.
                                 std::vector<double> gw_scratch, gb_scratch;
                                 std::span<double> gw = w.grad, gb = b.grad;
                                 if (!w.requires_grad) {
                                   gw_scratch.assign(w.values.size(), 0.0);
                                   gw = gw_scratch;
                                 }
                                 if (!b.requires_grad) {
                                   gb_scratch.assign(b.values.size(), 0.0);
                                   gb = gb_scratch;
                                 }
                                 k::conv2d_backward_params(d, self.grad, in.values, gw, gb);
                               }
                             });
}

Tensor max_pool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  const std::string op = "max_pool2d";
  if (window == 0) mismatch(op, "window must be positive");
  if (stride == 0) mismatch(op, "stride must be positive");
  require_rank(op, "input", input, 3);
  kernels::PoolDims d;
  d.channels = input.dim(0);
  d.in_h = input.dim(1);
  d.in_w = input.dim(2);
  d.window = window;
  d.stride = stride;
  if (window > d.in_h || window > d.in_w) {
    mismatch(op, "window " + std::to_string(window) + " larger than input " +
                     shape_to_string(input.shape()));
  }
  Shape out_shape{d.channels, d.out_h(), d.out_w()};
  const auto n = shape_numel(out_shape);
  std::vector<double> out(n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(n);
  k::max_pool_forward(d, input.values(), out, *argmax);
  return Tensor::make_result(std::move(out_shape), std::move(out), {input},
                             [d, argmax](detail::Node& self) {
                               k::max_pool_backward(d, self.grad, *argmax,
                                                    grad_of(*self.parents[0]));
                             });
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::string op = "linear";
  require_rank(op, "input", input, 1);
  require_rank(op, "weights", weights, 2);
  require_rank(op, "bias", bias, 1);
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  if (cols != input.dim(0)) {
    mismatch(op, "weights have " + std::to_string(cols) + " columns but input has " +
                     std::to_string(input.dim(0)) + " elements");
  }
  if (bias.dim(0) != rows) {
    mismatch(op, "bias length " + std::to_string(bias.dim(0)) + " != weight rows " +
                     std::to_string(rows));
  }
  std::vector<double> out(rows);
  k::linear_forward(rows, cols, input.values(), weights.values(), bias.values(), out);
  return Tensor::make_result(
      Shape{rows}, std::move(out), {input, weights, bias}, [rows, cols](detail::Node& self) {
        auto& in = *self.parents[0];
        auto& w = *self.parents[1];
        auto& b = *self.parents[2];
        std::span<double> gin;
        if (in.requires_grad) gin = in.grad;
        std::vector<double> gw_scratch, gb_scratch;
        std::span<double> gw = w.grad, gb = b.grad;
        if (!w.requires_grad) {
          gw_scratch.assign(w.values.size(), 0.0);
          gw = gw_scratch;
        }
        if (!b.requires_grad) {
          gb_scratch.assign(b.values.size(), 0.0);
          gb = gb_scratch;
        }
        k::linear_backward(rows, cols, self.grad, in.values, w.values, gin, gw, gb);
      });
}

Tensor relu(const Tensor& input) {
  auto in = input.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return Tensor::make_result(input.shape(), std::move(out), {input}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t i = 0; i < in.values.size(); ++i) {
      if (in.values[i] > 0.0) in.grad[i] += self.grad[i];
    }
  });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank("global_avg_pool", "input", input, 3);
  const std::size_t c = input.dim(0), plane = input.dim(1) * input.dim(2);
  if (plane == 0) mismatch("global_avg_pool", "empty spatial extent");
  auto in = input.values();
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += in[ch * plane + i];
    out[ch] = sum / double(plane);
  }
  return Tensor::make_result(Shape{c}, std::move(out), {input}, [c, plane](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = self.grad[ch] / double(plane);
      for (std::size_t i = 0; i < plane; ++i) in.grad[ch * plane + i] += g;
    }
  });
}

Tensor flatten(const Tensor& input) {
  std::vector<double> out(input.values().begin(), input.values().end());
  const std::size_t n = out.size();
  return Tensor::make_result(Shape{n}, std::move(out), {input}, [](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor l2_norm_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    mismatch("l2_norm_diff", "length " + std::to_string(a.size()) + " != " +
                                 std::to_string(b.size()));
  }
  auto av = a.values(), bv = b.values();
  double sq = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sq += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double norm = std::sqrt(sq);
  return Tensor::make_result(Shape{1}, {norm}, {a, b}, [norm](detail::Node& self) {
    if (norm == 0.0) return;
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const double g = self.grad[0] / norm;
    for (std::size_t i = 0; i < an.values.size(); ++i) {
      const double d = g * (an.values[i] - bn.values[i]);
      if (an.requires_grad) an.grad[i] += d;
      if (bn.requires_grad) bn.grad[i] -= d;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    mismatch("add", "shape " + shape_to_string(a.shape()) + " != " + shape_to_string(b.shape()));
  }
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += factor * self.grad[i];
  });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t length) {
  require_rank("slice", "input", a, 1);
  if (begin + length > a.size()) {
    mismatch("slice", "range [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                          ") exceeds length " + std::to_string(a.size()));
  }
  auto av = a.values();
  std::vector<double> out(av.begin() + std::ptrdiff_t(begin),
                          av.begin() + std::ptrdiff_t(begin + length));
  return Tensor::make_result(Shape{length}, std::move(out), {a}, [begin](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[begin + i] += self.grad[i];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank("softmax_cross_entropy", "logits", logits, 1);
  if (label >= logits.size()) {
    mismatch("softmax_cross_entropy", "label " + std::to_string(label) + " out of range for " +
                                          std::to_string(logits.size()) + " classes");
  }
  auto z = logits.values();
  const double peak = *std::max_element(z.begin(), z.end());
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    (*probs)[i] = std::exp(z[i] - peak);
    total += (*probs)[i];
  }
  for (auto& p : *probs) p /= total;
  const double loss = -(z[label] - peak - std::log(total));
  return Tensor::make_result(Shape{1}, {loss}, {logits}, [probs, label](detail::Node& self) {
    auto& in = *self.parents[0];
    for (std::size_t i = 0; i < probs->size(); ++i) {
      in.grad[i] += self.grad[0] * ((*probs)[i] - (i == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace posereg
