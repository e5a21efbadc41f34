#pragma once

// Naive reference implementations and gradient-probe helpers shared by the
// unit tests and the acceptance checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "posereg/ops.hpp"
#include "posereg/rng.hpp"
#include "posereg/tensor.hpp"

namespace testutil {

using posereg::Rng;
using posereg::Shape;
using posereg::Tensor;
using posereg::shape_numel;

// Direct 6-loop cross-correlation with zero padding.
inline std::vector<double> naive_conv(const Tensor& x, const Tensor& k, const Tensor& b,
                                      std::size_t stride, std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(co * oh * ow);
  auto X = x.values();
  auto K = k.values();
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double s = b.values()[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v) {
              const long yy = long(r * stride + u) - long(pad);
              const long xx = long(c * stride + v) - long(pad);
              if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) continue;
              s += K[((o * ci + i) * kh + u) * kw + v] * X[(i * h + std::size_t(yy)) * w + std::size_t(xx)];
            }
        out[(o * oh + r) * ow + c] = s;
      }
  return out;
}

inline std::vector<double> naive_pool(const Tensor& x, std::size_t win, std::size_t stride) {
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h - win) / stride + 1, ow = (w - win) / stride + 1;
  std::vector<double> out;
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < win; ++u)
          for (std::size_t v = 0; v < win; ++v)
            m = std::max(m, x.values()[(c * h + r * stride + u) * w + q * stride + v]);
        out.push_back(m);
      }
  return out;
}

inline std::vector<double> naive_linear(const Tensor& x, const Tensor& wt, const Tensor& b) {
  std::vector<double> out(wt.dim(0));
  for (std::size_t m = 0; m < wt.dim(0); ++m) {
    double s = b.values()[m];
    for (std::size_t n = 0; n < wt.dim(1); ++n) s += wt.values()[m * wt.dim(1) + n] * x.values()[n];
    out[m] = s;
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Scalar objective that weights every output element differently.
inline Tensor probe_objective(const Tensor& out, Rng& rng) {
  const Tensor flat = flatten(out);
  std::vector<double> target(flat.size());
  for (auto& t : target) t = rng.uniform(-2.0, 2.0);
  return l2_norm_diff(flat, Tensor::from({flat.size()}, target));
}

// Values at least `gap` apart so max-pool and relu stay away from their kinks
// under the finite-difference step.
inline Tensor well_separated(Rng& rng, Shape shape, double gap) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (double(i) - double(n) / 2.0) * gap;
  rng.shuffle(std::span<double>(v));
  return Tensor::from(std::move(shape), std::move(v), true);
}


}  // namespace testutil
