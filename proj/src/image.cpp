#include "posereg/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "posereg/errors.hpp"

namespace posereg {

namespace {

void require_image(const Tensor& image, const char* what) {
  if (!image.defined() || image.shape().size() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected a [C,H,W] image");
  }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// 1-D bilinear sample positions for resizing n -> m.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps make_taps(std::size_t n, std::size_t m) {
  Taps t;
  t.lo.resize(m);
  t.hi.resize(m);
  t.frac.resize(m);
  const double ratio = double(n) / double(m);
  for (std::size_t i = 0; i < m; ++i) {
    double src = (double(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, double(n - 1));
    const auto lo = std::size_t(std::floor(src));
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, n - 1);
    t.frac[i] = src - double(lo);
  }
  return t;
}

// Offsets 0..range in `steps` points with both ends included, rounded half up.
std::vector<std::size_t> spread(std::size_t range, std::size_t steps) {
  std::vector<std::size_t> out(steps);
  if (steps == 1) {
    out[0] = range / 2;
    return out;
  }
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = (2 * i * range + (steps - 1)) / (2 * (steps - 1));
  }
  return out;
}

std::string read_token(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  return token;
}

struct NetpbmHeader {
  std::size_t width = 0, height = 0;
};

NetpbmHeader read_header(std::istream& in, const std::string& magic,
                         const std::filesystem::path& path) {
  if (read_token(in) != magic) throw FormatError(path.string() + ": expected " + magic + " header");
  NetpbmHeader h;
  try {
    h.width = std::stoul(read_token(in));
    h.height = std::stoul(read_token(in));
    if (std::stoul(read_token(in)) != 255) throw FormatError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed header");
  }
  in.get();  // single whitespace before the raster
  return h;
}

}  // namespace

Tensor rescale_shortest_side(const Tensor& image, std::size_t target) {
  require_image(image, "rescale_shortest_side");
  if (target == 0) throw std::invalid_argument("rescale_shortest_side: target must be positive");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == 0 || w == 0) throw std::invalid_argument("rescale_shortest_side: empty image");
  std::size_t oh, ow;
  if (h <= w) {
    oh = target;
    ow = std::size_t(std::llround(double(w) * double(target) / double(h)));
  } else {
    ow = target;
    oh = std::size_t(std::llround(double(h) * double(target) / double(w)));
  }
  if (oh == h && ow == w) return image.detach();

  const Taps ty = make_taps(h, oh), tx = make_taps(w, ow);
  const auto src = image.values();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = src.data() + ch * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const double fy = ty.frac[i];
      const double* r0 = plane + ty.lo[i] * w;
      const double* r1 = plane + ty.hi[i] * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const double fx = tx.frac[j];
        const double top = r0[tx.lo[j]] + fx * (r0[tx.hi[j]] - r0[tx.lo[j]]);
        const double bot = r1[tx.lo[j]] + fx * (r1[tx.hi[j]] - r1[tx.lo[j]]);
        out[(ch * oh + i) * ow + j] = top + fy * (bot - top);
      }
    }
  }
  return Tensor::from({c, oh, ow}, std::move(out));
}

std::string to_string(CropMode mode) {
  switch (mode) {
    case CropMode::Random:
      return "random";
    case CropMode::Center:
      return "center";
    case CropMode::Dense:
      return "dense";
  }
  return "?";
}

CropMode parse_crop_mode(const std::string& text) {
  if (text == "random") return CropMode::Random;
  if (text == "center") return CropMode::Center;
  if (text == "dense") return CropMode::Dense;
  throw ConfigError("unknown crop mode '" + text + "' (expected random, center or dense)");
}

void CropSpec::validate() const {
  if (crop_side == 0) throw ConfigError("crop_side must be positive");
  if (crop_side > rescale_side) {
    throw ConfigError("crop_side " + std::to_string(crop_side) + " exceeds rescale_side " +
                      std::to_string(rescale_side));
  }
  if (dense_count == 0) throw ConfigError("dense_count must be positive");
}

std::pair<std::size_t, std::size_t> dense_grid(std::size_t count, std::size_t range_h,
                                               std::size_t range_w) {
  if (count == 0) throw std::invalid_argument("dense_grid: count must be positive");
  double target;
  if (range_h == 0 && range_w == 0) {
    target = 0.0;
  } else if (range_w == 0) {
    target = std::numeric_limits<double>::infinity();
  } else if (range_h == 0) {
    target = -std::numeric_limits<double>::infinity();
  } else {
    target = std::log(double(range_h) / double(range_w));
  }
  std::size_t best_r = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r <= count; ++r) {
    if (count % r != 0) continue;
    const double ratio = std::log(double(r) / double(count / r));
    double dist;
    if (std::isinf(target)) {
      dist = target > 0 ? -ratio : ratio;  // prefer the extreme
    } else {
      dist = std::abs(ratio - target);
    }
    if (dist < best - 1e-12) {
      best = dist;
      best_r = r;
    }
  }
  return {best_r, count / best_r};
}

std::vector<CropOffset> crop_offsets(std::size_t height, std::size_t width, const CropSpec& spec,
                                     Rng* rng) {
  const std::size_t c = spec.crop_side;
  if (c == 0 || c > height || c > width) {
    throw std::invalid_argument("crop: crop side " + std::to_string(c) + " does not fit a " +
                                std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  const std::size_t dh = height - c, dw = width - c;
  switch (spec.mode) {
    case CropMode::Center:
      return {{dh / 2, dw / 2}};
    case CropMode::Random: {
      if (rng == nullptr) throw std::invalid_argument("crop: random mode needs an rng");
      const std::size_t row = rng->below(dh + 1);
      const std::size_t col = rng->below(dw + 1);
      return {{row, col}};
    }
    case CropMode::Dense: {
      const auto [r, s] = dense_grid(spec.dense_count, dh, dw);
      const auto rows = spread(dh, r), cols = spread(dw, s);
      std::vector<CropOffset> out;
      out.reserve(r * s);
      for (std::size_t row : rows) {
        for (std::size_t col : cols) out.push_back({row, col});
      }
      return out;
    }
  }
  return {};
}

Tensor extract_crop(const Tensor& image, CropOffset offset, std::size_t side) {
  require_image(image, "extract_crop");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (offset.row + side > h || offset.col + side > w) {
    throw std::invalid_argument("extract_crop: crop window leaves the image");
  }
  const auto src = image.values();
  std::vector<double> out(ch * side * side);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < side; ++i) {
      const double* row = src.data() + (c * h + offset.row + i) * w + offset.col;
      std::copy(row, row + side, out.begin() + std::ptrdiff_t((c * side + i) * side));
    }
  }
  return Tensor::from({ch, side, side}, std::move(out));
}

std::vector<Tensor> crop(const Tensor& image, const CropSpec& spec, Rng* rng) {
  require_image(image, "crop");
  std::vector<Tensor> out;
  for (const auto& off : crop_offsets(image.dim(1), image.dim(2), spec, rng)) {
    out.push_back(extract_crop(image, off, spec.crop_side));
  }
  return out;
}

Tensor compute_scene_mean(std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("compute_scene_mean: no images");
  const Shape shape = images.front().shape();
  std::vector<double> sum(shape_numel(shape), 0.0);
  for (const auto& img : images) {
    if (img.shape() != shape) {
      throw std::invalid_argument("compute_scene_mean: image shape " + shape_to_string(img.shape()) +
                                  " differs from " + shape_to_string(shape));
    }
    const auto v = img.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const double n = double(images.size());
  for (double& x : sum) x /= n;
  return Tensor::from(shape, std::move(sum));
}

Tensor subtract_mean(const Tensor& crop, const Tensor& mean, CropOffset offset) {
  require_image(crop, "subtract_mean");
  require_image(mean, "subtract_mean");
  const std::size_t ch = crop.dim(0), side = crop.dim(1);
  if (mean.dim(0) != ch || offset.row + side > mean.dim(1) || offset.col + crop.dim(2) > mean.dim(2)) {
    throw std::invalid_argument("subtract_mean: mean image " + shape_to_string(mean.shape()) +
                                " does not cover the crop");
  }
  const std::size_t mh = mean.dim(1), mw = mean.dim(2), cw = crop.dim(2);
  const auto m = mean.values();
  const auto c = crop.values();
  std::vector<double> out(c.size());
  for (std::size_t k = 0; k < ch; ++k) {
    for (std::size_t i = 0; i < side; ++i) {
      for (std::size_t j = 0; j < cw; ++j) {
        out[(k * side + i) * cw + j] =
            c[(k * side + i) * cw + j] - m[(k * mh + offset.row + i) * mw + offset.col + j];
      }
    }
  }
  return Tensor::from(crop.shape(), std::move(out));
}

Tensor augment(const Tensor& image, double blur_sigma, double brightness) {
  require_image(image, "augment");
  if (blur_sigma < 0.0 || brightness < 0.0) {
    throw std::invalid_argument("augment: blur sigma and brightness must be non-negative");
  }
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> buf(image.values().begin(), image.values().end());
  if (blur_sigma > 0.0) {
    const auto radius = std::ptrdiff_t(std::ceil(3.0 * blur_sigma));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
      kernel[std::size_t(k + radius)] = std::exp(-0.5 * double(k * k) / (blur_sigma * blur_sigma));
      total += kernel[std::size_t(k + radius)];
    }
    for (double& k : kernel) k /= total;
    std::vector<double> tmp(buf.size());
    auto clampi = [](std::ptrdiff_t v, std::size_t n) {
      return std::size_t(std::clamp<std::ptrdiff_t>(v, 0, std::ptrdiff_t(n) - 1));
    };
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          double acc = 0.0;
          for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            acc += kernel[std::size_t(k + radius)] *
                   buf[(c * h + i) * w + clampi(std::ptrdiff_t(j) + k, w)];
          }
          tmp[(c * h + i) * w + j] = acc;
        }
      }
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          double acc = 0.0;
          for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            acc += kernel[std::size_t(k + radius)] *
                   tmp[(c * h + clampi(std::ptrdiff_t(i) + k, h)) * w + j];
          }
          buf[(c * h + i) * w + j] = acc;
        }
      }
    }
  }
  for (double& v : buf) v = quantize(v * brightness);
  return Tensor::from(image.shape(), std::move(buf));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  require_image(image, "write_ppm");
  if (image.dim(0) != 3) throw std::invalid_argument("write_ppm: expected 3 channels");
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto v = image.values();
  std::string raster(3 * h * w, '\0');
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      raster[3 * i + c] = char(std::lround(std::clamp(v[c * h * w + i], 0.0, 1.0) * 255.0));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(raster.data(), std::streamsize(raster.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto hdr = read_header(in, "P6", path);
  const std::size_t n = hdr.width * hdr.height;
  std::string raster(3 * n, '\0');
  in.read(raster.data(), std::streamsize(raster.size()));
  if (in.gcount() != std::streamsize(raster.size())) {
    throw FormatError(path.string() + ": truncated raster");
  }
  std::vector<double> v(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      v[c * n + i] = double(static_cast<unsigned char>(raster[3 * i + c])) / 255.0;
    }
  }
  return Tensor::from({3, hdr.height, hdr.width}, std::move(v));
}

void write_pgm_bytes(const std::filesystem::path& path, std::size_t height, std::size_t width,
                     const std::vector<unsigned char>& bytes) {
  if (bytes.size() != height * width) throw std::invalid_argument("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<unsigned char> read_pgm_bytes(const std::filesystem::path& path, std::size_t& height,
                                          std::size_t& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto hdr = read_header(in, "P5", path);
  std::vector<unsigned char> bytes(hdr.width * hdr.height);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size())) {
    throw FormatError(path.string() + ": truncated raster");
  }
  height = hdr.height;
  width = hdr.width;
  return bytes;
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray) {
  if (!gray.defined() || gray.shape().size() != 2) {
    throw std::invalid_argument("write_pgm: expected an [H,W] tensor");
  }
  const auto v = gray.values();
  std::vector<unsigned char> bytes(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  }
  write_pgm_bytes(path, gray.dim(0), gray.dim(1), bytes);
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::size_t h = 0, w = 0;
  const auto bytes = read_pgm_bytes(path, h, w);
  std::vector<double> v(bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(bytes[i]) / 255.0;
  return Tensor::from({h, w}, std::move(v));
}

}  // namespace posereg
