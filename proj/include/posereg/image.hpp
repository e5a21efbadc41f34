#pragma once

// Image preprocessing: shortest-side rescale, random/center/dense crops,
// per-scene mean images and 8-bit PPM/PGM files. Images are [3,H,W] tensors
// with values in [0,1].

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posereg/rng.hpp"
#include "posereg/tensor.hpp"

namespace posereg {

/// Bilinear resize (half-pixel centres, edge clamped) so that the shorter side
/// equals `target`; the other side is rounded to nearest.
Tensor rescale_shortest_side(const Tensor& image, std::size_t target);

enum class CropMode { Random, Center, Dense };

std::string to_string(CropMode mode);
CropMode parse_crop_mode(const std::string& text);

struct CropSpec {
  std::size_t rescale_side = 256;
  std::size_t crop_side = 224;
  CropMode mode = CropMode::Random;
  std::size_t dense_count = 128;

  void validate() const;  // throws ConfigError
};

struct CropOffset {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CropOffset&) const = default;
};

/// Rows x columns of the dense grid: rows * cols == count with rows/cols
/// closest (in log ratio) to range_h/range_w; ties take the smaller row count.
std::pair<std::size_t, std::size_t> dense_grid(std::size_t count, std::size_t range_h,
                                               std::size_t range_w);

/// Crop offsets for an H x W image. Random mode draws from `rng`, which must
/// then be non-null. Throws std::invalid_argument when the crop does not fit.
std::vector<CropOffset> crop_offsets(std::size_t height, std::size_t width, const CropSpec& spec,
                                     Rng* rng = nullptr);

Tensor extract_crop(const Tensor& image, CropOffset offset, std::size_t side);

std::vector<Tensor> crop(const Tensor& image, const CropSpec& spec, Rng* rng = nullptr);

/// Elementwise mean. Throws std::invalid_argument on an empty list or on
/// mismatched shapes.
Tensor compute_scene_mean(std::span<const Tensor> images);

/// crop - mean[:, row:row+c, col:col+c]
Tensor subtract_mean(const Tensor& crop, const Tensor& mean, CropOffset offset);

/// Gaussian blur (sigma in pixels, 0 disables) then brightness scale, clamped
/// to [0,1] and requantized to k/255. A robustness knob only.
Tensor augment(const Tensor& image, double blur_sigma, double brightness);

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

/// 8-bit graymap of an [H,W] tensor with values in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& gray);
Tensor read_pgm(const std::filesystem::path& path);

/// Raw 8-bit graymap I/O for label maps.
void write_pgm_bytes(const std::filesystem::path& path, std::size_t height, std::size_t width,
                     const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_pgm_bytes(const std::filesystem::path& path, std::size_t& height,
                                          std::size_t& width);

}  // namespace posereg
