#pragma once

// Pose-labelled frames and their on-disk layout.
//
// A dataset directory holds
//   scene.txt                    scene spec (regenerable from seed and extent)
//   <split>_labels.txt           "frame_id X Y Z W P Q R" per line
//   images/<split>/NNNNN.ppm     8-bit RGB frames
//   masks/<split>/NNNNN.pgm      landmark id + 1 per pixel, 0 for background
// for the splits train, test and interp. The frame_id is the image path
// relative to images/.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posereg/geometry.hpp"
#include "posereg/scene.hpp"
#include "posereg/tensor.hpp"

namespace posereg {

struct PoseSample {
  Tensor image;  // [3,H,W]
  Pose pose;
  std::string frame_id;
  std::vector<std::uint8_t> landmark_mask;  // H*W, 1 where a landmark covers the pixel
  int dominant_landmark = -1;               // id covering most pixels, -1 if none
};

PoseSample render_view(const SceneSpec& scene, const Pose& pose, const std::string& frame_id = "");

struct LabelEntry {
  std::string frame_id;
  Pose pose;
  bool operator==(const LabelEntry&) const = default;
};

struct LabelFile {
  std::vector<LabelEntry> entries;
  std::size_t skipped_lines = 0;  // headers, comments and other non-data lines
};

/// Throws FormatError when no line parses or a number is not finite (the
/// message carries the line number).
LabelFile read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const std::vector<LabelEntry>& entries);

struct DatasetSpec {
  std::uint64_t seed = 1;
  Vec3 extent{10.0, 10.0, 2.0};
  Intrinsics intrinsics;
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  double spacing = 0.5;        // metres between training frames
  double test_spacing = 0.5;
  double interp_offset = 0.5;  // lateral shift of the interpolation path, in units of spacing

  void validate() const;  // throws ConfigError
};

struct Dataset {
  SceneSpec scene;
  std::vector<PoseSample> train;
  std::vector<PoseSample> test;
  std::vector<PoseSample> interp;
};

/// Renders all splits in memory. Train and test follow distinct walks; the
/// interpolation split lies between consecutive training frames.
Dataset generate_dataset(const DatasetSpec& spec);

void write_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Loads one split. Masks are optional on disk; missing masks leave
/// landmark_mask empty and dominant_landmark at -1.
std::vector<PoseSample> load_split(const std::filesystem::path& dir, const std::string& split);
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<LabelEntry> labels_of(const std::vector<PoseSample>& samples);

}  // namespace posereg
