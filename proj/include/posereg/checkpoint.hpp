#pragma once

// Binary checkpoint container. All integers and floats are little-endian.
//
//   offset  size  field
//   0       8     magic "PRCKPT01"
//   8       4     u32 format version (currently 1)
//   12      4     u32 digest length L
//   16      L     model config digest, ASCII hex
//   16+L    8     u64 epochs completed
//   24+L    4     u32 parameter record count
//   then per record:
//           4     u32 name length N
//           N     name, ASCII
//           4     u32 rank R
//           8*R   u64 extents
//           8*E   f64 values       (E = product of extents)
//           8*E   f64 velocity     (optimizer momentum buffer)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posereg/tensor.hpp"

namespace posereg {

inline constexpr char kCheckpointMagic[9] = "PRCKPT01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParameterRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
  std::vector<double> velocity;

  bool operator==(const ParameterRecord&) const = default;
};

struct Checkpoint {
  std::string config_digest;
  std::uint64_t epochs_completed = 0;
  std::vector<ParameterRecord> params;

  bool operator==(const Checkpoint&) const = default;

  /// Bytes of the f64 value payload only (no velocity, no headers).
  std::uint64_t parameter_bytes() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Little-endian f64 tensor file used for the per-scene mean image:
/// magic "PRMEAN01", u32 rank, u64 extents, f64 values.
void write_mean_image(const std::filesystem::path& path, const Tensor& mean);
Tensor read_mean_image(const std::filesystem::path& path);

}  // namespace posereg
