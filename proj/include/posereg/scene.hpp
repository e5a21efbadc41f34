#pragma once

// Procedural scenes and a ray-cast pinhole renderer that stand in for
// structure-from-motion ground truth. World frame: x, y span the ground, z is
// up, the ground plane is z = 0. Camera frame: x right, y down, z forward.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posereg/geometry.hpp"
#include "posereg/tensor.hpp"

namespace posereg {

enum class PrimitiveKind { Sphere, Box };

struct Landmark {
  int id = 0;
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center{};
  Vec3 half_size{};  // spheres use half_size[0] as radius
  std::array<double, 3> albedo{};

  bool operator==(const Landmark&) const = default;
};

struct Intrinsics {
  double focal = 48.0;  // pixels
  double cx = 32.0;
  double cy = 32.0;
  std::size_t width = 64;
  std::size_t height = 64;

  bool operator==(const Intrinsics&) const = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Vec3 extent{10.0, 10.0, 2.0};
  std::vector<Landmark> landmarks;
  Intrinsics intrinsics;

  bool operator==(const SceneSpec&) const = default;
};

/// Landmarks are clustered around the centre of the ground area so cameras on
/// the surrounding walkway see them. Deterministic in (seed, extent).
SceneSpec generate_scene(std::uint64_t seed, const Vec3& extent, const Intrinsics& intrinsics = {},
                         std::size_t landmark_count = 12);

struct RenderedView {
  Tensor image;                   // [3,H,W], values k/255
  std::vector<int> landmark_ids;  // H*W, -1 for background
};

/// Ray-casts every pixel (nearest hit wins) onto a sky/ground backdrop.
/// Throws DegenerateError if the camera sits inside a landmark.
RenderedView render(const SceneSpec& scene, const Pose& pose);

/// Pixel coordinates (u, v) of a world point, where pixel (i, j) covers
/// [i, i+1) x [j, j+1). Empty when the point is behind the camera.
std::optional<std::array<double, 2>> project_point(const Intrinsics& intrinsics, const Pose& pose,
                                                   const Vec3& world);

/// Landmark id covering the most pixels, or -1 when none is visible.
int dominant_landmark(const std::vector<int>& landmark_ids);

/// Camera pose at `position` looking at `target` with the given roll (rad).
Pose look_at(const Vec3& position, const Vec3& target, double roll = 0.0);

std::string format_scene(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);
void write_scene(const std::filesystem::path& path, const SceneSpec& scene);
SceneSpec read_scene(const std::filesystem::path& path);

}  // namespace posereg
