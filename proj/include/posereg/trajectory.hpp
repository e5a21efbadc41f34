#pragma once

#include <cstdint>
#include <vector>

#include "posereg/geometry.hpp"
#include "posereg/scene.hpp"

namespace posereg {

struct WalkwaySettings {
  double inner_radius = 0.32;  // fractions of the shorter ground side
  double outer_radius = 0.46;
  double min_height = 0.45;  // fractions of extent z
  double max_height = 0.75;
  double yaw_jitter_deg = 12.0;
  double pitch_jitter_deg = 6.0;
  double roll_jitter_deg = 4.0;
};

/// A walking path on the ring around the landmark field. Consecutive camera
/// positions are spacing * U(0.85, 1.15) apart before the radial clamp, and
/// cameras look toward the field with smoothly varying jitter. Different
/// seeds give different paths.
std::vector<Pose> sample_trajectory(const SceneSpec& scene, double spacing, std::size_t count,
                                    std::uint64_t seed, const WalkwaySettings& walkway = {});

/// Poses halfway between consecutive training poses, shifted sideways by
/// `lateral_offset` metres on the ground plane: a parallel path whose frames
/// fall between the training frames.
std::vector<Pose> interpolation_path(const std::vector<Pose>& train_poses, double lateral_offset);

/// Every `stride`-th pose.
std::vector<Pose> subsample(const std::vector<Pose>& poses, std::size_t stride);

}  // namespace posereg
