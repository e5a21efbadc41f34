#include "posereg/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "posereg/rng.hpp"

namespace posereg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Bounded first-order autoregressive jitter, in units of `amplitude`.
class Jitter {
 public:
  Jitter(double amplitude, Rng& rng) : amplitude_(amplitude), rng_(rng) {
    value_ = rng_.uniform(-0.5, 0.5) * amplitude_;
  }
  double next() {
    value_ = 0.8 * value_ + 0.35 * amplitude_ * rng_.uniform(-1.0, 1.0);
    value_ = std::clamp(value_, -amplitude_, amplitude_);
    return value_;
  }

 private:
  double amplitude_;
  Rng& rng_;
  double value_;
};

}  // namespace

std::vector<Pose> sample_trajectory(const SceneSpec& scene, double spacing, std::size_t count,
                                    std::uint64_t seed, const WalkwaySettings& walkway) {
  if (!(spacing > 0.0)) throw std::invalid_argument("trajectory spacing must be positive");
  Rng rng(mix_seed(seed, scene.seed, 0x7472616aULL));
  const double ground = std::min(scene.extent[0], scene.extent[1]);
  const double cx = scene.extent[0] / 2.0, cy = scene.extent[1] / 2.0;
  const double r_in = walkway.inner_radius * ground, r_out = walkway.outer_radius * ground;
  const double h_lo = walkway.min_height * scene.extent[2];
  const double h_hi = walkway.max_height * scene.extent[2];
  const Vec3 focus{cx, cy, 0.4 * scene.extent[2]};

  double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double radius = rng.uniform(r_in, r_out);
  double height = rng.uniform(h_lo, h_hi);
  const double heading = rng.uniform() < 0.5 ? 1.0 : -1.0;
  double radial_drift = 0.0, vertical_drift = 0.0;
  Jitter yaw(walkway.yaw_jitter_deg * kDegToRad, rng);
  Jitter pitch(walkway.pitch_jitter_deg * kDegToRad, rng);
  Jitter roll(walkway.roll_jitter_deg * kDegToRad, rng);

  std::vector<Pose> poses;
  poses.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Vec3 position{cx + radius * std::cos(theta), cy + radius * std::sin(theta), height};
    const Pose base = look_at(position, focus);
    // Jitter in the camera frame: yaw about the down axis, pitch about the
    // right axis, roll about the optical axis.
    Quaternion q = base.orientation();
    q = quat_multiply(q, quat_from_axis_angle({0.0, 1.0, 0.0}, yaw.next()));
    q = quat_multiply(q, quat_from_axis_angle({1.0, 0.0, 0.0}, pitch.next()));
    q = quat_multiply(q, quat_from_axis_angle({0.0, 0.0, 1.0}, roll.next()));
    poses.emplace_back(position, q);

    const double step = spacing * rng.uniform(0.85, 1.15);
    radial_drift = 0.7 * radial_drift + 0.3 * rng.uniform(-0.5, 0.5);
    vertical_drift = 0.7 * vertical_drift + 0.3 * rng.uniform(-0.3, 0.3);
    const Vec3 tangent{-std::sin(theta) * heading, std::cos(theta) * heading, 0.0};
    const Vec3 outward{std::cos(theta), std::sin(theta), 0.0};
    Vec3 dir{tangent[0] + radial_drift * outward[0], tangent[1] + radial_drift * outward[1],
             vertical_drift};
    const double n = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    const double nx = position[0] + step * dir[0] / n - cx;
    const double ny = position[1] + step * dir[1] / n - cy;
    theta = std::atan2(ny, nx);
    radius = std::clamp(std::hypot(nx, ny), r_in, r_out);
    height = std::clamp(height + step * dir[2] / n, h_lo, h_hi);
  }
  return poses;
}

std::vector<Pose> interpolation_path(const std::vector<Pose>& train_poses, double lateral_offset) {
  std::vector<Pose> out;
  for (std::size_t k = 0; k + 1 < train_poses.size(); ++k) {
    const auto& a = train_poses[k];
    const auto& b = train_poses[k + 1];
    const std::array<std::array<double, 7>, 2> pair{a.to_vector(), b.to_vector()};
    const Pose mid = average_pose_vectors(pair);
    const double dx = b.position()[0] - a.position()[0];
    const double dy = b.position()[1] - a.position()[1];
    const double len = std::hypot(dx, dy);
    Vec3 p = mid.position();
    if (len > 0.0) {
      p[0] += -dy / len * lateral_offset;
      p[1] += dx / len * lateral_offset;
    }
    out.emplace_back(p, mid.orientation());
  }
  return out;
}

std::vector<Pose> subsample(const std::vector<Pose>& poses, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("subsample stride must be positive");
  std::vector<Pose> out;
  for (std::size_t i = 0; i < poses.size(); i += stride) out.push_back(poses[i]);
  return out;
}

}  // namespace posereg
