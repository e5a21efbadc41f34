#pragma once

// Quaternions are scalar-first (w, x, y, z). A Pose stores the camera position
// in the scene frame and the camera-to-world rotation.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace posereg {

using Vec3 = std::array<double, 3>;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Quaternion&) const = default;
  Quaternion operator-() const { return {-w, -x, -y, -z}; }
};

double quat_dot(const Quaternion& a, const Quaternion& b);
double quat_norm(const Quaternion& q);
/// Hamilton product a*b.
Quaternion quat_multiply(const Quaternion& a, const Quaternion& b);
Quaternion quat_conjugate(const Quaternion& q);
/// Rotation by `angle_rad` about `axis` (need not be unit).
Quaternion quat_from_axis_angle(const Vec3& axis, double angle_rad);
Vec3 quat_rotate(const Quaternion& q, const Vec3& v);

/// q/|q|. Throws DegenerateError when |q| <= 1e-12.
Quaternion quat_normalize(const Quaternion& q);

/// Picks q or -q so that w > 0, or for w == 0 the first nonzero component is
/// positive. Idempotent.
Quaternion quat_canonicalize(const Quaternion& q);

/// Geodesic rotation angle 2*acos(min(1, |<q1,q2>|)) in degrees, in [0, 180].
double quat_angular_error_deg(const Quaternion& q1, const Quaternion& q2);

double position_error_m(const Vec3& a, const Vec3& b);

class Pose {
 public:
  Pose() = default;
  /// Normalizes and canonicalizes the orientation.
  Pose(const Vec3& position, const Quaternion& orientation);

  const Vec3& position() const { return position_; }
  const Quaternion& orientation() const { return orientation_; }

  /// [x, y, z, w, qx, qy, qz]
  std::array<double, 7> to_vector() const;

  bool operator==(const Pose&) const = default;

 private:
  Vec3 position_{0.0, 0.0, 0.0};
  Quaternion orientation_{};
};

/// Mean position plus sign-aligned componentwise quaternion mean of raw
/// 7-vector network outputs, renormalized and canonicalized. Quaternions are
/// aligned to the hemisphere of the first element. Throws DegenerateError when
/// the list is empty, an element's quaternion has zero norm, or the averaged
/// quaternion norm falls below 1e-9.
Pose average_pose_vectors(std::span<const std::array<double, 7>> poses);

/// "X Y Z W P Q R" with 17 significant digits.
std::string format_pose(const Pose& pose);
/// Parses 7 whitespace-separated reals; throws FormatError otherwise.
Pose parse_pose(const std::string& text);

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rotation matrices are kept out of the public API; the renderer and tests use
// them internally.
Mat3 rotation_matrix(const Quaternion& q);
Quaternion quat_from_rotation_matrix(const Mat3& r);

}  // namespace detail

}  // namespace posereg
