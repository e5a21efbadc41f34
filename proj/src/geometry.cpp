#include "posereg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "posereg/errors.hpp"

namespace posereg {

double quat_dot(const Quaternion& a, const Quaternion& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

double quat_norm(const Quaternion& q) { return std::sqrt(quat_dot(q, q)); }

Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quaternion quat_conjugate(const Quaternion& q) { return {q.w, -q.x, -q.y, -q.z}; }

Quaternion quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (n <= 1e-12) throw DegenerateError("rotation axis has zero length");
  const double s = std::sin(angle_rad / 2.0) / n;
  return {std::cos(angle_rad / 2.0), axis[0] * s, axis[1] * s, axis[2] * s};
}

Vec3 quat_rotate(const Quaternion& q, const Vec3& v) {
  const auto r = detail::rotation_matrix(q);
  return {r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
          r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
          r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2]};
}

Quaternion quat_normalize(const Quaternion& q) {
  const double n = quat_norm(q);
  if (!(n > 1e-12)) throw DegenerateError("cannot normalize quaternion with norm " + std::to_string(n));
  // Within a few ulps of unit: leave the bits alone so normalization is
  // idempotent and parsed poses round-trip exactly.
  if (std::abs(n - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) return q;
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Quaternion quat_canonicalize(const Quaternion& q) {
  for (double c : {q.w, q.x, q.y, q.z}) {
    if (c > 0.0) return q;
    if (c < 0.0) return -q;
  }
  return q;
}

double quat_angular_error_deg(const Quaternion& q1, const Quaternion& q2) {
  // Same angle as 2*acos(min(1, |<q1,q2>|)) for unit inputs, written in the
  // half-angle form: acos loses about half the digits near zero.
  const double s = quat_dot(q1, q2) < 0.0 ? -1.0 : 1.0;
  double diff = 0.0, sum = 0.0;
  const double a[4] = {q1.w, q1.x, q1.y, q1.z}, b[4] = {q2.w, q2.x, q2.y, q2.z};
  for (int i = 0; i < 4; ++i) {
    diff += (a[i] - s * b[i]) * (a[i] - s * b[i]);
    sum += (a[i] + s * b[i]) * (a[i] + s * b[i]);
  }
  return 4.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
}

double position_error_m(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Pose::Pose(const Vec3& position, const Quaternion& orientation)
    : position_(position), orientation_(quat_canonicalize(quat_normalize(orientation))) {}

std::array<double, 7> Pose::to_vector() const {
  return {position_[0],    position_[1],    position_[2],   orientation_.w,
          orientation_.x, orientation_.y, orientation_.z};
}

Pose average_pose_vectors(std::span<const std::array<double, 7>> poses) {
  if (poses.empty()) throw DegenerateError("cannot average an empty list of poses");
  Vec3 position{0.0, 0.0, 0.0};
  Quaternion sum{0.0, 0.0, 0.0, 0.0};
  Quaternion reference{};
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    for (int d = 0; d < 3; ++d) position[d] += p[d];
    Quaternion q = quat_normalize({p[3], p[4], p[5], p[6]});
    if (i == 0) reference = q;
    if (quat_dot(q, reference) < 0.0) q = -q;
    sum.w += q.w;
    sum.x += q.x;
    sum.y += q.y;
    sum.z += q.z;
  }
  const double n = double(poses.size());
  for (auto& c : position) c /= n;
  const Quaternion mean{sum.w / n, sum.x / n, sum.y / n, sum.z / n};
  if (quat_norm(mean) < 1e-9) throw DegenerateError("averaged quaternion collapsed to zero");
  return Pose(position, mean);
}

std::string format_pose(const Pose& pose) {
  std::string out;
  char buf[40];
  for (double v : pose.to_vector()) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!out.empty()) out += ' ';
    out += buf;
  }
  return out;
}

Pose parse_pose(const std::string& text) {
  std::istringstream in(text);
  std::array<double, 7> v{};
  for (auto& c : v) {
    if (!(in >> c)) throw FormatError("expected 7 numbers in pose '" + text + "'");
    if (!std::isfinite(c)) throw FormatError("non-finite value in pose '" + text + "'");
  }
  std::string rest;
  if (in >> rest) throw FormatError("trailing field in pose '" + text + "'");
  return Pose({v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]});
}

namespace detail {

Mat3 rotation_matrix(const Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Quaternion quat_from_rotation_matrix(const Mat3& r) {
  // Shepperd: branch on the largest diagonal combination for stability.
  const double trace = r[0][0] + r[1][1] + r[2][2];
  Quaternion q;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s};
  } else if (r[0][0] > r[1][1] && r[0][0] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]);
    q = {(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s};
  } else if (r[1][1] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]);
    q = {(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]);
    q = {(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s};
  }
  return quat_canonicalize(quat_normalize(q));
}

}  // namespace detail

}  // namespace posereg
