#include <doctest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "posereg/errors.hpp"
#include "posereg/geometry.hpp"
#include "posereg/rng.hpp"

using namespace posereg;

namespace {

Quaternion random_unit(Rng& rng) {
  Quaternion q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  return quat_normalize(q);
}

// Angle from the relative rotation matrix: acos((tr R - 1) / 2).
double trace_angle_deg(const Quaternion& a, const Quaternion& b) {
  const auto ra = detail::rotation_matrix(a);
  const auto rb = detail::rotation_matrix(b);
  double tr = 0.0;  // trace(ra^T rb)
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) tr += ra[k][i] * rb[k][i];
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

bool same(const Quaternion& a, const Quaternion& b, double tol) {
  return std::abs(a.w - b.w) <= tol && std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol &&
         std::abs(a.z - b.z) <= tol;
}

std::array<double, 7> vec7(const Vec3& p, const Quaternion& q) {
  return {p[0], p[1], p[2], q.w, q.x, q.y, q.z};
}

}  // namespace

TEST_CASE("quat_normalize examples") {
  CHECK(quat_normalize({1, 0, 0, 0}) == Quaternion{1, 0, 0, 0});
  CHECK(quat_normalize({2, 0, 0, 0}) == Quaternion{1, 0, 0, 0});
  CHECK(quat_normalize({1, 1, 1, 1}) == Quaternion{0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(quat_normalize({0, 0, 0, 1e-13}), DegenerateError);
}

TEST_CASE("quat_canonicalize examples") {
  CHECK(quat_canonicalize({-1, 0, 0, 0}) == Quaternion{1, 0, 0, 0});
  CHECK(quat_canonicalize({0.5, 0.5, 0.5, 0.5}) == Quaternion{0.5, 0.5, 0.5, 0.5});
  CHECK(quat_canonicalize({0, -1, 0, 0}) == Quaternion{0, 1, 0, 0});
  CHECK(quat_canonicalize({0, 0, -0.6, 0.8}) == Quaternion{0, 0, 0.6, -0.8});
}

TEST_CASE("quat_angular_error_deg examples") {
  const Quaternion q = quat_normalize({0.3, -0.2, 0.9, 0.1});
  CHECK(quat_angular_error_deg(q, q) == 0.0);
  CHECK(quat_angular_error_deg(q, -q) == 0.0);
  const double h = std::numbers::pi / 4.0;
  const Quaternion r{std::cos(h), std::sin(h), 0, 0};
  CHECK(quat_angular_error_deg({1, 0, 0, 0}, r) == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(trace_angle_deg({1, 0, 0, 0}, r) == doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("position_error_m examples") {
  CHECK(position_error_m({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(position_error_m({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(position_error_m({0.1, -2, 7}, {3, 4.5, 0}) == position_error_m({3, 4.5, 0}, {0.1, -2, 7}));
}

TEST_CASE("average_pose_vectors examples") {
  const Quaternion q = quat_normalize({0.7, 0.1, -0.3, 0.2});
  const Pose one = average_pose_vectors(std::vector{vec7({1, 2, 3}, {1.4, 0.2, -0.6, 0.4})});
  CHECK(one.position() == Vec3{1, 2, 3});
  CHECK(same(one.orientation(), q, 1e-15));

  const Pose flipped = average_pose_vectors(std::vector{vec7({1, 2, 3}, q), vec7({1, 2, 3}, -q)});
  CHECK(same(flipped.orientation(), q, 1e-15));
  CHECK(flipped.position() == Vec3{1, 2, 3});

  const Pose mid = average_pose_vectors(std::vector{vec7({0, 0, 0}, q), vec7({2, 0, 0}, q)});
  CHECK(mid.position() == Vec3{1, 0, 0});

  CHECK_THROWS_AS(average_pose_vectors(std::vector<std::array<double, 7>>{}), DegenerateError);
  CHECK_THROWS_AS(average_pose_vectors(std::vector{vec7({0, 0, 0}, {0, 0, 0, 0})}), DegenerateError);
}

TEST_CASE("average_pose_vectors is invariant to sign flips and permutation") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Quaternion base = random_unit(rng);
    std::vector<std::array<double, 7>> poses;
    for (int i = 0; i < 5; ++i) {
      const Quaternion small = quat_from_axis_angle({rng.normal(), rng.normal(), rng.normal()}, 0.2 * rng.uniform());
      poses.push_back(vec7({rng.normal(), rng.normal(), rng.normal()}, quat_multiply(base, small)));
    }
    const Pose ref = average_pose_vectors(poses);
    auto flipped = poses;
    for (auto& p : flipped) {
      if (rng.uniform() < 0.5) {
        for (int k = 3; k < 7; ++k) p[k] = -p[k];
      }
    }
    auto permuted = flipped;
    rng.shuffle(std::span(permuted));
    for (const auto& variant : {flipped, permuted}) {
      const Pose p = average_pose_vectors(variant);
      CHECK(same(p.orientation(), ref.orientation(), 1e-12));
      for (int k = 0; k < 3; ++k) CHECK(p.position()[k] == doctest::Approx(ref.position()[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("quaternion invariants on 10^4 random unit quaternions") {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(99);
  double worst_trace = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Quaternion a = random_unit(rng), b = random_unit(rng);
    const double e = quat_angular_error_deg(a, b);
    REQUIRE(e >= 0.0);
    REQUIRE(e <= 180.0);
    REQUIRE(quat_angular_error_deg(a, -b) == e);
    REQUIRE(quat_angular_error_deg(-a, b) == e);
    REQUIRE(quat_angular_error_deg(b, a) == e);
    REQUIRE(quat_angular_error_deg(quat_canonicalize(a), b) == e);
    REQUIRE(quat_angular_error_deg(a, quat_canonicalize(b)) == e);
    REQUIRE(quat_angular_error_deg(a, a) == 0.0);
    REQUIRE(quat_angular_error_deg(a, -a) == 0.0);
    worst_trace = std::max(worst_trace, std::abs(e - trace_angle_deg(a, b)));

    const Quaternion n = quat_normalize(a);
    REQUIRE(same(quat_normalize(n), n, 1e-12));
    REQUIRE(std::abs(quat_norm(n) - 1.0) < 1e-9);
    const Quaternion c = quat_canonicalize(a);
    REQUIRE(quat_canonicalize(c) == c);
    REQUIRE(c.w >= 0.0);
    REQUIRE((c == a || c == -a));
  }
  CHECK(worst_trace < 1e-6);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 10.0);
}

TEST_CASE("pose constructor normalizes and canonicalizes") {
  const Pose p({1, 2, 3}, {-2, 0, 0, 0});
  CHECK(p.orientation() == Quaternion{1, 0, 0, 0});
  const auto v = p.to_vector();
  CHECK(v == std::array<double, 7>{1, 2, 3, 1, 0, 0, 0});
}

TEST_CASE("pose text round trip") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Pose p({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(0, 2)}, random_unit(rng));
    CHECK(parse_pose(format_pose(p)) == p);
  }
  CHECK_THROWS_AS(parse_pose("1 2 3 1 0 0"), FormatError);
  CHECK_THROWS_AS(parse_pose("1 2 3 1 0 0 x"), FormatError);
}

TEST_CASE("rotation helpers agree") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Quaternion q = random_unit(rng);
    const Quaternion back = detail::quat_from_rotation_matrix(detail::rotation_matrix(q));
    CHECK(quat_angular_error_deg(q, back) < 1e-5);
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const Vec3 r = quat_rotate(q, v);
    const auto m = detail::rotation_matrix(q);
    for (int k = 0; k < 3; ++k) {
      CHECK(r[k] == doctest::Approx(m[k][0] * v[0] + m[k][1] * v[1] + m[k][2] * v[2]).epsilon(1e-12));
    }
  }
}
