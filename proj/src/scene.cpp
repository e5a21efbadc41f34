#include "posereg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "posereg/config_file.hpp"
#include "posereg/errors.hpp"
#include "posereg/rng.hpp"

namespace posereg {

namespace {

using detail::Mat3;

constexpr std::array<double, 3> kHorizon{0.86, 0.88, 0.90};
constexpr std::array<double, 3> kZenith{0.38, 0.56, 0.84};
constexpr std::array<double, 3> kGround{0.42, 0.40, 0.34};

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = int(hh);
  const double f = hh - sector;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

bool inside(const Landmark& l, const Vec3& p) {
  const Vec3 d = sub(p, l.center);
  if (l.kind == PrimitiveKind::Sphere) return dot(d, d) < l.half_size[0] * l.half_size[0];
  return std::abs(d[0]) < l.half_size[0] && std::abs(d[1]) < l.half_size[1] &&
         std::abs(d[2]) < l.half_size[2];
}

// Nearest positive ray parameter and shading factor, or t = +inf on a miss.
struct Hit {
  double t = std::numeric_limits<double>::infinity();
  double shade = 1.0;
};

Hit intersect(const Landmark& l, const Vec3& origin, const Vec3& dir) {
  Hit hit;
  const Vec3 oc = sub(origin, l.center);
  if (l.kind == PrimitiveKind::Sphere) {
    const double r = l.half_size[0];
    const double a = dot(dir, dir), b = dot(oc, dir), c = dot(oc, oc) - r * r;
    const double disc = b * b - a * c;
    if (disc < 0.0) return hit;
    const double t = (-b - std::sqrt(disc)) / a;
    if (t > 0.0) hit.t = t;
    return hit;
  }
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  bool positive_face = false;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dir[k]) < 1e-15) {
      if (std::abs(oc[k]) > l.half_size[k]) return hit;
      continue;
    }
    double t0 = (-l.half_size[k] - oc[k]) / dir[k];
    double t1 = (l.half_size[k] - oc[k]) / dir[k];
    bool entering_positive = false;
    if (t0 > t1) {
      std::swap(t0, t1);
      entering_positive = true;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = k;
      positive_face = entering_positive;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0 || axis < 0) return hit;
  // Flat per-face shade so box faces stay distinguishable.
  static constexpr double kFaceShade[3][2] = {{0.74, 0.94}, {0.64, 0.84}, {0.70, 1.0}};
  hit.t = t_near;
  hit.shade = kFaceShade[axis][positive_face ? 1 : 0];
  return hit;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

SceneSpec generate_scene(std::uint64_t seed, const Vec3& extent, const Intrinsics& intrinsics,
                         std::size_t landmark_count) {
  for (double e : extent) {
    if (!(e > 0.0)) throw std::invalid_argument("scene extent must be positive");
  }
  if (landmark_count < 8) throw std::invalid_argument("a scene needs at least 8 landmarks");
  SceneSpec scene;
  scene.seed = seed;
  scene.extent = extent;
  scene.intrinsics = intrinsics;
  Rng rng(mix_seed(seed, 0x7363656e65ULL));

  const double ground = std::min(extent[0], extent[1]);
  const double unit = ground / 10.0;
  const double field_radius = 0.25 * ground;
  const double cx = extent[0] / 2.0, cy = extent[1] / 2.0;
  const double hue_offset = rng.uniform();

  std::vector<std::array<double, 3>> footprints;  // x, y, radius
  for (std::size_t i = 0; i < landmark_count; ++i) {
    Landmark l;
    l.id = int(i);
    l.kind = rng.uniform() < 0.5 ? PrimitiveKind::Sphere : PrimitiveKind::Box;
    double radius = 0.0;
    if (l.kind == PrimitiveKind::Sphere) {
      radius = std::min(rng.uniform(0.25, 0.45) * unit, 0.45 * extent[2]);
      l.half_size = {radius, radius, radius};
    } else {
      const double hx = rng.uniform(0.18, 0.4) * unit, hy = rng.uniform(0.18, 0.4) * unit;
      const double hz = rng.uniform(0.2, 0.5) * extent[2];
      l.half_size = {hx, hy, hz};
      radius = std::hypot(hx, hy);
    }
    // Rejection-sample a footprint that does not overlap earlier landmarks.
    for (int attempt = 0;; ++attempt) {
      const double r = field_radius * std::sqrt(rng.uniform());
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double x = cx + r * std::cos(a), y = cy + r * std::sin(a);
      bool clear = true;
      for (const auto& f : footprints) {
        if (std::hypot(f[0] - x, f[1] - y) < f[2] + radius + 0.1 * unit) clear = false;
      }
      if (clear || attempt > 500) {
        footprints.push_back({x, y, radius});
        if (l.kind == PrimitiveKind::Sphere) {
          l.center = {x, y, rng.uniform(radius, std::max(radius, extent[2] - radius))};
        } else {
          l.center = {x, y, l.half_size[2]};
        }
        break;
      }
    }
    const double hue = hue_offset + (double(i) + rng.uniform(-0.2, 0.2)) / double(landmark_count);
    l.albedo = hsv_to_rgb(hue, rng.uniform(0.6, 0.95), rng.uniform(0.45, 0.95));
    scene.landmarks.push_back(l);
  }
  return scene;
}

RenderedView render(const SceneSpec& scene, const Pose& pose) {
  const auto& in = scene.intrinsics;
  const Vec3 origin = pose.position();
  for (const auto& l : scene.landmarks) {
    if (inside(l, origin)) {
      throw DegenerateError("camera position lies inside landmark " + std::to_string(l.id));
    }
  }
  const Mat3 r = detail::rotation_matrix(pose.orientation());
  RenderedView view;
  const std::size_t h = in.height, w = in.width, plane = h * w;
  std::vector<double> pixels(3 * plane);
  view.landmark_ids.assign(plane, -1);
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      const Vec3 cam{(double(i) + 0.5 - in.cx) / in.focal, (double(j) + 0.5 - in.cy) / in.focal,
                     1.0};
      const Vec3 dir{r[0][0] * cam[0] + r[0][1] * cam[1] + r[0][2] * cam[2],
                     r[1][0] * cam[0] + r[1][1] * cam[1] + r[1][2] * cam[2],
                     r[2][0] * cam[0] + r[2][1] * cam[1] + r[2][2] * cam[2]};
      Hit best;
      int best_id = -1;
      const Landmark* best_l = nullptr;
      for (const auto& l : scene.landmarks) {
        const Hit hit = intersect(l, origin, dir);
        if (hit.t < best.t) {
          best = hit;
          best_id = l.id;
          best_l = &l;
        }
      }
      std::array<double, 3> color{};
      if (best_l) {
        for (int c = 0; c < 3; ++c) color[c] = best_l->albedo[c] * best.shade;
      } else {
        const Vec3 unit_dir = normalized(dir);
        if (unit_dir[2] >= 0.0) {
          const double e = std::sqrt(unit_dir[2]);
          for (int c = 0; c < 3; ++c) color[c] = kHorizon[c] * (1 - e) + kZenith[c] * e;
        } else {
          const double dist = origin[2] / -unit_dir[2];
          const double haze = 1.0 - std::exp(-dist / 12.0);
          for (int c = 0; c < 3; ++c) color[c] = kGround[c] * (1 - haze) + kHorizon[c] * haze;
        }
      }
      view.landmark_ids[j * w + i] = best_id;
      for (int c = 0; c < 3; ++c) pixels[c * plane + j * w + i] = quantize(color[c]);
    }
  }
  view.image = Tensor::from({3, h, w}, std::move(pixels));
  return view;
}

std::optional<std::array<double, 2>> project_point(const Intrinsics& intrinsics, const Pose& pose,
                                                   const Vec3& world) {
  // camera coordinates = R^T (world - position)
  const Mat3 r = detail::rotation_matrix(pose.orientation());
  const Vec3 d = sub(world, pose.position());
  const Vec3 cam{r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
                 r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
                 r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2]};
  if (cam[2] <= 0.0) return std::nullopt;
  return std::array<double, 2>{intrinsics.focal * cam[0] / cam[2] + intrinsics.cx,
                               intrinsics.focal * cam[1] / cam[2] + intrinsics.cy};
}

int dominant_landmark(const std::vector<int>& landmark_ids) {
  std::map<int, std::size_t> counts;
  for (int id : landmark_ids) {
    if (id >= 0) ++counts[id];
  }
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [id, n] : counts) {
    if (n > best_count) {
      best = id;
      best_count = n;
    }
  }
  return best;
}

Pose look_at(const Vec3& position, const Vec3& target, double roll) {
  const Vec3 forward = normalized(sub(target, position));
  Vec3 up{0.0, 0.0, 1.0};
  if (std::abs(dot(forward, up)) > 0.999) up = {0.0, 1.0, 0.0};
  const Vec3 right = normalized(cross(forward, up));
  const Vec3 down = cross(forward, right);
  const Mat3 r{{{right[0], down[0], forward[0]},
                {right[1], down[1], forward[1]},
                {right[2], down[2], forward[2]}}};
  Quaternion q = detail::quat_from_rotation_matrix(r);
  if (roll != 0.0) q = quat_multiply(q, quat_from_axis_angle({0.0, 0.0, 1.0}, roll));
  return Pose(position, q);
}

std::string format_scene(const SceneSpec& scene) {
  std::ostringstream out;
  const auto& in = scene.intrinsics;
  out << "# posereg scene: settings, then one landmark per row\n";
  out << "seed = " << scene.seed << "\n";
  out << "extent = " << format_double(scene.extent[0]) << " " << format_double(scene.extent[1])
      << " " << format_double(scene.extent[2]) << "\n";
  out << "focal = " << format_double(in.focal) << "\n";
  out << "principal_point = " << format_double(in.cx) << " " << format_double(in.cy) << "\n";
  out << "resolution = " << in.width << " " << in.height << "\n";
  out << "landmarks = " << scene.landmarks.size() << "\n";
  out << "# id kind center_x center_y center_z half_x half_y half_z red green blue\n";
  for (const auto& l : scene.landmarks) {
    out << l.id << " " << (l.kind == PrimitiveKind::Sphere ? "sphere" : "box");
    for (double v : l.center) out << " " << format_double(v);
    for (double v : l.half_size) out << " " << format_double(v);
    for (double v : l.albedo) out << " " << format_double(v);
    out << "\n";
  }
  return out.str();
}

SceneSpec parse_scene(const std::string& text) {
  std::istringstream in(text);
  std::string line, settings;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.find('=') != std::string::npos) {
      settings += line + "\n";
    } else {
      rows.push_back(line);
    }
  }
  const auto kv = KeyValues::parse(settings, "scene");
  SceneSpec scene;
  scene.seed = std::uint64_t(std::stoull(kv.get("seed")));
  const auto extent = kv.get_doubles("extent");
  const auto pp = kv.get_doubles("principal_point");
  const auto res = kv.get_doubles("resolution");
  if (extent.size() != 3 || pp.size() != 2 || res.size() != 2) {
    throw FormatError("scene settings have the wrong number of values");
  }
  scene.extent = {extent[0], extent[1], extent[2]};
  scene.intrinsics.focal = kv.get_double("focal");
  scene.intrinsics.cx = pp[0];
  scene.intrinsics.cy = pp[1];
  scene.intrinsics.width = std::size_t(res[0]);
  scene.intrinsics.height = std::size_t(res[1]);
  for (const auto& row : rows) {
    std::istringstream r(row);
    Landmark l;
    std::string kind;
    if (!(r >> l.id >> kind)) throw FormatError("bad landmark row '" + row + "'");
    if (kind == "sphere") {
      l.kind = PrimitiveKind::Sphere;
    } else if (kind == "box") {
      l.kind = PrimitiveKind::Box;
    } else {
      throw FormatError("unknown landmark kind '" + kind + "'");
    }
    for (auto* arr : {&l.center, &l.half_size}) {
      for (auto& v : *arr) {
        if (!(r >> v)) throw FormatError("bad landmark row '" + row + "'");
      }
    }
    for (auto& v : l.albedo) {
      if (!(r >> v)) throw FormatError("bad landmark row '" + row + "'");
    }
    scene.landmarks.push_back(l);
  }
  if (scene.landmarks.size() != std::size_t(kv.get_int("landmarks"))) {
    throw FormatError("scene declares " + kv.get("landmarks") + " landmarks but lists " +
                      std::to_string(scene.landmarks.size()));
  }
  return scene;
}

void write_scene(const std::filesystem::path& path, const SceneSpec& scene) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_scene(scene);
}

SceneSpec read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scene file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

}  // namespace posereg
