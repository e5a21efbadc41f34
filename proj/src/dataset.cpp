#include "posereg/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "posereg/errors.hpp"
#include "posereg/image.hpp"
#include "posereg/rng.hpp"
#include "posereg/trajectory.hpp"

namespace posereg {

namespace {

constexpr const char* kSplits[] = {"train", "test", "interp"};

std::string frame_name(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return split + "/" + buf;
}

std::vector<PoseSample> render_split(const SceneSpec& scene, const std::vector<Pose>& poses,
                                     const std::string& split) {
  std::vector<PoseSample> out(poses.size());
  // Frames are independent; each writes only its own slot.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(poses.size()); ++i) {
    out[std::size_t(i)] = render_view(scene, poses[std::size_t(i)], frame_name(split, std::size_t(i)) + ".ppm");
  }
  return out;
}

// Moves a pose off any landmark it falls inside by nudging it outward.
Pose clear_of_landmarks(const SceneSpec& scene, const Pose& pose) {
  Vec3 p = pose.position();
  for (int attempt = 0; attempt < 50; ++attempt) {
    bool hit = false;
    for (const auto& l : scene.landmarks) {
      const double r = std::max({l.half_size[0], l.half_size[1], l.half_size[2]});
      const double dx = p[0] - l.center[0], dy = p[1] - l.center[1], dz = p[2] - l.center[2];
      if (dx * dx + dy * dy + dz * dz < 1.5 * r * 1.5 * r) {
        hit = true;
        p[2] += 0.5 * r;
      }
    }
    if (!hit) break;
  }
  return Pose(p, pose.orientation());
}

}  // namespace

PoseSample render_view(const SceneSpec& scene, const Pose& pose, const std::string& frame_id) {
  RenderedView view = render(scene, pose);
  PoseSample s;
  s.image = view.image;
  s.pose = pose;
  s.frame_id = frame_id;
  s.landmark_mask.resize(view.landmark_ids.size());
  for (std::size_t i = 0; i < view.landmark_ids.size(); ++i) {
    s.landmark_mask[i] = view.landmark_ids[i] >= 0 ? 1 : 0;
  }
  s.dominant_landmark = dominant_landmark(view.landmark_ids);
  return s;
}

LabelFile read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file " + path.string());
  LabelFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.size() != 8 || tokens[0].front() == '#') {
      ++out.skipped_lines;
      continue;
    }
    std::array<double, 7> v{};
    bool numeric = true;
    for (std::size_t k = 0; k < 7 && numeric; ++k) {
      const char* begin = tokens[k + 1].c_str();
      char* end = nullptr;
      v[k] = std::strtod(begin, &end);
      numeric = end != begin && *end == '\0';
    }
    if (!numeric) {
      ++out.skipped_lines;
      continue;
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      }
    }
    try {
      out.entries.push_back({tokens[0], Pose({v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]})});
    } catch (const DegenerateError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.entries.empty()) {
    throw FormatError(path.string() + ": no parseable label lines");
  }
  return out;
}

void write_label_file(const std::filesystem::path& path, const std::vector<LabelEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write label file " + path.string());
  out << "# frame_id X Y Z W P Q R (position in metres, camera-to-world quaternion)\n";
  for (const auto& e : entries) out << e.frame_id << ' ' << format_pose(e.pose) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void DatasetSpec::validate() const {
  for (double e : extent) {
    if (!(e > 0.0)) throw ConfigError("extent components must be positive");
  }
  if (!(spacing > 0.0)) throw ConfigError("spacing must be positive");
  if (!(test_spacing > 0.0)) throw ConfigError("test_spacing must be positive");
  if (train_count < 2) throw ConfigError("train_count must be at least 2");
  if (test_count < 1) throw ConfigError("test_count must be at least 1");
  if (interp_offset < 0.0) throw ConfigError("interp_offset must be non-negative");
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.scene = generate_scene(spec.seed, spec.extent, spec.intrinsics);
  auto clear = [&](std::vector<Pose> poses) {
    for (auto& p : poses) p = clear_of_landmarks(data.scene, p);
    return poses;
  };
  const auto train = clear(sample_trajectory(data.scene, spec.spacing, spec.train_count,
                                             mix_seed(spec.seed, 1)));
  const auto test = clear(sample_trajectory(data.scene, spec.test_spacing, spec.test_count,
                                            mix_seed(spec.seed, 2)));
  auto interp = clear(interpolation_path(train, spec.interp_offset * spec.spacing));
  if (interp.size() > spec.test_count) {
    // Evenly spread subset so the split stays comparable in size to test.
    std::vector<Pose> picked;
    for (std::size_t k = 0; k < spec.test_count; ++k) {
      picked.push_back(interp[k * interp.size() / spec.test_count]);
    }
    interp = std::move(picked);
  }
  data.train = render_split(data.scene, train, "train");
  data.test = render_split(data.scene, test, "test");
  data.interp = render_split(data.scene, interp, "interp");
  return data;
}

std::vector<LabelEntry> labels_of(const std::vector<PoseSample>& samples) {
  std::vector<LabelEntry> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.frame_id, s.pose});
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_scene(dir / "scene.txt", data.scene);
  const std::vector<PoseSample>* splits[] = {&data.train, &data.test, &data.interp};
  for (int k = 0; k < 3; ++k) {
    const std::string split = kSplits[k];
    fs::create_directories(dir / "images" / split);
    fs::create_directories(dir / "masks" / split);
    for (const auto& s : *splits[k]) {
      write_ppm(dir / "images" / s.frame_id, s.image);
      const std::size_t h = s.image.dim(1), w = s.image.dim(2);
      // The mask file stores landmark coverage; the dominant id rides along
      // as the pixel value so it survives the round trip.
      std::vector<unsigned char> bytes(h * w);
      for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = s.landmark_mask[i] ? static_cast<unsigned char>(1 + std::max(0, s.dominant_landmark)) : 0;
      }
      auto mask_path = dir / "masks" / s.frame_id;
      mask_path.replace_extension(".pgm");
      write_pgm_bytes(mask_path, h, w, bytes);
    }
    write_label_file(dir / (split + "_labels.txt"), labels_of(*splits[k]));
  }
}

std::vector<PoseSample> load_split(const std::filesystem::path& dir, const std::string& split) {
  const auto label_path = dir / (split + "_labels.txt");
  if (!std::filesystem::exists(label_path)) {
    throw std::runtime_error("missing label file " + label_path.string());
  }
  const auto labels = read_label_file(label_path);
  std::vector<PoseSample> out(labels.entries.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    s.frame_id = labels.entries[i].frame_id;
    s.pose = labels.entries[i].pose;
    s.image = read_ppm(dir / "images" / s.frame_id);
    auto mask_path = dir / "masks" / s.frame_id;
    mask_path.replace_extension(".pgm");
    if (std::filesystem::exists(mask_path)) {
      std::size_t h = 0, w = 0;
      const auto bytes = read_pgm_bytes(mask_path, h, w);
      if (h != s.image.dim(1) || w != s.image.dim(2)) {
        throw FormatError(mask_path.string() + ": mask shape differs from the image");
      }
      s.landmark_mask.resize(bytes.size());
      int dominant = -1;
      for (std::size_t k = 0; k < bytes.size(); ++k) {
        s.landmark_mask[k] = bytes[k] ? 1 : 0;
        if (bytes[k]) dominant = int(bytes[k]) - 1;
      }
      s.dominant_landmark = dominant;
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("dataset directory not found: " + dir.string());
  }
  Dataset data;
  data.scene = read_scene(dir / "scene.txt");
  data.train = load_split(dir, "train");
  data.test = load_split(dir, "test");
  if (std::filesystem::exists(dir / "interp_labels.txt")) data.interp = load_split(dir, "interp");
  return data;
}

}  // namespace posereg
