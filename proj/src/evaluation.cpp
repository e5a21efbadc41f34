#include "posereg/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "posereg/errors.hpp"
#include "posereg/ops.hpp"

namespace posereg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Final-head output as a 7-vector; missing parts are filled with the origin
// and the identity rotation.
std::array<double, 7> as_pose_vector(const Tensor& raw, HeadMode mode) {
  const auto v = raw.values();
  switch (mode) {
    case HeadMode::Joint:
      return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
    case HeadMode::PositionOnly:
      return {v[0], v[1], v[2], 1.0, 0.0, 0.0, 0.0};
    case HeadMode::OrientationOnly:
      return {0.0, 0.0, 0.0, v[0], v[1], v[2], v[3]};
  }
  return {};
}

// Prediction averaged over the crops of one frame. Returns the number of
// forwards through `forwards`.
Pose predict_frame(const Model& model, const Tensor& mean, const Tensor& image, const CropSpec& crop,
                   std::size_t& forwards) {
  NoGradGuard no_grad;
  const Tensor rescaled = rescale_shortest_side(image, crop.rescale_side);
  const auto offsets = crop_offsets(rescaled.dim(1), rescaled.dim(2), crop);
  std::vector<std::array<double, 7>> preds;
  preds.reserve(offsets.size());
  for (const auto& off : offsets) {
    const Tensor input = subtract_mean(extract_crop(rescaled, off, crop.crop_side), mean, off);
    preds.push_back(as_pose_vector(model.forward(input, false).back().raw, model.config().head_mode));
  }
  forwards = offsets.size();
  return average_pose_vectors(preds);
}

FrameRecord compare(const std::string& id, const Pose& predicted, const Pose& truth) {
  return {id, position_error_m(predicted.position(), truth.position()),
          quat_angular_error_deg(predicted.orientation(), truth.orientation())};
}

CropSpec center_of(const CropSpec& crop) {
  CropSpec c = crop;
  c.mode = CropMode::Center;
  return c;
}

std::vector<double> center_feature(const Model& model, const Tensor& mean, const Tensor& image,
                                   const CropSpec& crop) {
  NoGradGuard no_grad;
  const Tensor input =
      center_input(rescale_shortest_side(image, crop.rescale_side), mean, crop.crop_side);
  const auto f = model.features(input).values();
  return {f.begin(), f.end()};
}

std::string csv_bool(bool b) { return b ? "true" : "false"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> cumulative_histogram(std::vector<double> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    out.emplace_back(errors[i], double(i + 1) / double(errors.size()));
  }
  return out;
}

ExperimentReport assemble_report(std::vector<FrameRecord> frames, bool has_position,
                                 bool has_orientation) {
  if (frames.empty()) throw std::invalid_argument("report needs at least one frame");
  std::sort(frames.begin(), frames.end(),
            [](const FrameRecord& a, const FrameRecord& b) { return a.frame_id < b.frame_id; });
  ExperimentReport r;
  r.has_position = has_position;
  r.has_orientation = has_orientation;
  std::vector<double> pos, ori;
  for (auto& f : frames) {
    if (!has_position) f.position_error_m = 0.0;
    if (!has_orientation) f.orientation_error_deg = 0.0;
    pos.push_back(f.position_error_m);
    ori.push_back(f.orientation_error_deg);
  }
  r.frames = std::move(frames);
  for (int p : kReportPercentiles) {
    if (has_position) r.position_percentiles.emplace_back(p, percentile(pos, p));
    if (has_orientation) r.orientation_percentiles.emplace_back(p, percentile(ori, p));
  }
  if (has_position) r.median_position_m = median(pos);
  if (has_orientation) r.median_orientation_deg = median(ori);
  return r;
}

std::string format_summary(const ExperimentReport& r) {
  std::ostringstream out;
  out << "key,value\n";
  out << "frames," << r.frames.size() << '\n';
  out << "has_position," << csv_bool(r.has_position) << '\n';
  out << "has_orientation," << csv_bool(r.has_orientation) << '\n';
  if (r.has_position) out << "median_position_m," << format_double(r.median_position_m) << '\n';
  if (r.has_orientation) {
    out << "median_orientation_deg," << format_double(r.median_orientation_deg) << '\n';
  }
  for (const auto& [p, v] : r.position_percentiles) {
    out << "position_p" << p << ',' << format_double(v) << '\n';
  }
  for (const auto& [p, v] : r.orientation_percentiles) {
    out << "orientation_p" << p << ',' << format_double(v) << '\n';
  }
  out << "model_bytes," << r.model_bytes << '\n';
  out << "forwards_per_frame," << r.forwards_per_frame << '\n';
  return out.str();
}

void write_report(const std::filesystem::path& dir, const std::string& prefix,
                  const ExperimentReport& r) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / (prefix + "_frames.csv"));
    out << "frame_id";
    if (r.has_position) out << ",position_error_m";
    if (r.has_orientation) out << ",orientation_error_deg";
    out << '\n';
    for (const auto& f : r.frames) {
      out << f.frame_id;
      if (r.has_position) out << ',' << format_double(f.position_error_m);
      if (r.has_orientation) out << ',' << format_double(f.orientation_error_deg);
      out << '\n';
    }
  }
  open_out(dir / (prefix + "_summary.csv")) << format_summary(r);
  auto write_hist = [&](const std::string& name, bool present, auto member) {
    if (!present) return;
    std::vector<double> errors;
    for (const auto& f : r.frames) errors.push_back(f.*member);
    auto out = open_out(dir / (prefix + "_hist_" + name + ".csv"));
    out << "error,fraction\n";
    for (const auto& [e, frac] : cumulative_histogram(errors)) {
      out << format_double(e) << ',' << format_double(frac) << '\n';
    }
  };
  write_hist("position", r.has_position, &FrameRecord::position_error_m);
  write_hist("orientation", r.has_orientation, &FrameRecord::orientation_error_deg);
  open_out(dir / (prefix + "_timing.csv")) << "per_frame_ms\n" << format_double(r.per_frame_ms) << '\n';
}

ExperimentReport read_report(const std::filesystem::path& dir, const std::string& prefix) {
  std::map<std::string, std::string> summary;
  {
    const auto path = dir / (prefix + "_summary.csv");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing report summary " + path.string());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma != std::string::npos) summary[line.substr(0, comma)] = line.substr(comma + 1);
    }
  }
  const bool has_position = summary["has_position"] == "true";
  const bool has_orientation = summary["has_orientation"] == "true";
  const auto path = dir / (prefix + "_frames.csv");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing per-frame report " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<FrameRecord> frames;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    const std::size_t expected = 1 + std::size_t(has_position) + std::size_t(has_orientation);
    if (fields.size() != expected) throw FormatError(path.string() + ": malformed row '" + line + "'");
    FrameRecord rec{fields[0], 0.0, 0.0};
    std::size_t k = 1;
    if (has_position) rec.position_error_m = std::stod(fields[k++]);
    if (has_orientation) rec.orientation_error_deg = std::stod(fields[k++]);
    frames.push_back(rec);
  }
  ExperimentReport r = assemble_report(std::move(frames), has_position, has_orientation);
  if (summary.count("model_bytes")) r.model_bytes = std::stoull(summary["model_bytes"]);
  if (summary.count("forwards_per_frame")) r.forwards_per_frame = std::stoull(summary["forwards_per_frame"]);
  return r;
}

ExperimentReport evaluate(const Model& model, const Tensor& mean,
                          const std::vector<PoseSample>& test_set, const CropSpec& crop) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (crop.mode == CropMode::Random) throw std::invalid_argument("evaluate: use center or dense crops");
  crop.validate();
  const auto start = Clock::now();
  const std::size_t n = test_set.size();
  std::vector<FrameRecord> records(n);
  std::vector<std::size_t> forwards(n, 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
    const auto& s = test_set[std::size_t(i)];
    const Pose p = predict_frame(model, mean, s.image, crop, forwards[std::size_t(i)]);
    records[std::size_t(i)] = compare(s.frame_id, p, s.pose);
  }
  const HeadMode mode = model.config().head_mode;
  ExperimentReport r = assemble_report(std::move(records), mode != HeadMode::OrientationOnly,
                                       mode != HeadMode::PositionOnly);
  r.per_frame_ms = ms_since(start) / double(n);
  r.model_bytes = model.to_checkpoint(nullptr, 0).parameter_bytes();
  r.forwards_per_frame = forwards.front();
  for (std::size_t f : forwards) {
    if (f != r.forwards_per_frame) throw std::logic_error("evaluate: uneven forward counts");
  }
  return r;
}

ExperimentReport constant_baseline(const std::vector<PoseSample>& train,
                                   const std::vector<PoseSample>& test) {
  if (train.empty() || test.empty()) throw std::invalid_argument("constant_baseline: empty split");
  std::vector<std::array<double, 7>> poses;
  for (const auto& s : train) poses.push_back(s.pose.to_vector());
  const Pose constant = average_pose_vectors(poses);
  std::vector<FrameRecord> records;
  for (const auto& s : test) records.push_back(compare(s.frame_id, constant, s.pose));
  ExperimentReport r = assemble_report(std::move(records), true, true);
  r.forwards_per_frame = 0;
  return r;
}

FeatureIndex build_feature_index(const Model& model, const Tensor& mean,
                                 const std::vector<PoseSample>& train, const CropSpec& crop) {
  FeatureIndex index;
  index.dim = model.config().feature_dim;
  index.entries.resize(train.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(train.size()); ++i) {
    const auto& s = train[std::size_t(i)];
    index.entries[std::size_t(i)] = {s.frame_id, center_feature(model, mean, s.image, crop), s.pose};
  }
  return index;
}

void write_feature_index(const std::filesystem::path& path, const FeatureIndex& index) {
  auto out = open_out(path);
  out << "frame_id,x,y,z,qw,qx,qy,qz";
  for (std::size_t d = 0; d < index.dim; ++d) out << ",f" << d;
  out << '\n';
  for (const auto& e : index.entries) {
    out << e.frame_id;
    for (double v : e.pose.to_vector()) out << ',' << format_double(v);
    for (double v : e.feature) out << ',' << format_double(v);
    out << '\n';
  }
}

ExperimentReport nn_baseline(const FeatureIndex& index, const Model& model, const Tensor& mean,
                             const std::vector<PoseSample>& test_set, const CropSpec& crop) {
  if (index.entries.empty()) throw std::invalid_argument("nn_baseline: empty feature index");
  if (test_set.empty()) throw std::invalid_argument("nn_baseline: empty test set");
  if (index.dim != model.config().feature_dim) {
    throw std::invalid_argument("nn_baseline: index dimension " + std::to_string(index.dim) +
                                " differs from the model feature size " +
                                std::to_string(model.config().feature_dim));
  }
  const auto start = Clock::now();
  std::vector<FrameRecord> records(test_set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(test_set.size()); ++i) {
    const auto& s = test_set[std::size_t(i)];
    const auto f = center_feature(model, mean, s.image, crop);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < index.entries.size(); ++k) {
      const auto& g = index.entries[k].feature;
      double d = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) d += (f[j] - g[j]) * (f[j] - g[j]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    records[std::size_t(i)] = compare(s.frame_id, index.entries[best].pose, s.pose);
  }
  ExperimentReport r = assemble_report(std::move(records), true, true);
  r.per_frame_ms = ms_since(start) / double(test_set.size());
  r.model_bytes = model.to_checkpoint(nullptr, 0).parameter_bytes();
  r.forwards_per_frame = 1;
  return r;
}

TrainedModel train_fresh(const ModelConfig& model_config, std::uint64_t model_seed,
                         const std::vector<PoseSample>& train_set, const TrainConfig& config,
                         const std::vector<PoseSample>* validation) {
  TrainedModel t{Model(model_config, model_seed), Tensor(), {}, false, ""};
  TrainOptions opts;
  opts.validation = validation;
  try {
    TrainResult r = train(t.model, train_set, config, opts);
    t.mean = r.mean_image;
    t.log = std::move(r.log);
  } catch (const DivergenceError& e) {
    t.diverged = true;
    t.failure = e.what();
    t.mean = compute_scene_mean(rescale_all(train_set, config.crop.rescale_side));
  }
  return t;
}

double sweep_learning_rate(double base_lr, double beta, double reference_beta) {
  return base_lr * std::min(1.0, (1.0 + reference_beta) / (1.0 + beta));
}

BetaSweepResult beta_sweep(const Dataset& data, const std::vector<double>& betas,
                           const ModelConfig& model_config, std::uint64_t model_seed,
                           const TrainConfig& config, double reference_beta) {
  if (betas.size() < 3) throw ConfigError("beta sweep needs at least 3 values");
  const auto [lo, hi] = std::minmax_element(betas.begin(), betas.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0) {
    throw ConfigError("beta sweep values must be positive and span two orders of magnitude");
  }
  const auto& e = data.scene.extent;
  const double diagonal = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
  BetaSweepResult result;
  double best = std::numeric_limits<double>::infinity();
  for (double beta : betas) {
    ModelConfig mc = model_config;
    mc.beta = beta;
    TrainConfig tc = config;
    tc.beta_auto = false;
    tc.base_lr = sweep_learning_rate(config.base_lr, beta, reference_beta);
    const TrainedModel t = train_fresh(mc, model_seed, data.train, tc);
    BetaSweepRow row;
    row.beta = beta;
    row.learning_rate = tc.base_lr;
    row.diverged = t.diverged;
    if (t.diverged) {
      row.median_position_m = row.median_orientation_deg = row.score =
          std::numeric_limits<double>::infinity();
    } else {
      const auto rep = evaluate(t.model, t.mean, data.test, center_of(config.crop));
      row.median_position_m = rep.median_position_m;
      row.median_orientation_deg = rep.median_orientation_deg;
      row.score = rep.median_position_m / diagonal + rep.median_orientation_deg / 180.0;
    }
    if (row.score < best) {
      best = row.score;
      result.selected_index = result.rows.size();
      result.selected_beta = beta;
    }
    result.rows.push_back(row);
  }
  return result;
}

void write_beta_sweep(const std::filesystem::path& path, const BetaSweepResult& result) {
  auto out = open_out(path);
  out << "beta,learning_rate,diverged,median_position_m,median_orientation_deg,score,selected\n";
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    out << format_double(r.beta) << ',' << format_double(r.learning_rate) << ','
        << csv_bool(r.diverged) << ',' << format_double(r.median_position_m) << ','
        << format_double(r.median_orientation_deg) << ',' << format_double(r.score) << ','
        << csv_bool(i == result.selected_index) << '\n';
  }
}

std::vector<SpacingSweepRow> spacing_sweep(const Dataset& data, double base_spacing,
                                           const std::vector<double>& spacings,
                                           const ModelConfig& model_config,
                                           std::uint64_t model_seed, const TrainConfig& config) {
  if (spacings.empty()) throw ConfigError("spacing sweep needs at least one spacing");
  if (!(base_spacing > 0.0)) throw ConfigError("base spacing must be positive");
  for (std::size_t i = 0; i < spacings.size(); ++i) {
    if (!(spacings[i] > 0.0) || (i > 0 && !(spacings[i] > spacings[i - 1]))) {
      throw ConfigError("spacings must be positive and increasing");
    }
  }
  std::vector<SpacingSweepRow> rows;
  for (double spacing : spacings) {
    const auto stride = std::size_t(std::max(1.0, std::round(spacing / base_spacing)));
    std::vector<PoseSample> subset;
    for (std::size_t i = 0; i < data.train.size(); i += stride) subset.push_back(data.train[i]);
    if (subset.size() < config.batch_size) {
      throw ConfigError("spacing " + format_double(spacing) + " leaves " +
                        std::to_string(subset.size()) + " training frames, fewer than the batch size " +
                        std::to_string(config.batch_size));
    }
    TrainConfig tc = config;
    tc.epochs = config.epochs * stride;
    tc.decay_period = config.decay_period * stride;
    tc.eval_every = config.eval_every * stride;
    const TrainedModel t = train_fresh(model_config, model_seed, subset, tc);
    SpacingSweepRow row{spacing, stride, subset.size(), tc.epochs, t.diverged, 0.0, 0.0};
    if (t.diverged) {
      row.median_position_m = row.median_orientation_deg = std::numeric_limits<double>::infinity();
    } else {
      const auto rep = evaluate(t.model, t.mean, data.test, center_of(config.crop));
      row.median_position_m = rep.median_position_m;
      row.median_orientation_deg = rep.median_orientation_deg;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_spacing_sweep(const std::filesystem::path& path, const std::vector<SpacingSweepRow>& rows) {
  auto out = open_out(path);
  out << "spacing_m,stride,train_count,epochs,diverged,median_position_m,median_orientation_deg\n";
  for (const auto& r : rows) {
    out << format_double(r.spacing) << ',' << r.stride << ',' << r.train_count << ',' << r.epochs
        << ',' << csv_bool(r.diverged) << ',' << format_double(r.median_position_m) << ','
        << format_double(r.median_orientation_deg) << '\n';
  }
}

std::vector<HeadComparisonRow> joint_vs_separate(const Dataset& data,
                                                 const ModelConfig& model_config,
                                                 std::uint64_t model_seed,
                                                 const TrainConfig& config) {
  std::vector<HeadComparisonRow> rows;
  for (HeadMode mode : {HeadMode::Joint, HeadMode::PositionOnly, HeadMode::OrientationOnly}) {
    ModelConfig mc = model_config;
    mc.head_mode = mode;
    const TrainedModel t = train_fresh(mc, model_seed, data.train, config);
    HeadComparisonRow row;
    row.variant = to_string(mode);
    row.has_position = mode != HeadMode::OrientationOnly;
    row.has_orientation = mode != HeadMode::PositionOnly;
    if (t.diverged) {
      row.median_position_m = row.median_orientation_deg = std::numeric_limits<double>::infinity();
    } else {
      const auto rep = evaluate(t.model, t.mean, data.test, center_of(config.crop));
      row.median_position_m = rep.median_position_m;
      row.median_orientation_deg = rep.median_orientation_deg;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_head_comparison(const std::filesystem::path& path,
                           const std::vector<HeadComparisonRow>& rows) {
  auto out = open_out(path);
  out << "variant,median_position_m,median_orientation_deg\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << (r.has_position ? format_double(r.median_position_m) : "") << ','
        << (r.has_orientation ? format_double(r.median_orientation_deg) : "") << '\n';
  }
}

double TransferResult::epoch_ratio() const {
  if (!warm_epochs_to_match || cold_log.empty()) return std::numeric_limits<double>::infinity();
  return double(*warm_epochs_to_match) / double(cold_log.back().epoch);
}

TransferResult transfer_comparison(const Dataset& data, const ModelConfig& model_config,
                                   std::uint64_t model_seed, const TrainConfig& config,
                                   const TrainConfig& pretext_config) {
  TrainConfig tc = config;
  tc.eval_every = 1;
  tc.beta_auto = false;
  TransferResult result;
  TrainOptions opts;
  opts.validation = &data.test;

  Model cold(model_config, model_seed);
  result.cold_log = train(cold, data.train, tc, opts).log;
  result.cold_final_val_loss = result.cold_log.back().val_loss;

  Model warm(model_config, model_seed);
  const PretrainResult pre = pretrain_classifier(warm, data.train, pretext_config, &data.test);
  result.pretext_accuracy = pre.heldout_accuracy;
  result.num_classes = pre.num_classes;
  result.warm_log = train(warm, data.train, tc, opts).log;
  for (const auto& row : result.warm_log) {
    if (row.val_loss <= result.cold_final_val_loss) {
      result.warm_epochs_to_match = row.epoch;
      break;
    }
  }
  return result;
}

void write_transfer(const std::filesystem::path& path, const TransferResult& result) {
  auto out = open_out(path);
  out << "epoch,cold_val_loss,warm_val_loss\n";
  for (std::size_t i = 0; i < std::max(result.cold_log.size(), result.warm_log.size()); ++i) {
    const std::size_t epoch = i < result.cold_log.size() ? result.cold_log[i].epoch
                                                         : result.warm_log[i].epoch;
    out << epoch << ','
        << (i < result.cold_log.size() ? format_double(result.cold_log[i].val_loss) : "") << ','
        << (i < result.warm_log.size() ? format_double(result.warm_log[i].val_loss) : "") << '\n';
  }
}

SaliencyResult saliency_map(const Model& model, const Tensor& mean, const PoseSample& sample,
                            const CropSpec& crop) {
  const Tensor rescaled = rescale_shortest_side(sample.image, crop.rescale_side);
  const CropOffset off =
      crop_offsets(rescaled.dim(1), rescaled.dim(2), center_of(crop)).front();
  const Tensor cropped = subtract_mean(extract_crop(rescaled, off, crop.crop_side), mean, off);
  Tensor input = Tensor::from(cropped.shape(), {cropped.values().begin(), cropped.values().end()}, true);
  const Tensor loss = pose_loss(model.forward(input, false).back(), sample.pose, model.config().beta);
  loss.backward();
  for (Tensor p : model.parameter_tensors()) p.zero_grad();

  const std::size_t c = crop.crop_side, plane = c * c;
  const auto g = input.grad();
  std::vector<double> map(plane, 0.0);
  for (std::size_t ch = 0; ch < input.dim(0); ++ch) {
    for (std::size_t i = 0; i < plane; ++i) map[i] = std::max(map[i], std::abs(g[ch * plane + i]));
  }
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  const double mn = *lo, mx = *hi;
  SaliencyResult r;
  if (!(mx > mn)) {
    r.degenerate = true;
    std::fill(map.begin(), map.end(), 0.0);
  } else {
    for (double& v : map) v = (v - mn) / (mx - mn);
  }

  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  if (sample.landmark_mask.size() == h * w && rescaled.dim(1) == h && rescaled.dim(2) == w) {
    double fg = 0.0, bg = 0.0;
    std::size_t nf = 0, nb = 0;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double v = map[i * c + j];
        if (sample.landmark_mask[(off.row + i) * w + off.col + j]) {
          fg += v;
          ++nf;
        } else {
          bg += v;
          ++nb;
        }
      }
    }
    if (nf > 0 && nb > 0) {
      r.has_mask = true;
      r.landmark_mean = fg / double(nf);
      r.background_mean = bg / double(nb);
    }
  }
  r.map = Tensor::from({c, c}, std::move(map));
  return r;
}

EfficiencyReport efficiency_report(const Model& model, const Tensor& mean, const PoseSample& sample,
                                   const CropSpec& crop, std::size_t center_runs,
                                   std::size_t dense_runs) {
  EfficiencyReport r;
  r.parameter_bytes = model.to_checkpoint(nullptr, 0).parameter_bytes();
  r.center_runs = center_runs;
  r.dense_runs = dense_runs;
  CropSpec dense = crop;
  dense.mode = CropMode::Dense;
  auto time_runs = [&](const CropSpec& spec, std::size_t runs) {
    std::vector<double> ms;
    for (std::size_t k = 0; k < runs; ++k) {
      std::size_t forwards = 0;
      const auto start = Clock::now();
      (void)predict_frame(model, mean, sample.image, spec, forwards);
      ms.push_back(ms_since(start));
    }
    return ms.empty() ? 0.0 : median(ms);
  };
  r.center_ms = time_runs(center_of(crop), center_runs);
  r.dense_ms = time_runs(dense, dense_runs);
  return r;
}

}  // namespace posereg
