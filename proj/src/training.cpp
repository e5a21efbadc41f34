#include "posereg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "posereg/errors.hpp"
#include "posereg/ops.hpp"
#include "posereg/rng.hpp"

namespace posereg {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kPretextStream = 0x70726574;

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  if (!kv.has(key)) return fallback;
  const long long v = kv.get_int(key);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return std::size_t(v);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Runs `body(sample_index, input)` over one epoch's batches, where the shuffle
// and the random crop offsets are drawn from an rng seeded by (seed, epoch).
// `step(batch_index)` runs after each batch.
template <typename Body, typename Step>
void for_each_batch(const std::vector<Tensor>& rescaled, const Tensor& mean,
                    const TrainConfig& config, std::uint64_t stream, std::size_t epoch, Body body,
                    Step step) {
  Rng rng(mix_seed(config.seed, stream, epoch));
  std::vector<std::size_t> order(rescaled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  CropSpec spec = config.crop;
  spec.mode = CropMode::Random;
  std::size_t batch = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const double weight = 1.0 / double(end - start);
    for (std::size_t k = start; k < end; ++k) {
      const Tensor& img = rescaled[order[k]];
      const CropOffset off = crop_offsets(img.dim(1), img.dim(2), spec, &rng).front();
      body(order[k], subtract_mean(extract_crop(img, off, spec.crop_side), mean, off), weight);
    }
    step(batch);
  }
}

}  // namespace

void TrainConfig::validate(std::size_t train_size) const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (train_size == 0) throw ConfigError("training set is empty");
  if (batch_size > train_size) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds the training set size " +
                      std::to_string(train_size));
  }
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay_factor must lie in (0,1]");
  if (decay_period == 0) throw ConfigError("decay_period must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("warmup_fraction must lie in (0,1]");
  }
  if (!(beta_min > 0.0 && beta_min <= beta_max)) throw ConfigError("need 0 < beta_min <= beta_max");
  crop.validate();
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("base_lr", format_double(base_lr));
  kv.set("momentum", format_double(momentum));
  kv.set("decay_factor", format_double(decay_factor));
  kv.set("decay_period", std::to_string(decay_period));
  kv.set("seed", std::to_string(seed));
  kv.set("rescale_side", std::to_string(crop.rescale_side));
  kv.set("crop_side", std::to_string(crop.crop_side));
  kv.set("dense_count", std::to_string(crop.dense_count));
  kv.set("beta_auto", beta_auto ? "true" : "false");
  kv.set("warmup_fraction", format_double(warmup_fraction));
  kv.set("beta_min", format_double(beta_min));
  kv.set("beta_max", format_double(beta_max));
  kv.set("eval_every", std::to_string(eval_every));
  kv.set("divergence_threshold", format_double(divergence_threshold));
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.batch_size = get_size(kv, "batch_size", c.batch_size);
  c.epochs = get_size(kv, "epochs", c.epochs);
  if (kv.has("base_lr")) c.base_lr = kv.get_double("base_lr");
  if (kv.has("momentum")) c.momentum = kv.get_double("momentum");
  if (kv.has("decay_factor")) c.decay_factor = kv.get_double("decay_factor");
  c.decay_period = get_size(kv, "decay_period", c.decay_period);
  c.seed = get_size(kv, "seed", c.seed);
  c.crop.rescale_side = get_size(kv, "rescale_side", c.crop.rescale_side);
  c.crop.crop_side = get_size(kv, "crop_side", c.crop.crop_side);
  c.crop.dense_count = get_size(kv, "dense_count", c.crop.dense_count);
  if (kv.has("beta_auto")) {
    const auto& v = kv.get("beta_auto");
    if (v != "true" && v != "false") throw ConfigError("beta_auto must be true or false");
    c.beta_auto = v == "true";
  }
  if (kv.has("warmup_fraction")) c.warmup_fraction = kv.get_double("warmup_fraction");
  if (kv.has("beta_min")) c.beta_min = kv.get_double("beta_min");
  if (kv.has("beta_max")) c.beta_max = kv.get_double("beta_max");
  c.eval_every = get_size(kv, "eval_every", c.eval_every);
  if (kv.has("divergence_threshold")) c.divergence_threshold = kv.get_double("divergence_threshold");
  return c;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_median_position_m,val_median_orientation_deg,learning_rate\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.val_median_position_m) << ','
        << format_double(r.val_median_orientation_deg) << ',' << format_double(r.learning_rate)
        << '\n';
  }
}

std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    TrainLogRow r;
    if (!(fields >> r.epoch >> r.train_loss >> r.val_loss >> r.val_median_position_m >>
          r.val_median_orientation_deg >> r.learning_rate)) {
      throw FormatError(path.string() + ": malformed log row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

void write_timing_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,wall_seconds\n";
  for (const auto& r : rows) out << r.epoch << ',' << format_double(r.wall_seconds) << '\n';
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile outside [0,100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * double(values.size() - 1);
  const auto lo = std::size_t(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - double(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

std::vector<Tensor> rescale_all(const std::vector<PoseSample>& samples, std::size_t side) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(rescale_shortest_side(s.image, side));
  return out;
}

Tensor center_input(const Tensor& rescaled, const Tensor& mean, std::size_t crop_side) {
  CropSpec spec;
  spec.rescale_side = std::min(rescaled.dim(1), rescaled.dim(2));
  spec.crop_side = crop_side;
  spec.mode = CropMode::Center;
  const CropOffset off = crop_offsets(rescaled.dim(1), rescaled.dim(2), spec).front();
  return subtract_mean(extract_crop(rescaled, off, crop_side), mean, off);
}

ValidationStats validate_model(const Model& model, const std::vector<PoseSample>& samples,
                               const Tensor& mean, const CropSpec& crop) {
  if (samples.empty()) throw std::invalid_argument("validation set is empty");
  const std::size_t n = samples.size();
  std::vector<double> pos(n), ori(n), qdiff(n), loss(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
    NoGradGuard no_grad;  // grad mode is per thread
    const auto& s = samples[std::size_t(i)];
    const Tensor input =
        center_input(rescale_shortest_side(s.image, crop.rescale_side), mean, crop.crop_side);
    const auto out = model.forward(input, false).back();
    loss[std::size_t(i)] = pose_loss(out, s.pose, model.config().beta).item();
    const auto raw = out.raw.values();
    const auto mode = model.config().head_mode;
    if (mode != HeadMode::OrientationOnly) {
      pos[std::size_t(i)] = position_error_m({raw[0], raw[1], raw[2]}, s.pose.position());
    }
    if (mode != HeadMode::PositionOnly) {
      const std::size_t o = mode == HeadMode::Joint ? 3 : 0;
      const Quaternion q{raw[o], raw[o + 1], raw[o + 2], raw[o + 3]};
      qdiff[std::size_t(i)] = quaternion_difference_norm(q, s.pose.orientation());
      try {
        ori[std::size_t(i)] = quat_angular_error_deg(quat_normalize(q), s.pose.orientation());
      } catch (const DegenerateError&) {
        ori[std::size_t(i)] = 180.0;
      }
    }
  }
  ValidationStats st;
  st.median_position_m = median(pos);
  st.median_orientation_deg = median(ori);
  st.median_quaternion_difference = median(qdiff);
  double total = 0.0;
  for (double l : loss) total += l;
  st.mean_loss = total / double(n);
  return st;
}

TrainResult train(Model& model, const std::vector<PoseSample>& data, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate(data.size());
  if (model.config().input_size != config.crop.crop_side) {
    throw ConfigError("model input size " + std::to_string(model.config().input_size) +
                      " differs from crop_side " + std::to_string(config.crop.crop_side));
  }
  const auto start_time = std::chrono::steady_clock::now();
  const std::vector<Tensor> rescaled = rescale_all(data, config.crop.rescale_side);
  TrainResult result;
  result.mean_image = compute_scene_mean(rescaled);

  if (config.beta_auto && options.resume == nullptr) {
    // Short run from the same initialization at the provisional beta; its
    // end-of-run error ratio becomes beta.
    Model warm(model.config(), 0);
    warm.load_checkpoint(model.to_checkpoint(nullptr, 0), nullptr);
    TrainConfig wc = config;
    wc.beta_auto = false;
    wc.epochs = std::max<std::size_t>(1, std::size_t(std::lround(config.warmup_fraction *
                                                                 double(config.epochs))));
    wc.eval_every = wc.epochs;
    train(warm, data, wc);
    const auto st = validate_model(warm, data, result.mean_image, config.crop);
    const double beta = estimate_beta(st.median_position_m, st.median_quaternion_difference,
                                      config.beta_min, config.beta_max);
    result.estimated_beta = beta;
    model.set_beta(beta);
  }
  result.beta = model.config().beta;

  auto params = model.parameter_tensors();
  OptimizerState state = make_optimizer_state(params, config.base_lr, config.momentum,
                                              config.decay_factor, config.decay_period);
  std::size_t first_epoch = 0;
  if (options.resume != nullptr) {
    model.load_checkpoint(*options.resume, &state);
    first_epoch = std::size_t(options.resume->epochs_completed);
  }

  auto save = [&](std::size_t epochs_done) {
    result.checkpoint = model.to_checkpoint(&state, epochs_done);
    if (options.checkpoint_dir) {
      std::filesystem::create_directories(*options.checkpoint_dir);
      write_checkpoint(*options.checkpoint_dir / "checkpoint.bin", result.checkpoint);
      write_mean_image(*options.checkpoint_dir / "mean.bin", result.mean_image);
    }
  };

  for (std::size_t epoch = first_epoch; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0, batch_loss = 0.0;
    for_each_batch(
        rescaled, result.mean_image, config, kShuffleStream, epoch,
        [&](std::size_t index, const Tensor& input, double weight) {
          const Tensor loss = total_loss(model.forward(input, true), data[index].pose, model.config());
          batch_loss += loss.item() * weight;
          loss_sum += loss.item();
          scale(loss, weight).backward();
        },
        [&](std::size_t batch) {
          if (!std::isfinite(batch_loss) || batch_loss > config.divergence_threshold) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch) + " (batch loss " +
                                      format_double(batch_loss) + ")",
                                  int(epoch), int(batch));
          }
          batch_loss = 0.0;
          sgd_momentum_step(std::span(params), state, epoch);
        });

    const std::size_t done = epoch + 1;
    if (done % config.eval_every == 0 || done == config.epochs) {
      TrainLogRow row;
      row.epoch = done;
      row.train_loss = loss_sum / double(data.size());
      row.learning_rate = lr_schedule(state, epoch);
      if (options.validation != nullptr && !options.validation->empty()) {
        const auto st = validate_model(model, *options.validation, result.mean_image, config.crop);
        row.val_loss = st.mean_loss;
        row.val_median_position_m = st.median_position_m;
        row.val_median_orientation_deg = st.median_orientation_deg;
      }
      row.wall_seconds = seconds_since(start_time);
      result.log.push_back(row);
      save(done);
      if (options.on_eval && !options.on_eval(row)) return result;
    }
  }
  if (result.log.empty() || result.log.back().epoch != std::max(first_epoch, config.epochs)) {
    save(std::max(first_epoch, config.epochs));
  }
  return result;
}

PretrainResult pretrain_classifier(Model& model, const std::vector<PoseSample>& data,
                                   const TrainConfig& config,
                                   const std::vector<PoseSample>* heldout) {
  config.validate(data.size());
  std::set<int> classes;
  for (const auto& s : data) classes.insert(s.dominant_landmark);
  if (classes.size() < 2) {
    throw DegenerateError("pretext labels have " + std::to_string(classes.size()) +
                          " class; need at least two");
  }
  // Class index = rank of the label among the training labels; -1 (nothing
  // visible) is a class of its own.
  const std::vector<int> labels(classes.begin(), classes.end());
  auto class_of = [&](int label) -> std::ptrdiff_t {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    return it != labels.end() && *it == label ? it - labels.begin() : -1;
  };

  PretrainResult result;
  result.num_classes = labels.size();
  const std::size_t fdim = model.config().feature_dim;
  Rng init(mix_seed(config.seed, kPretextStream));
  const double bound = 1.0 / std::sqrt(double(fdim));
  std::vector<double> w(labels.size() * fdim);
  for (double& v : w) v = init.uniform(-bound, bound);
  Tensor head_w = Tensor::from({labels.size(), fdim}, std::move(w), true);
  Tensor head_b = Tensor::zeros({labels.size()}, true);

  const std::vector<Tensor> rescaled = rescale_all(data, config.crop.rescale_side);
  const Tensor mean = compute_scene_mean(rescaled);
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) {
    if (p.trunk) params.push_back(p.tensor);
  }
  params.push_back(head_w);
  params.push_back(head_b);
  OptimizerState state = make_optimizer_state(params, config.base_lr, config.momentum,
                                              config.decay_factor, config.decay_period);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for_each_batch(
        rescaled, mean, config, kPretextStream, epoch,
        [&](std::size_t index, const Tensor& input, double weight) {
          const Tensor logits = linear(model.features(input), head_w, head_b);
          const Tensor loss =
              softmax_cross_entropy(logits, std::size_t(class_of(data[index].dominant_landmark)));
          loss_sum += loss.item();
          scale(loss, weight).backward();
        },
        [&](std::size_t batch) {
          if (!std::isfinite(loss_sum)) {
            throw DivergenceError("pretext training diverged", int(epoch), int(batch));
          }
          sgd_momentum_step(std::span(params), state, epoch);
        });
    result.epoch_loss.push_back(loss_sum / double(data.size()));
  }
  if (heldout != nullptr && !heldout->empty()) {
    NoGradGuard no_grad;
    std::size_t correct = 0, counted = 0;
    for (const auto& s : *heldout) {
      const std::ptrdiff_t cls = class_of(s.dominant_landmark);
      if (cls < 0) continue;  // label never seen in training
      ++counted;
      const Tensor input =
          center_input(rescale_shortest_side(s.image, config.crop.rescale_side), mean,
                       config.crop.crop_side);
      const auto logits = linear(model.features(input), head_w, head_b).values();
      const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
      if (best == cls) ++correct;
    }
    result.heldout_accuracy = counted ? double(correct) / double(counted) : 0.0;
  }
  result.checkpoint = model.to_checkpoint(nullptr, 0);
  return result;
}

}  // namespace posereg
