#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "posereg/checkpoint.hpp"
#include "posereg/config_file.hpp"
#include "posereg/dataset.hpp"
#include "posereg/image.hpp"
#include "posereg/model.hpp"
#include "posereg/optim.hpp"

namespace posereg {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 160;
  double base_lr = 1e-3;
  double momentum = 0.9;
  double decay_factor = 0.1;
  std::size_t decay_period = 120;
  std::uint64_t seed = 1;
  CropSpec crop{64, 56, CropMode::Random, 128};
  bool beta_auto = false;   // estimate beta from a warm-up run
  double warmup_fraction = 0.1;
  double beta_min = 1.0;
  double beta_max = 1e4;
  std::size_t eval_every = 10;
  double divergence_threshold = 1e6;

  void validate(std::size_t train_size) const;  // throws ConfigError

  KeyValues to_key_values() const;
  /// Reads the keys it knows, leaving defaults for the rest.
  static TrainConfig from_key_values(const KeyValues& kv);
};

struct TrainLogRow {
  std::size_t epoch = 0;  // epochs completed
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_median_position_m = 0.0;
  double val_median_orientation_deg = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;  // kept out of the CSV log so logs stay reproducible
};

/// CSV with a header row; wall-clock time is written separately by
/// write_timing_csv.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path);
void write_timing_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows);

struct TrainOptions {
  const std::vector<PoseSample>* validation = nullptr;
  /// When set, checkpoint.bin and mean.bin are written here at every eval
  /// point and at the end.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Continue from this checkpoint (model values, velocity, epoch count).
  const Checkpoint* resume = nullptr;
  /// Called after each log row; return false to stop early.
  std::function<bool(const TrainLogRow&)> on_eval;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
  Tensor mean_image;  // [3, R, R'] at the rescaled resolution
  double beta = 0.0;  // beta actually used
  std::optional<double> estimated_beta;
};

/// Rescales every image so its shorter side is `side`.
std::vector<Tensor> rescale_all(const std::vector<PoseSample>& samples, std::size_t side);

/// Center crop, mean-subtracted: the test-time network input.
Tensor center_input(const Tensor& rescaled, const Tensor& mean, std::size_t crop_side);

/// Median position error (m), median orientation error (deg), mean loss of
/// the final head on center crops.
struct ValidationStats {
  double median_position_m = 0.0;
  double median_orientation_deg = 0.0;
  double median_quaternion_difference = 0.0;
  double mean_loss = 0.0;
};
ValidationStats validate_model(const Model& model, const std::vector<PoseSample>& samples,
                               const Tensor& mean, const CropSpec& crop);

/// SGD with momentum on the per-sample total loss averaged over each batch.
/// Shuffle order and crop offsets of epoch e depend only on (seed, e), so a
/// resumed run matches an uninterrupted one bit for bit. Throws
/// DivergenceError when a batch loss is non-finite or above the threshold.
TrainResult train(Model& model, const std::vector<PoseSample>& data, const TrainConfig& config,
                  const TrainOptions& options = {});

struct PretrainResult {
  Checkpoint checkpoint;   // the model after pretext training; heads untouched
  std::vector<double> epoch_loss;
  std::size_t num_classes = 0;
  double heldout_accuracy = 0.0;  // on `heldout` when given
};

/// Pretext task: classify the dominant visible landmark with a temporary
/// linear softmax head on the localization feature. Trains the trunk and the
/// feature layer; the temporary head is discarded. Throws DegenerateError
/// when the labels contain fewer than two classes.
PretrainResult pretrain_classifier(Model& model, const std::vector<PoseSample>& data,
                                   const TrainConfig& config,
                                   const std::vector<PoseSample>* heldout = nullptr);

/// Linear interpolation between order statistics at rank p/100*(n-1).
double percentile(std::vector<double> values, double p);
double median(std::vector<double> values);  // percentile 50

}  // namespace posereg
