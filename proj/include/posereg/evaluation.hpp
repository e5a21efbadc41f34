#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posereg/dataset.hpp"
#include "posereg/image.hpp"
#include "posereg/model.hpp"
#include "posereg/training.hpp"

namespace posereg {

struct FrameRecord {
  std::string frame_id;
  double position_error_m = 0.0;
  double orientation_error_deg = 0.0;
};

inline constexpr int kReportPercentiles[] = {5, 25, 50, 75, 90, 95, 99};

struct ExperimentReport {
  std::vector<FrameRecord> frames;  // sorted by frame_id
  bool has_position = true;
  bool has_orientation = true;
  double median_position_m = 0.0;
  double median_orientation_deg = 0.0;
  std::vector<std::pair<int, double>> position_percentiles;
  std::vector<std::pair<int, double>> orientation_percentiles;
  std::uint64_t model_bytes = 0;
  std::size_t forwards_per_frame = 0;
  double per_frame_ms = 0.0;  // wall clock; written to the timing file only
};

/// (error, fraction of frames with error <= it), one row per frame in
/// ascending order; the last fraction is 1.
std::vector<std::pair<double, double>> cumulative_histogram(std::vector<double> errors);

/// Sorts the records and fills the medians and percentile tables.
ExperimentReport assemble_report(std::vector<FrameRecord> frames, bool has_position,
                                 bool has_orientation);

/// Writes <prefix>_frames.csv, <prefix>_summary.csv,
/// <prefix>_hist_position.csv, <prefix>_hist_orientation.csv and
/// <prefix>_timing.csv into `dir`.
void write_report(const std::filesystem::path& dir, const std::string& prefix,
                  const ExperimentReport& report);
/// Rebuilds a report from <prefix>_frames.csv and the summary's metadata.
ExperimentReport read_report(const std::filesystem::path& dir, const std::string& prefix);
std::string format_summary(const ExperimentReport& report);

/// Per frame: rescale, crop per `crop.mode` (center or dense), forward in test
/// mode, average the crop predictions, compare with ground truth. Frames run
/// in parallel; the result does not depend on the thread count.
ExperimentReport evaluate(const Model& model, const Tensor& mean,
                          const std::vector<PoseSample>& test_set, const CropSpec& crop);

/// Mean training position and averaged training orientation for every frame.
ExperimentReport constant_baseline(const std::vector<PoseSample>& train,
                                   const std::vector<PoseSample>& test);

struct FeatureEntry {
  std::string frame_id;
  std::vector<double> feature;
  Pose pose;
};

struct FeatureIndex {
  std::size_t dim = 0;
  std::vector<FeatureEntry> entries;
};

/// Localization features of the center crops of `train`.
FeatureIndex build_feature_index(const Model& model, const Tensor& mean,
                                 const std::vector<PoseSample>& train, const CropSpec& crop);
void write_feature_index(const std::filesystem::path& path, const FeatureIndex& index);

/// Predicts the pose of the training frame at minimal Euclidean feature
/// distance (lowest index on ties). Throws std::invalid_argument on an empty
/// index.
ExperimentReport nn_baseline(const FeatureIndex& index, const Model& model, const Tensor& mean,
                             const std::vector<PoseSample>& test_set, const CropSpec& crop);

/// Trained model plus the mean image it was trained with.
struct TrainedModel {
  Model model;
  Tensor mean;
  std::vector<TrainLogRow> log;
  bool diverged = false;
  std::string failure;
};

TrainedModel train_fresh(const ModelConfig& model_config, std::uint64_t model_seed,
                         const std::vector<PoseSample>& train, const TrainConfig& config,
                         const std::vector<PoseSample>* validation = nullptr);

struct BetaSweepRow {
  double beta = 0.0;
  double learning_rate = 0.0;
  bool diverged = false;
  double median_position_m = 0.0;
  double median_orientation_deg = 0.0;
  double score = 0.0;  // position / scene diagonal + orientation / 180
};

struct BetaSweepResult {
  std::vector<BetaSweepRow> rows;
  double selected_beta = 0.0;
  std::size_t selected_index = 0;
};

/// Learning rate used for `beta`: base_lr * min(1, (1 + reference) / (1 + beta)),
/// so the orientation term's gradient scale stays bounded as beta grows.
double sweep_learning_rate(double base_lr, double beta, double reference_beta);

/// One model per beta, same seed and data order, evaluated with center crops
/// on `test`. Requires at least 3 betas spanning two orders of magnitude.
BetaSweepResult beta_sweep(const Dataset& data, const std::vector<double>& betas,
                           const ModelConfig& model_config, std::uint64_t model_seed,
                           const TrainConfig& config, double reference_beta);
void write_beta_sweep(const std::filesystem::path& path, const BetaSweepResult& result);

struct SpacingSweepRow {
  double spacing = 0.0;
  std::size_t stride = 0;
  std::size_t train_count = 0;
  std::size_t epochs = 0;
  bool diverged = false;
  double median_position_m = 0.0;
  double median_orientation_deg = 0.0;
};

/// Subsamples the training trajectory (recorded at `base_spacing`) with
/// stride round(spacing / base_spacing) and trains once per spacing. Epochs,
/// decay period and eval interval are multiplied by the stride so every run
/// takes the same number of SGD steps. Throws ConfigError when spacings are
/// not increasing or a subsample has fewer frames than the batch size.
std::vector<SpacingSweepRow> spacing_sweep(const Dataset& data, double base_spacing,
                                           const std::vector<double>& spacings,
                                           const ModelConfig& model_config,
                                           std::uint64_t model_seed, const TrainConfig& config);
void write_spacing_sweep(const std::filesystem::path& path, const std::vector<SpacingSweepRow>& rows);

struct HeadComparisonRow {
  std::string variant;  // joint, position, orientation
  bool has_position = false;
  bool has_orientation = false;
  double median_position_m = 0.0;
  double median_orientation_deg = 0.0;
};

std::vector<HeadComparisonRow> joint_vs_separate(const Dataset& data,
                                                 const ModelConfig& model_config,
                                                 std::uint64_t model_seed,
                                                 const TrainConfig& config);
void write_head_comparison(const std::filesystem::path& path,
                           const std::vector<HeadComparisonRow>& rows);

struct TransferResult {
  std::vector<TrainLogRow> cold_log;
  std::vector<TrainLogRow> warm_log;
  double pretext_accuracy = 0.0;
  std::size_t num_classes = 0;
  double cold_final_val_loss = 0.0;
  std::optional<std::size_t> warm_epochs_to_match;  // first warm epoch at or below it
  double epoch_ratio() const;  // warm_epochs_to_match / cold epochs, inf if never
};

/// Cold start vs. warm start from the landmark-classification pretext, same
/// seed and data, validation loss logged every epoch on `data.test`.
TransferResult transfer_comparison(const Dataset& data, const ModelConfig& model_config,
                                   std::uint64_t model_seed, const TrainConfig& config,
                                   const TrainConfig& pretext_config);
void write_transfer(const std::filesystem::path& path, const TransferResult& result);

struct SaliencyResult {
  Tensor map;  // [c,c] in [0,1]
  bool degenerate = false;  // flat gradient: map is all zeros
  double landmark_mean = 0.0;
  double background_mean = 0.0;
  bool has_mask = false;  // false when the sample has no mask or one class is empty
};

/// |d loss / d pixel| on the center crop, max over channels, min-max
/// normalized. Landmark and background means use the crop of the sample's
/// landmark mask.
SaliencyResult saliency_map(const Model& model, const Tensor& mean, const PoseSample& sample,
                            const CropSpec& crop);

struct EfficiencyReport {
  std::uint64_t parameter_bytes = 0;
  double center_ms = 0.0;
  double dense_ms = 0.0;
  std::size_t center_runs = 0;
  std::size_t dense_runs = 0;
};

/// Median wall-clock over `center_runs` single-crop and `dense_runs` dense
/// inferences of one frame.
EfficiencyReport efficiency_report(const Model& model, const Tensor& mean, const PoseSample& sample,
                                   const CropSpec& crop, std::size_t center_runs = 100,
                                   std::size_t dense_runs = 5);

}  // namespace posereg
