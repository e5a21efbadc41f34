#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "posereg/checkpoint.hpp"
#include "posereg/config_file.hpp"
#include "posereg/geometry.hpp"
#include "posereg/optim.hpp"
#include "posereg/tensor.hpp"

namespace posereg {

enum class LayerKind { Conv, Relu, MaxPool, GlobalAvgPool, Flatten };

/// One trunk layer. Text form: conv(channels,kernel,stride,padding), relu,
/// maxpool(window,stride), gap, flatten.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool operator==(const LayerSpec&) const = default;
};

std::vector<LayerSpec> parse_trunk(const std::string& text);
std::string format_trunk(const std::vector<LayerSpec>& trunk);
/// conv7x7/2(16) relu maxpool3/2 conv3x3(32) relu maxpool3/2 conv3x3(64) relu flatten
std::vector<LayerSpec> default_trunk();

/// Which pose components the regressor heads emit.
enum class HeadMode { Joint, PositionOnly, OrientationOnly };

std::size_t head_outputs(HeadMode mode);
std::string to_string(HeadMode mode);
HeadMode parse_head_mode(const std::string& text);

struct ModelConfig {
  std::size_t input_size = 56;
  std::vector<LayerSpec> trunk = default_trunk();
  std::size_t feature_dim = 256;
  std::size_t num_heads = 1;
  std::vector<double> aux_head_weights{1.0};
  double beta = 30.0;
  Vec3 position_extent{10.0, 10.0, 2.0};
  HeadMode head_mode = HeadMode::Joint;

  /// Throws ConfigError naming the first violated constraint or the layer
  /// whose shape does not chain.
  void validate() const;

  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
  /// Hash of the canonical key-value text.
  std::string digest() const;
};

struct PoseOutput {
  Tensor raw;      // 7 values [x y z | w p q r] for joint heads; 3 or 4 otherwise
  Tensor feature;  // localization feature feeding this head
};

/// Rows 0..2 of `weights` rescaled so row d has norm base_scale*extent[d].
/// Throws ConfigError for a non-positive extent.
void init_position_rows(Tensor& weights, const Vec3& extent, double base_scale);

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trunk = true;  // false for regressor heads
};

class Model {
 public:
  /// Deterministic in (config, seed).
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  void set_beta(double beta) { config_.beta = beta; }

  /// Trunk + localization feature only.
  Tensor features(const Tensor& image) const;

  /// All heads in train mode (auxiliary heads first), only the final head
  /// otherwise. Throws std::invalid_argument for a wrong image shape.
  std::vector<PoseOutput> forward(const Tensor& image, bool train_mode) const;

  /// Final-head prediction with the quaternion normalized (test time).
  /// Joint heads only.
  Pose predict(const Tensor& image) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::vector<Tensor> trunk_tensors() const;

  std::size_t parameter_count() const;
  std::size_t trunk_parameter_count() const;

  /// Layer table with output shapes, parameter counts and total bytes.
  std::string describe() const;

  Checkpoint to_checkpoint(const OptimizerState* state, std::uint64_t epochs_completed) const;
  /// Copies values (and velocity into `state` when given). Throws
  /// ConfigError on digest or parameter layout mismatch.
  void load_checkpoint(const Checkpoint& ckpt, OptimizerState* state);
  /// Copies trunk parameter values by name from `ckpt`, ignoring heads.
  void load_trunk(const Checkpoint& ckpt);

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
  // Indices into params_ for each conv layer, the feature layer and heads.
  std::vector<std::size_t> conv_param_index_;
  std::size_t feature_index_ = 0;
  std::vector<std::size_t> head_index_;
  std::vector<std::size_t> relu_taps_;  // trunk layer index of each tapped ReLU
};

/// ||x_hat - x|| + beta * ||q_hat - q||, with q flipped onto q_hat's
/// hemisphere first. q_hat is not normalized. Position-only outputs drop the
/// orientation term and orientation-only outputs the position term.
Tensor pose_loss(const PoseOutput& output, const Pose& target, double beta);

/// sum_h aux_head_weights[h] * pose_loss(outputs[h]).
Tensor total_loss(const std::vector<PoseOutput>& outputs, const Pose& target,
                  const ModelConfig& config);

/// ||q_hat - q|| after hemisphere alignment; the quantity beta balances.
double quaternion_difference_norm(const Quaternion& predicted_raw, const Quaternion& target);

/// median position error / median quaternion-difference norm, clamped to
/// [beta_min, beta_max]. Throws DegenerateError when an error is not positive.
double estimate_beta(double median_position_error, double median_quaternion_difference,
                     double beta_min = 1.0, double beta_max = 1e4);

}  // namespace posereg
