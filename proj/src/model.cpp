#include "posereg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "posereg/errors.hpp"
#include "posereg/ops.hpp"
#include "posereg/rng.hpp"

namespace posereg {

namespace {

std::string layer_to_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
      return "conv(" + std::to_string(l.channels) + "," + std::to_string(l.kernel) + "," +
             std::to_string(l.stride) + "," + std::to_string(l.padding) + ")";
    case LayerKind::MaxPool:
      return "maxpool(" + std::to_string(l.kernel) + "," + std::to_string(l.stride) + ")";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::GlobalAvgPool:
      return "gap";
    case LayerKind::Flatten:
      return "flatten";
  }
  return "?";
}

// Shape after each trunk layer, starting from [3, S, S]. Throws ConfigError
// naming the first layer that does not fit.
std::vector<Shape> chain_shapes(const ModelConfig& c) {
  std::vector<Shape> shapes;
  Shape s{3, c.input_size, c.input_size};
  for (std::size_t i = 0; i < c.trunk.size(); ++i) {
    const auto& l = c.trunk[i];
    const std::string where = "trunk layer " + std::to_string(i) + " " + layer_to_string(l);
    if (s.size() != 3 && l.kind != LayerKind::Relu) {
      throw ConfigError(where + ": expects a [C,H,W] input, got " + shape_to_string(s));
    }
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.channels == 0 || l.kernel == 0 || l.stride == 0) {
          throw ConfigError(where + ": channels, kernel and stride must be positive");
        }
        if (l.kernel > s[1] + 2 * l.padding || l.kernel > s[2] + 2 * l.padding) {
          throw ConfigError(where + ": kernel larger than padded input " + shape_to_string(s));
        }
        s = {l.channels, (s[1] + 2 * l.padding - l.kernel) / l.stride + 1,
             (s[2] + 2 * l.padding - l.kernel) / l.stride + 1};
        break;
      case LayerKind::MaxPool:
        if (l.kernel == 0 || l.stride == 0) {
          throw ConfigError(where + ": window and stride must be positive");
        }
        if (l.kernel > s[1] || l.kernel > s[2]) {
          throw ConfigError(where + ": window larger than input map " + shape_to_string(s));
        }
        s = {s[0], (s[1] - l.kernel) / l.stride + 1, (s[2] - l.kernel) / l.stride + 1};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::GlobalAvgPool:
        s = {s[0]};
        break;
      case LayerKind::Flatten:
        s = {shape_numel(s)};
        break;
    }
    shapes.push_back(s);
  }
  if (shapes.empty() || shapes.back().size() != 1) {
    throw ConfigError("trunk must end in gap or flatten to produce a vector");
  }
  return shapes;
}

std::vector<std::size_t> relu_layers(const std::vector<LayerSpec>& trunk) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    if (trunk[i].kind == LayerKind::Relu) out.push_back(i);
  }
  return out;
}

void fill_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

std::vector<LayerSpec> parse_trunk(const std::string& text) {
  static const std::regex token(R"(\s*([a-z]+)(?:\(([^)]*)\))?\s*)");
  std::vector<LayerSpec> out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), token);
  std::size_t consumed = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    if (std::size_t(it->position()) != consumed) break;
    consumed += std::size_t(it->length());
    const std::string name = (*it)[1];
    std::vector<std::size_t> args;
    {
      std::string a = (*it)[2];
      std::replace(a.begin(), a.end(), ',', ' ');
      std::istringstream in(a);
      long long v;
      while (in >> v) {
        if (v < 0) throw ConfigError("negative argument in trunk layer '" + it->str() + "'");
        args.push_back(std::size_t(v));
      }
    }
    LayerSpec l;
    if (name == "conv" && args.size() == 4) {
      l = {LayerKind::Conv, args[0], args[1], args[2], args[3]};
    } else if (name == "maxpool" && args.size() == 2) {
      l = {LayerKind::MaxPool, 0, args[0], args[1], 0};
    } else if (name == "relu" && args.empty()) {
      l.kind = LayerKind::Relu;
    } else if (name == "gap" && args.empty()) {
      l.kind = LayerKind::GlobalAvgPool;
    } else if (name == "flatten" && args.empty()) {
      l.kind = LayerKind::Flatten;
    } else {
      throw ConfigError("unrecognised trunk layer '" + it->str() + "'");
    }
    out.push_back(l);
  }
  if (consumed != text.size()) {
    throw ConfigError("cannot parse trunk near '" + text.substr(consumed) + "'");
  }
  return out;
}

std::string format_trunk(const std::vector<LayerSpec>& trunk) {
  std::string out;
  for (const auto& l : trunk) {
    if (!out.empty()) out += ' ';
    out += layer_to_string(l);
  }
  return out;
}

std::vector<LayerSpec> default_trunk() {
  return parse_trunk(
      "conv(16,7,2,3) relu maxpool(3,2) conv(32,3,1,1) relu maxpool(3,2) conv(64,3,1,1) relu flatten");
}

std::size_t head_outputs(HeadMode mode) {
  switch (mode) {
    case HeadMode::Joint:
      return 7;
    case HeadMode::PositionOnly:
      return 3;
    case HeadMode::OrientationOnly:
      return 4;
  }
  return 7;
}

std::string to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::Joint:
      return "joint";
    case HeadMode::PositionOnly:
      return "position";
    case HeadMode::OrientationOnly:
      return "orientation";
  }
  return "joint";
}

HeadMode parse_head_mode(const std::string& text) {
  if (text == "joint") return HeadMode::Joint;
  if (text == "position") return HeadMode::PositionOnly;
  if (text == "orientation") return HeadMode::OrientationOnly;
  throw ConfigError("unknown head_mode '" + text + "' (joint, position, orientation)");
}

void ModelConfig::validate() const {
  if (input_size == 0) throw ConfigError("input_size must be positive");
  if (feature_dim < 8) throw ConfigError("feature_dim must be at least 8");
  if (num_heads < 1 || num_heads > 3) throw ConfigError("num_heads must be 1, 2 or 3");
  if (aux_head_weights.size() != num_heads) {
    throw ConfigError("aux_head_weights has " + std::to_string(aux_head_weights.size()) +
                      " entries for " + std::to_string(num_heads) + " heads");
  }
  for (double w : aux_head_weights) {
    if (!(w >= 0.0)) throw ConfigError("aux_head_weights must be non-negative");
  }
  if (*std::max_element(aux_head_weights.begin(), aux_head_weights.end()) >
      aux_head_weights.back()) {
    throw ConfigError("the final head must carry the largest loss weight");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be non-negative");
  for (double e : position_extent) {
    if (!(e > 0.0)) throw ConfigError("position_extent must be strictly positive");
  }
  chain_shapes(*this);
  const auto relus = relu_layers(trunk);
  if (num_heads > 1 && relus.size() < num_heads) {
    throw ConfigError(std::to_string(num_heads - 1) + " auxiliary heads need " +
                      std::to_string(num_heads) + " ReLU layers in the trunk, found " +
                      std::to_string(relus.size()));
  }
  for (std::size_t h = 0; h + 1 < num_heads; ++h) {
    if (chain_shapes(*this)[relus[h]].size() != 3) {
      throw ConfigError("auxiliary head " + std::to_string(h) + " taps a non-spatial layer");
    }
  }
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("input_size", std::to_string(input_size));
  kv.set("trunk", format_trunk(trunk));
  kv.set("feature_dim", std::to_string(feature_dim));
  kv.set("num_heads", std::to_string(num_heads));
  std::string weights;
  for (double w : aux_head_weights) weights += (weights.empty() ? "" : " ") + format_double(w);
  kv.set("aux_head_weights", weights);
  kv.set("beta", format_double(beta));
  kv.set("position_extent", format_double(position_extent[0]) + " " +
                                format_double(position_extent[1]) + " " +
                                format_double(position_extent[2]));
  kv.set("head_mode", to_string(head_mode));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  if (kv.has("input_size")) c.input_size = std::size_t(kv.get_int("input_size"));
  if (kv.has("trunk")) c.trunk = parse_trunk(kv.get("trunk"));
  if (kv.has("feature_dim")) c.feature_dim = std::size_t(kv.get_int("feature_dim"));
  if (kv.has("num_heads")) {
    c.num_heads = std::size_t(kv.get_int("num_heads"));
    c.aux_head_weights = c.num_heads == 3 ? std::vector<double>{0.3, 0.3, 1.0}
                                          : std::vector<double>(c.num_heads, 1.0);
  }
  if (kv.has("aux_head_weights")) c.aux_head_weights = kv.get_doubles("aux_head_weights");
  if (kv.has("beta")) c.beta = kv.get_double("beta");
  if (kv.has("position_extent")) {
    auto e = kv.get_doubles("position_extent");
    if (e.size() != 3) throw ConfigError("position_extent needs 3 values");
    c.position_extent = {e[0], e[1], e[2]};
  }
  if (kv.has("head_mode")) c.head_mode = parse_head_mode(kv.get("head_mode"));
  c.validate();
  return c;
}

std::string ModelConfig::digest() const { return fnv1a_hex(to_key_values().to_string()); }

void init_position_rows(Tensor& weights, const Vec3& extent, double base_scale) {
  for (double e : extent) {
    if (!(e > 0.0)) throw ConfigError("position extent must be strictly positive");
  }
  if (weights.shape().size() != 2 || weights.dim(0) < 3) {
    throw std::invalid_argument("init_position_rows needs a [>=3, F] weight matrix, got " +
                                shape_to_string(weights.shape()));
  }
  const std::size_t cols = weights.dim(1);
  auto w = weights.values();
  for (std::size_t d = 0; d < 3; ++d) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += w[d * cols + c] * w[d * cols + c];
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw DegenerateError("position row " + std::to_string(d) + " is all zero");
    const double factor = base_scale * extent[d] / norm;
    for (std::size_t c = 0; c < cols; ++c) w[d * cols + c] *= factor;
  }
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  const auto shapes = chain_shapes(config_);
  std::size_t in_channels = 3;
  for (std::size_t i = 0; i < config_.trunk.size(); ++i) {
    const auto& l = config_.trunk[i];
    if (l.kind == LayerKind::Conv) {
      const std::string name = "trunk." + std::to_string(i);
      Tensor w = Tensor::zeros({l.channels, in_channels, l.kernel, l.kernel}, true);
      fill_uniform(w, in_channels * l.kernel * l.kernel, rng);
      conv_param_index_.push_back(params_.size());
      params_.push_back({name + ".weight", w, true});
      params_.push_back({name + ".bias", Tensor::zeros({l.channels}, true), true});
    }
    if (shapes[i].size() == 3) in_channels = shapes[i][0];
  }
  const std::size_t trunk_out = shapes.back()[0];
  {
    Tensor w = Tensor::zeros({config_.feature_dim, trunk_out}, true);
    fill_uniform(w, trunk_out, rng);
    feature_index_ = params_.size();
    params_.push_back({"feature.weight", w, true});
    params_.push_back({"feature.bias", Tensor::zeros({config_.feature_dim}, true), true});
  }
  const auto relus = relu_layers(config_.trunk);
  const std::size_t outs = head_outputs(config_.head_mode);
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    const bool final_head = h + 1 == config_.num_heads;
    std::size_t fan_in = config_.feature_dim;
    if (!final_head) {
      relu_taps_.push_back(relus[h]);
      fan_in = shapes[relus[h]][0];
    }
    Tensor w = Tensor::zeros({outs, fan_in}, true);
    fill_uniform(w, fan_in, rng);
    if (config_.head_mode != HeadMode::OrientationOnly) {
      init_position_rows(w, config_.position_extent, 1.0 / std::sqrt(double(fan_in)));
    }
    head_index_.push_back(params_.size());
    const std::string name = "head." + std::to_string(h);
    params_.push_back({name + ".weight", w, false});
    params_.push_back({name + ".bias", Tensor::zeros({outs}, true), false});
  }
}

Tensor Model::features(const Tensor& image) const {
  return forward(image, false).back().feature;
}

std::vector<PoseOutput> Model::forward(const Tensor& image, bool train_mode) const {
  if (image.shape() != Shape{3, config_.input_size, config_.input_size}) {
    throw std::invalid_argument("model expects a [3," + std::to_string(config_.input_size) + "," +
                                std::to_string(config_.input_size) + "] image, got " +
                                shape_to_string(image.shape()));
  }
  const bool with_aux = train_mode && config_.num_heads > 1;
  std::vector<Tensor> taps;
  Tensor x = image;
  std::size_t conv = 0;
  for (std::size_t i = 0; i < config_.trunk.size(); ++i) {
    const auto& l = config_.trunk[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& w = params_[conv_param_index_[conv]].tensor;
        const auto& b = params_[conv_param_index_[conv] + 1].tensor;
        x = conv2d(x, w, b, l.stride, l.padding);
        ++conv;
        break;
      }
      case LayerKind::Relu:
        x = relu(x);
        if (with_aux && taps.size() < relu_taps_.size() && relu_taps_[taps.size()] == i) {
          taps.push_back(x);
        }
        break;
      case LayerKind::MaxPool:
        x = max_pool2d(x, l.kernel, l.stride);
        break;
      case LayerKind::GlobalAvgPool:
        x = global_avg_pool(x);
        break;
      case LayerKind::Flatten:
        x = flatten(x);
        break;
    }
  }
  Tensor feature =
      relu(linear(x, params_[feature_index_].tensor, params_[feature_index_ + 1].tensor));

  std::vector<PoseOutput> outputs;
  if (with_aux) {
    for (std::size_t h = 0; h + 1 < config_.num_heads; ++h) {
      Tensor pooled = global_avg_pool(taps[h]);
      const auto& w = params_[head_index_[h]].tensor;
      const auto& b = params_[head_index_[h] + 1].tensor;
      outputs.push_back({linear(pooled, w, b), pooled});
    }
  }
  const auto last = head_index_.back();
  outputs.push_back({linear(feature, params_[last].tensor, params_[last + 1].tensor), feature});
  return outputs;
}

Pose Model::predict(const Tensor& image) const {
  if (config_.head_mode != HeadMode::Joint) {
    throw std::logic_error("predict() needs a joint position+orientation head");
  }
  NoGradGuard no_grad;
  auto out = forward(image, false);
  auto v = out.back().raw.values();
  return Pose({v[0], v[1], v[2]}, quat_normalize({v[3], v[4], v[5], v[6]}));
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::vector<Tensor> Model::trunk_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.trunk) out.push_back(p.tensor);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

std::size_t Model::trunk_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trunk) n += p.tensor.size();
  }
  return n;
}

std::string Model::describe() const {
  std::ostringstream out;
  const auto shapes = chain_shapes(config_);
  out << "input " << shape_to_string({3, config_.input_size, config_.input_size}) << "\n";
  std::size_t conv = 0;
  for (std::size_t i = 0; i < config_.trunk.size(); ++i) {
    out << "trunk." << i << " " << layer_to_string(config_.trunk[i]) << " -> "
        << shape_to_string(shapes[i]);
    if (config_.trunk[i].kind == LayerKind::Conv) {
      const auto idx = conv_param_index_[conv++];
      out << "  params " << params_[idx].tensor.size() + params_[idx + 1].tensor.size();
    }
    out << "\n";
  }
  out << "feature linear+relu -> [" << config_.feature_dim << "]  params "
      << params_[feature_index_].tensor.size() + params_[feature_index_ + 1].tensor.size()
      << "\n";
  for (std::size_t h = 0; h < head_index_.size(); ++h) {
    const auto idx = head_index_[h];
    out << "head." << h << (h + 1 == head_index_.size() ? " (final)" : " (auxiliary)") << " -> ["
        << head_outputs(config_.head_mode) << "]  params "
        << params_[idx].tensor.size() + params_[idx + 1].tensor.size() << "\n";
  }
  out << "total parameters " << parameter_count() << "\n";
  out << "parameter bytes " << parameter_count() * sizeof(double) << "\n";
  return out.str();
}

Checkpoint Model::to_checkpoint(const OptimizerState* state,
                                std::uint64_t epochs_completed) const {
  Checkpoint ckpt;
  ckpt.config_digest = config_.digest();
  ckpt.epochs_completed = epochs_completed;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    ParameterRecord r;
    r.name = p.name;
    r.shape = p.tensor.shape();
    r.values.assign(p.tensor.values().begin(), p.tensor.values().end());
    if (state && i < state->velocity.size()) {
      r.velocity = state->velocity[i];
    } else {
      r.velocity.assign(r.values.size(), 0.0);
    }
    ckpt.params.push_back(std::move(r));
  }
  return ckpt;
}

void Model::load_checkpoint(const Checkpoint& ckpt, OptimizerState* state) {
  if (ckpt.config_digest != config_.digest()) {
    throw ConfigError("checkpoint digest " + ckpt.config_digest +
                      " does not match model config digest " + config_.digest());
  }
  if (ckpt.params.size() != params_.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                      " parameters, model has " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& r = ckpt.params[i];
    auto& p = params_[i];
    if (r.name != p.name || r.shape != p.tensor.shape()) {
      throw ConfigError("checkpoint record " + r.name + " " + shape_to_string(r.shape) +
                        " does not match parameter " + p.name + " " +
                        shape_to_string(p.tensor.shape()));
    }
    std::copy(r.values.begin(), r.values.end(), p.tensor.values().begin());
    p.tensor.zero_grad();
  }
  if (state) {
    state->velocity.clear();
    for (const auto& r : ckpt.params) state->velocity.push_back(r.velocity);
  }
}

void Model::load_trunk(const Checkpoint& ckpt) {
  for (auto& p : params_) {
    if (!p.trunk) continue;
    auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                           [&](const ParameterRecord& r) { return r.name == p.name; });
    if (it == ckpt.params.end() || it->shape != p.tensor.shape()) {
      throw ConfigError("pretrained trunk lacks a matching '" + p.name + "' " +
                        shape_to_string(p.tensor.shape()));
    }
    std::copy(it->values.begin(), it->values.end(), p.tensor.values().begin());
  }
}

double quaternion_difference_norm(const Quaternion& predicted_raw, const Quaternion& target) {
  Quaternion t = target;
  if (quat_dot(predicted_raw, t) < 0.0) t = -t;
  const double dw = predicted_raw.w - t.w, dx = predicted_raw.x - t.x;
  const double dy = predicted_raw.y - t.y, dz = predicted_raw.z - t.z;
  return std::sqrt(dw * dw + dx * dx + dy * dy + dz * dz);
}

Tensor pose_loss(const PoseOutput& output, const Pose& target, double beta) {
  const auto& raw = output.raw;
  const auto& pos = target.position();
  Quaternion q = target.orientation();
  auto quat_term = [&](std::size_t offset) {
    auto v = raw.values();
    const Quaternion predicted{v[offset], v[offset + 1], v[offset + 2], v[offset + 3]};
    if (quat_dot(predicted, q) < 0.0) q = -q;
    Tensor q_target = Tensor::from({4}, {q.w, q.x, q.y, q.z});
    return scale(l2_norm_diff(slice(raw, offset, 4), q_target), beta);
  };
  Tensor x_target = Tensor::from({3}, {pos[0], pos[1], pos[2]});
  switch (raw.size()) {
    case 7:
      return add(l2_norm_diff(slice(raw, 0, 3), x_target), quat_term(3));
    case 3:
      return l2_norm_diff(raw, x_target);
    case 4:
      return quat_term(0);
    default:
      throw std::invalid_argument("pose output must have 7, 3 or 4 values, got " +
                                  std::to_string(raw.size()));
  }
}

Tensor total_loss(const std::vector<PoseOutput>& outputs, const Pose& target,
                  const ModelConfig& config) {
  if (outputs.size() != config.num_heads) {
    throw std::invalid_argument("total_loss got " + std::to_string(outputs.size()) +
                                " outputs for " + std::to_string(config.num_heads) + " heads");
  }
  if (outputs.size() == 1) return scale(pose_loss(outputs[0], target, config.beta),
                                        config.aux_head_weights[0]);
  Tensor sum;
  for (std::size_t h = 0; h < outputs.size(); ++h) {
    Tensor term = scale(pose_loss(outputs[h], target, config.beta), config.aux_head_weights[h]);
    sum = h == 0 ? term : add(sum, term);
  }
  return sum;
}

double estimate_beta(double median_position_error, double median_quaternion_difference,
                     double beta_min, double beta_max) {
  if (!(median_quaternion_difference > 0.0)) {
    throw DegenerateError("orientation error is zero; beta cannot be estimated");
  }
  if (!(median_position_error > 0.0)) {
    throw DegenerateError("position error is zero; beta cannot be estimated");
  }
  return std::clamp(median_position_error / median_quaternion_difference, beta_min, beta_max);
}

}  // namespace posereg
