#include "posereg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "posereg/checkpoint.hpp"
#include "posereg/config_file.hpp"
#include "posereg/dataset.hpp"
#include "posereg/errors.hpp"
#include "posereg/evaluation.hpp"
#include "posereg/image.hpp"
#include "posereg/model.hpp"
#include "posereg/training.hpp"

namespace posereg {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Thrown for bad flags or flag combinations; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kModelKeys = {"input_size", "trunk",           "feature_dim",
                                          "num_heads",  "aux_head_weights", "beta",
                                          "position_extent", "head_mode"};

const std::set<std::string> kTrainKeys = {
    "batch_size", "epochs",    "base_lr",   "momentum",        "decay_factor",
    "decay_period", "seed",    "rescale_side", "crop_side",    "dense_count",
    "beta_auto",  "warmup_fraction", "beta_min", "beta_max",   "eval_every",
    "divergence_threshold"};

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

json kv_to_json(const KeyValues& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.entries()) j[k] = v;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw UsageError(flag + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(flag + " needs at least one value");
  return out;
}

// Options shared by every subcommand.
struct Common {
  std::string out;
  bool force = false;
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory (default: $POSEREG_OUTPUT_ROOT/<command>)");
  cmd->add_flag("--force", c.force, "Write into a non-empty output directory");
  cmd->add_option("--config", c.config, "Key-value settings file");
  cmd->add_option("--set", c.sets, "Override a setting: key=value (repeatable)");
}

// One command invocation: output directory plus its manifest.
class Run {
 public:
  Run(std::string command, const Common& common, bool allow_existing = false)
      : command_(std::move(command)) {
    if (common.out.empty()) {
      const char* root = std::getenv("POSEREG_OUTPUT_ROOT");
      out_ = fs::path(root && *root ? root : "runs") / command_;
    } else {
      out_ = common.out;
    }
    if (!allow_existing && !common.force && fs::exists(out_) && !fs::is_empty(out_)) {
      throw UsageError("output directory " + out_.string() +
                       " is not empty (use --force to write into it)");
    }
    manifest_["command"] = command_;
    manifest_["tool_version"] = kToolVersion;
    manifest_["config"] = json::object();
    manifest_["seeds"] = json::object();
    manifest_["inputs"] = json::object();
    manifest_["output"] = out_.string();
  }

  const fs::path& out() const { return out_; }
  json& manifest() { return manifest_; }

  // Creates the directory and writes the manifest ahead of any artifact.
  void begin() {
    fs::create_directories(out_);
    manifest_["start_time"] = now_iso8601();
    manifest_["end_time"] = nullptr;
    flush();
  }
  void finish() {
    manifest_["end_time"] = now_iso8601();
    flush();
  }

 private:
  void flush() { write_text(out_ / "manifest.json", manifest_.dump(2) + "\n"); }

  std::string command_;
  fs::path out_;
  json manifest_;
};

KeyValues load_settings(const Common& c) {
  KeyValues kv;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
    kv = KeyValues::load(c.config);
  }
  kv.apply_overrides(c.sets);
  for (const auto& [k, v] : kv.entries()) {
    if (!kModelKeys.count(k) && !kTrainKeys.count(k)) throw UsageError("unknown setting '" + k + "'");
  }
  return kv;
}

KeyValues subset(const KeyValues& kv, const std::set<std::string>& keys) {
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) {
    if (keys.count(k)) out.set(k, v);
  }
  return out;
}

struct Settings {
  ModelConfig model;
  TrainConfig train;
};

// Defaults < settings file < --set < dedicated flags (already folded into kv
// by the caller). Position extent defaults to the scene extent.
Settings resolve(KeyValues kv, const SceneSpec& scene) {
  if (kv.has("beta") && kv.get("beta") == "auto") {
    kv.erase("beta");
    kv.set("beta_auto", "true");
  }
  KeyValues mk = subset(kv, kModelKeys);
  if (!mk.has("position_extent")) {
    mk.set("position_extent", format_double(scene.extent[0]) + " " + format_double(scene.extent[1]) +
                                  " " + format_double(scene.extent[2]));
  }
  try {
    Settings s{ModelConfig::from_key_values(mk), TrainConfig::from_key_values(subset(kv, kTrainKeys))};
    if (!kv.has("input_size")) s.model.input_size = s.train.crop.crop_side;
    s.model.validate();
    s.train.crop.validate();
    return s;
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void check_train(const TrainConfig& c, std::size_t train_size) {
  try {
    c.validate(train_size);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

json settings_json(const Settings& s) {
  json j;
  j["model"] = kv_to_json(s.model.to_key_values());
  j["train"] = kv_to_json(s.train.to_key_values());
  return j;
}

Dataset open_dataset(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  return load_dataset(dir);
}

const std::vector<PoseSample>& pick_split(const Dataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "test") return d.test;
  if (split == "interp") {
    if (d.interp.empty()) throw std::runtime_error("dataset has no interp split");
    return d.interp;
  }
  throw UsageError("unknown split '" + split + "' (train, test or interp)");
}

// A trained model directory: model.txt, train_config.txt, checkpoint.bin,
// mean.bin. Settings overrides apply on top of the stored configs, so a
// changed model setting surfaces as a digest mismatch.
struct LoadedModel {
  Model model;
  Tensor mean;
  TrainConfig train;
};

LoadedModel open_model(const std::string& dir, const KeyValues& overrides) {
  if (dir.empty()) throw UsageError("--model is required");
  const fs::path d(dir);
  for (const char* f : {"model.txt", "checkpoint.bin", "mean.bin"}) {
    if (!fs::exists(d / f)) throw std::runtime_error("model directory lacks " + (d / f).string());
  }
  KeyValues mk = KeyValues::load(d / "model.txt");
  KeyValues tk = fs::exists(d / "train_config.txt") ? KeyValues::load(d / "train_config.txt") : KeyValues();
  for (const auto& [k, v] : overrides.entries()) {
    if (kModelKeys.count(k)) mk.set(k, v);
    if (kTrainKeys.count(k)) tk.set(k, v);
  }
  LoadedModel m{Model(ModelConfig::from_key_values(mk), 0), read_mean_image(d / "mean.bin"),
                TrainConfig::from_key_values(tk)};
  const Checkpoint ckpt = read_checkpoint(d / "checkpoint.bin");
  if (ckpt.config_digest != m.model.config().digest()) {
    throw ConfigError("checkpoint config digest " + ckpt.config_digest +
                      " does not match the resolved model config digest " +
                      m.model.config().digest() + "; refusing to continue");
  }
  m.model.load_checkpoint(ckpt, nullptr);
  return m;
}

// ---------------------------------------------------------------- commands

struct GenDataArgs {
  std::uint64_t seed = 1;
  std::string extent = "10,10,2";
  double spacing = 0.5;
  std::optional<double> test_spacing;
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  double interp_offset = 0.5;
};

int cmd_gen_data(const Common& common, const GenDataArgs& a, std::ostream& out) {
  DatasetSpec spec;
  spec.seed = a.seed;
  const auto e = parse_list(a.extent, "--extent");
  if (e.size() != 3) throw UsageError("--extent needs three values");
  spec.extent = {e[0], e[1], e[2]};
  spec.spacing = a.spacing;
  spec.test_spacing = a.test_spacing.value_or(a.spacing);
  spec.train_count = a.train_count;
  spec.test_count = a.test_count;
  spec.interp_offset = a.interp_offset;
  try {
    spec.validate();
  } catch (const ConfigError& err) {
    throw UsageError(err.what());
  }
  Run run("gen-data", common);
  KeyValues kv;
  kv.set("seed", std::to_string(spec.seed));
  kv.set("extent", a.extent);
  kv.set("spacing", format_double(spec.spacing));
  kv.set("test_spacing", format_double(spec.test_spacing));
  kv.set("train_count", std::to_string(spec.train_count));
  kv.set("test_count", std::to_string(spec.test_count));
  kv.set("interp_offset", format_double(spec.interp_offset));
  run.manifest()["config"] = kv_to_json(kv);
  run.manifest()["seeds"]["scene"] = spec.seed;
  run.begin();
  const Dataset data = generate_dataset(spec);
  write_dataset(run.out(), data);
  write_text(run.out() / "dataset.txt", kv.to_string());
  run.finish();
  out << "wrote " << data.train.size() << " train, " << data.test.size() << " test, "
      << data.interp.size() << " interp frames to " << run.out().string() << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  std::optional<std::size_t> epochs;
  std::string beta;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> eval_every;
  std::string init;
  bool resume = false;
};

KeyValues fold_train_flags(KeyValues kv, const TrainArgs& a) {
  if (a.epochs) kv.set("epochs", std::to_string(*a.epochs));
  if (!a.beta.empty()) kv.set("beta", a.beta);
  if (a.lr) kv.set("base_lr", format_double(*a.lr));
  if (a.batch_size) kv.set("batch_size", std::to_string(*a.batch_size));
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  if (a.eval_every) kv.set("eval_every", std::to_string(*a.eval_every));
  return kv;
}

int cmd_train(const Common& common, const TrainArgs& a, std::ostream& out) {
  const KeyValues kv = fold_train_flags(load_settings(common), a);
  if (a.data.empty()) throw UsageError("--data is required");
  if (!fs::is_directory(a.data)) throw std::runtime_error("dataset directory not found: " + a.data);
  Run run("train", common, a.resume);
  const Dataset data = load_dataset(a.data);
  Settings s = resolve(kv, data.scene);
  check_train(s.train, data.train.size());

  std::optional<Checkpoint> resume;
  if (a.resume) {
    const auto ck = run.out() / "checkpoint.bin";
    if (!fs::exists(ck)) throw std::runtime_error("--resume: no checkpoint at " + ck.string());
    // The stored model config wins for the architecture and beta.
    s.model = ModelConfig::from_key_values(KeyValues::load(run.out() / "model.txt"));
    resume = read_checkpoint(ck);
    if (resume->config_digest != s.model.digest()) {
      throw ConfigError("checkpoint config digest " + resume->config_digest +
                        " does not match model config digest " + s.model.digest());
    }
  }

  run.manifest()["config"] = settings_json(s);
  run.manifest()["seeds"]["model"] = s.train.seed;
  run.manifest()["seeds"]["shuffle"] = s.train.seed;
  run.manifest()["inputs"]["data"] = a.data;
  if (!a.init.empty()) run.manifest()["inputs"]["init"] = a.init;
  run.manifest()["resume"] = a.resume;
  run.begin();

  Model model(s.model, s.train.seed);
  if (!a.init.empty()) model.load_trunk(read_checkpoint(a.init));
  write_text(run.out() / "train_config.txt", s.train.to_key_values().to_string());

  std::vector<TrainLogRow> log;
  if (a.resume && fs::exists(run.out() / "train_log.csv")) {
    for (const auto& r : read_train_log(run.out() / "train_log.csv")) {
      if (r.epoch <= resume->epochs_completed) log.push_back(r);
    }
  }
  TrainOptions opts;
  opts.validation = &data.test;
  opts.checkpoint_dir = run.out();
  opts.resume = resume ? &*resume : nullptr;
  opts.on_eval = [&](const TrainLogRow& row) {
    write_text(run.out() / "model.txt", model.config().to_key_values().to_string());
    log.push_back(row);
    write_train_log(run.out() / "train_log.csv", log);
    return true;
  };
  if (!s.train.beta_auto || a.resume) {
    write_text(run.out() / "model.txt", model.config().to_key_values().to_string());
  }
  TrainResult r;
  try {
    r = train(model, data.train, s.train, opts);
  } catch (const DivergenceError& e) {
    run.manifest()["failure"] = e.what();
    run.finish();
    throw;
  }
  write_text(run.out() / "model.txt", model.config().to_key_values().to_string());
  write_train_log(run.out() / "train_log.csv", log);
  write_timing_csv(run.out() / "train_timing.csv", r.log);
  write_text(run.out() / "describe.txt", model.describe());
  if (r.estimated_beta) {
    run.manifest()["estimated_beta"] = *r.estimated_beta;
    out << "estimated beta " << format_double(*r.estimated_beta) << " from a warm-up run\n";
  }
  run.manifest()["config"] = settings_json({model.config(), s.train});
  run.finish();
  if (!log.empty()) {
    const auto& last = log.back();
    out << "epoch " << last.epoch << ": train loss " << format_double(last.train_loss)
        << ", val median " << format_double(last.val_median_position_m) << " m, "
        << format_double(last.val_median_orientation_deg) << " deg\n";
  } else {
    out << "wrote initialization checkpoint (0 epochs)\n";
  }
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string mode = "center";
  std::string split = "test";
  std::optional<std::size_t> dense_count;
};

int cmd_eval(const Common& common, const EvalArgs& a, std::ostream& out) {
  const KeyValues overrides = load_settings(common);
  const CropMode mode = parse_crop_mode(a.mode);
  if (mode == CropMode::Random) throw UsageError("--mode must be center or dense");
  Run run("eval", common);
  const Dataset data = open_dataset(a.data);
  const auto& split = pick_split(data, a.split);
  LoadedModel m = open_model(a.model, overrides);
  CropSpec crop = m.train.crop;
  crop.mode = mode;
  if (a.dense_count) crop.dense_count = *a.dense_count;
  run.manifest()["config"] = {{"mode", a.mode}, {"split", a.split},
                              {"dense_count", crop.dense_count},
                              {"model", kv_to_json(m.model.config().to_key_values())}};
  run.manifest()["inputs"] = {{"data", a.data}, {"model", a.model}};
  run.begin();
  const ExperimentReport rep = evaluate(m.model, m.mean, split, crop);
  write_report(run.out(), a.split + "_" + a.mode, rep);
  run.finish();
  out << a.split << ' ' << a.mode << ": " << rep.forwards_per_frame << " forwards/frame, median "
      << format_double(rep.median_position_m) << " m, " << format_double(rep.median_orientation_deg)
      << " deg\n";
  return 0;
}

int cmd_nn(const Common& common, const EvalArgs& a, std::ostream& out) {
  const KeyValues overrides = load_settings(common);
  Run run("nn", common);
  const Dataset data = open_dataset(a.data);
  const auto& split = pick_split(data, a.split);
  LoadedModel m = open_model(a.model, overrides);
  CropSpec crop = m.train.crop;
  crop.mode = CropMode::Center;
  run.manifest()["config"] = {{"split", a.split},
                              {"model", kv_to_json(m.model.config().to_key_values())}};
  run.manifest()["inputs"] = {{"data", a.data}, {"model", a.model}};
  run.begin();
  const FeatureIndex index = build_feature_index(m.model, m.mean, data.train, crop);
  write_feature_index(run.out() / "features.csv", index);
  const ExperimentReport rep = nn_baseline(index, m.model, m.mean, split, crop);
  write_report(run.out(), a.split + "_nn", rep);
  run.finish();
  out << a.split << " nearest neighbour: median " << format_double(rep.median_position_m) << " m, "
      << format_double(rep.median_orientation_deg) << " deg\n";
  return 0;
}

struct SaliencyArgs {
  std::string data;
  std::string model;
  std::string split = "test";
  std::size_t count = 0;  // 0 = all frames
};

int cmd_saliency(const Common& common, const SaliencyArgs& a, std::ostream& out) {
  const KeyValues overrides = load_settings(common);
  Run run("saliency", common);
  const Dataset data = open_dataset(a.data);
  const auto& split = pick_split(data, a.split);
  LoadedModel m = open_model(a.model, overrides);
  CropSpec crop = m.train.crop;
  crop.mode = CropMode::Center;
  run.manifest()["config"] = {{"split", a.split}, {"count", a.count}};
  run.manifest()["inputs"] = {{"data", a.data}, {"model", a.model}};
  run.begin();
  fs::create_directories(run.out() / "maps");
  std::ofstream table(run.out() / "saliency.csv");
  table << "frame_id,landmark_mean,background_mean,ratio,degenerate\n";
  const std::size_t n = a.count == 0 ? split.size() : std::min(a.count, split.size());
  std::size_t strong = 0, measured = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = saliency_map(m.model, m.mean, split[i], crop);
    fs::path map_path = run.out() / "maps" / split[i].frame_id;
    map_path.replace_extension(".pgm");
    fs::create_directories(map_path.parent_path());
    write_pgm(map_path, r.map);
    const double ratio = r.has_mask && r.background_mean > 0.0 ? r.landmark_mean / r.background_mean : 0.0;
    if (r.has_mask) {
      ++measured;
      if (ratio >= 2.0) ++strong;
    }
    table << split[i].frame_id << ',' << format_double(r.landmark_mean) << ','
          << format_double(r.background_mean) << ',' << format_double(ratio) << ','
          << (r.degenerate ? "true" : "false") << '\n';
  }
  table.close();
  run.finish();
  out << strong << " of " << measured << " frames with landmark saliency >= 2x background\n";
  return 0;
}

struct SweepArgs {
  std::string data;
  std::string betas = "1,10,100,1000,10000";
  std::optional<double> reference_beta;
  std::string spacings = "0.5,1,2,4";
  std::optional<double> base_spacing;
  TrainArgs train;
};

int cmd_sweep_beta(const Common& common, const SweepArgs& a, std::ostream& out) {
  KeyValues kv = fold_train_flags(load_settings(common), a.train);
  const auto betas = parse_list(a.betas, "--betas");
  const auto [lo, hi] = std::minmax_element(betas.begin(), betas.end());
  if (betas.size() < 3 || !(*lo > 0.0) || *hi / *lo < 100.0) {
    throw UsageError("--betas needs at least 3 positive values spanning two orders of magnitude");
  }
  Run run("sweep-beta", common);
  const Dataset data = open_dataset(a.data);
  const Settings s = resolve(kv, data.scene);
  check_train(s.train, data.train.size());
  const double reference = a.reference_beta.value_or(s.model.beta);
  run.manifest()["config"] = settings_json(s);
  run.manifest()["config"]["betas"] = betas;
  run.manifest()["config"]["reference_beta"] = reference;
  run.manifest()["seeds"]["model"] = s.train.seed;
  run.manifest()["inputs"]["data"] = a.data;
  run.begin();
  const auto result = beta_sweep(data, betas, s.model, s.train.seed, s.train, reference);
  write_beta_sweep(run.out() / "beta_sweep.csv", result);
  run.finish();
  for (const auto& r : result.rows) {
    out << "beta " << format_double(r.beta) << ": "
        << (r.diverged ? std::string("diverged")
                       : format_double(r.median_position_m) + " m, " +
                             format_double(r.median_orientation_deg) + " deg")
        << '\n';
  }
  out << "selected beta " << format_double(result.selected_beta) << '\n';
  return 0;
}

int cmd_sweep_spacing(const Common& common, const SweepArgs& a, std::ostream& out) {
  KeyValues kv = fold_train_flags(load_settings(common), a.train);
  const auto spacings = parse_list(a.spacings, "--spacings");
  for (std::size_t i = 0; i < spacings.size(); ++i) {
    if (!(spacings[i] > 0.0) || (i > 0 && spacings[i] <= spacings[i - 1])) {
      throw UsageError("--spacings must be positive and increasing");
    }
  }
  Run run("sweep-spacing", common);
  const Dataset data = open_dataset(a.data);
  double base = 0.0;
  if (a.base_spacing) {
    base = *a.base_spacing;
  } else if (fs::exists(fs::path(a.data) / "dataset.txt")) {
    base = KeyValues::load(fs::path(a.data) / "dataset.txt").get_double("spacing");
  } else {
    throw UsageError("--base-spacing is required when the dataset has no dataset.txt");
  }
  const Settings s = resolve(kv, data.scene);
  check_train(s.train, data.train.size());
  run.manifest()["config"] = settings_json(s);
  run.manifest()["config"]["spacings"] = spacings;
  run.manifest()["config"]["base_spacing"] = base;
  run.manifest()["seeds"]["model"] = s.train.seed;
  run.manifest()["inputs"]["data"] = a.data;
  run.begin();
  const auto rows = spacing_sweep(data, base, spacings, s.model, s.train.seed, s.train);
  write_spacing_sweep(run.out() / "spacing_sweep.csv", rows);
  run.finish();
  for (const auto& r : rows) {
    out << "spacing " << format_double(r.spacing) << " m (" << r.train_count << " frames): "
        << (r.diverged ? std::string("diverged")
                       : format_double(r.median_position_m) + " m, " +
                             format_double(r.median_orientation_deg) + " deg")
        << '\n';
  }
  return 0;
}

int cmd_compare_heads(const Common& common, const SweepArgs& a, std::ostream& out) {
  KeyValues kv = fold_train_flags(load_settings(common), a.train);
  Run run("compare-heads", common);
  const Dataset data = open_dataset(a.data);
  const Settings s = resolve(kv, data.scene);
  check_train(s.train, data.train.size());
  run.manifest()["config"] = settings_json(s);
  run.manifest()["seeds"]["model"] = s.train.seed;
  run.manifest()["inputs"]["data"] = a.data;
  run.begin();
  const auto rows = joint_vs_separate(data, s.model, s.train.seed, s.train);
  write_head_comparison(run.out() / "heads.csv", rows);
  run.finish();
  for (const auto& r : rows) {
    out << r.variant << ':';
    if (r.has_position) out << ' ' << format_double(r.median_position_m) << " m";
    if (r.has_orientation) out << ' ' << format_double(r.median_orientation_deg) << " deg";
    out << '\n';
  }
  return 0;
}

int cmd_pretrain(const Common& common, const TrainArgs& a, std::ostream& out) {
  const KeyValues kv = fold_train_flags(load_settings(common), a);
  Run run("pretrain", common);
  const Dataset data = open_dataset(a.data);
  const Settings s = resolve(kv, data.scene);
  check_train(s.train, data.train.size());
  run.manifest()["config"] = settings_json(s);
  run.manifest()["seeds"]["model"] = s.train.seed;
  run.manifest()["inputs"]["data"] = a.data;
  run.begin();
  Model model(s.model, s.train.seed);
  const std::size_t trunk_before = model.trunk_parameter_count();
  const PretrainResult r = pretrain_classifier(model, data.train, s.train, &data.test);
  write_checkpoint(run.out() / "checkpoint.bin", r.checkpoint);
  write_text(run.out() / "model.txt", model.config().to_key_values().to_string());
  {
    std::ofstream table(run.out() / "pretext_log.csv");
    table << "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
      table << e + 1 << ',' << format_double(r.epoch_loss[e]) << '\n';
    }
  }
  KeyValues summary;
  summary.set("num_classes", std::to_string(r.num_classes));
  summary.set("heldout_accuracy", format_double(r.heldout_accuracy));
  summary.set("chance", format_double(1.0 / double(r.num_classes)));
  summary.set("trunk_parameters", std::to_string(model.trunk_parameter_count()));
  write_text(run.out() / "pretext_summary.txt", summary.to_string());
  if (model.trunk_parameter_count() != trunk_before) {
    throw std::logic_error("pretext training changed the trunk parameter count");
  }
  run.finish();
  out << "pretext accuracy " << format_double(r.heldout_accuracy) << " over " << r.num_classes
      << " classes (chance " << format_double(1.0 / double(r.num_classes)) << ")\n";
  return 0;
}

struct ReportArgs {
  std::string eval_dir;
  std::string model;
  std::string data;
  std::size_t runs = 100;
};

int cmd_report(const Common& common, const ReportArgs& a, std::ostream& out) {
  if (a.eval_dir.empty() && a.model.empty()) throw UsageError("give --eval-dir and/or --model");
  const KeyValues overrides = load_settings(common);
  Run run("report", common);
  run.manifest()["inputs"] = {{"eval_dir", a.eval_dir}, {"model", a.model}, {"data", a.data}};
  std::ostringstream text;
  std::optional<LoadedModel> m;
  std::optional<Dataset> data;
  if (!a.eval_dir.empty() && !fs::is_directory(a.eval_dir)) {
    throw std::runtime_error("evaluation directory not found: " + a.eval_dir);
  }
  if (!a.model.empty()) m.emplace(open_model(a.model, overrides));
  if (!a.data.empty()) data.emplace(open_dataset(a.data));
  run.begin();

  if (!a.eval_dir.empty()) {
    std::vector<std::string> prefixes;
    for (const auto& entry : fs::directory_iterator(a.eval_dir)) {
      const std::string name = entry.path().filename().string();
      const std::string suffix = "_summary.csv";
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        prefixes.push_back(name.substr(0, name.size() - suffix.size()));
      }
    }
    if (prefixes.empty()) throw std::runtime_error("no *_summary.csv files in " + a.eval_dir);
    std::sort(prefixes.begin(), prefixes.end());
    for (const auto& p : prefixes) {
      const ExperimentReport r = read_report(a.eval_dir, p);
      std::ifstream in(fs::path(a.eval_dir) / (p + "_summary.csv"));
      std::stringstream stored;
      stored << in.rdbuf();
      if (format_summary(r) != stored.str()) {
        throw std::runtime_error(p + ": medians recomputed from per-frame records differ from the summary");
      }
      text << p << ": " << r.frames.size() << " frames";
      if (r.has_position) text << ", median position " << format_double(r.median_position_m) << " m";
      if (r.has_orientation) {
        text << ", median orientation " << format_double(r.median_orientation_deg) << " deg";
      }
      for (const auto& [pc, v] : r.position_percentiles) {
        if (pc == 95) text << ", p95 position " << format_double(v) << " m";
      }
      text << '\n';
    }
  }
  if (m) {
    text << m->model.describe();
    if (data) {
      CropSpec crop = m->train.crop;
      const auto eff = efficiency_report(m->model, m->mean, data->test.front(), crop, a.runs);
      text << "parameter bytes " << eff.parameter_bytes << ", center " << format_double(eff.center_ms)
           << " ms/frame, dense (" << crop.dense_count << " crops) " << format_double(eff.dense_ms)
           << " ms/frame\n";
      write_text(run.out() / "efficiency.csv",
                 "parameter_bytes,center_ms,dense_ms,center_runs,dense_runs\n" +
                     std::to_string(eff.parameter_bytes) + "," + format_double(eff.center_ms) + "," +
                     format_double(eff.dense_ms) + "," + std::to_string(eff.center_runs) + "," +
                     std::to_string(eff.dense_runs) + "\n");
    }
  }
  write_text(run.out() / "report.txt", text.str());
  run.finish();
  out << text.str();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Camera pose regression from single images"};
  app.name("posereg");
  app.require_subcommand(1);

  Common common;
  std::function<int()> action;

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Render a synthetic dataset");
  add_common(g, common);
  g->add_option("--seed", gen.seed, "Scene and trajectory seed");
  g->add_option("--extent", gen.extent, "Scene extent x,y,z in metres");
  g->add_option("--spacing", gen.spacing, "Metres between training frames");
  g->add_option("--test-spacing", gen.test_spacing, "Metres between test frames");
  g->add_option("--train-count", gen.train_count);
  g->add_option("--test-count", gen.test_count);
  g->add_option("--interp-offset", gen.interp_offset,
                "Lateral offset of the interpolation path, in units of spacing");
  g->callback([&] { action = [&] { return cmd_gen_data(common, gen, out); }; });

  auto add_train_flags = [](CLI::App* cmd, TrainArgs& t) {
    cmd->add_option("--data", t.data, "Dataset directory")->required();
    cmd->add_option("--epochs", t.epochs);
    cmd->add_option("--beta", t.beta, "Scale factor, or 'auto'");
    cmd->add_option("--lr", t.lr, "Base learning rate");
    cmd->add_option("--batch-size", t.batch_size);
    cmd->add_option("--seed", t.seed, "Model and shuffle seed");
    cmd->add_option("--eval-every", t.eval_every);
  };

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a pose regressor");
  add_common(t, common);
  add_train_flags(t, tr);
  t->add_option("--init", tr.init, "Warm-start the trunk from this checkpoint");
  t->add_flag("--resume", tr.resume, "Continue from the checkpoint in --out");
  t->callback([&] { action = [&] { return cmd_train(common, tr, out); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a trained model");
  add_common(e, common);
  e->add_option("--data", ev.data)->required();
  e->add_option("--model", ev.model, "Training output directory")->required();
  e->add_option("--mode", ev.mode, "center or dense");
  e->add_option("--split", ev.split, "train, test or interp");
  e->add_option("--dense-count", ev.dense_count);
  e->callback([&] { action = [&] { return cmd_eval(common, ev, out); }; });

  EvalArgs nn;
  auto* n = app.add_subcommand("nn", "Nearest-neighbour feature baseline");
  add_common(n, common);
  n->add_option("--data", nn.data)->required();
  n->add_option("--model", nn.model)->required();
  n->add_option("--split", nn.split, "train, test or interp");
  n->callback([&] { action = [&] { return cmd_nn(common, nn, out); }; });

  SaliencyArgs sal;
  auto* s = app.add_subcommand("saliency", "Gradient saliency maps");
  add_common(s, common);
  s->add_option("--data", sal.data)->required();
  s->add_option("--model", sal.model)->required();
  s->add_option("--split", sal.split);
  s->add_option("--count", sal.count, "Frames to process (0 = all)");
  s->callback([&] { action = [&] { return cmd_saliency(common, sal, out); }; });

  SweepArgs sweep;
  auto* sb = app.add_subcommand("sweep-beta", "Train one model per beta");
  add_common(sb, common);
  add_train_flags(sb, sweep.train);
  sb->add_option("--betas", sweep.betas);
  sb->add_option("--reference-beta", sweep.reference_beta,
                 "Beta at which the base learning rate applies unscaled");
  sb->callback([&] {
    sweep.data = sweep.train.data;
    action = [&] { return cmd_sweep_beta(common, sweep, out); };
  });

  auto* ss = app.add_subcommand("sweep-spacing", "Train on sparser subsets of the trajectory");
  add_common(ss, common);
  add_train_flags(ss, sweep.train);
  ss->add_option("--spacings", sweep.spacings);
  ss->add_option("--base-spacing", sweep.base_spacing);
  ss->callback([&] {
    sweep.data = sweep.train.data;
    action = [&] { return cmd_sweep_spacing(common, sweep, out); };
  });

  auto* ch = app.add_subcommand("compare-heads", "Joint vs. separate position/orientation models");
  add_common(ch, common);
  add_train_flags(ch, sweep.train);
  ch->callback([&] {
    sweep.data = sweep.train.data;
    action = [&] { return cmd_compare_heads(common, sweep, out); };
  });

  TrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Landmark-classification pretext training");
  add_common(p, common);
  add_train_flags(p, pre);
  p->callback([&] { action = [&] { return cmd_pretrain(common, pre, out); }; });

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Reprint evaluation summaries and model size/speed");
  add_common(r, common);
  r->add_option("--eval-dir", rep.eval_dir);
  r->add_option("--model", rep.model);
  r->add_option("--data", rep.data, "Dataset for timing inference");
  r->add_option("--runs", rep.runs, "Timed center-crop inferences");
  r->callback([&] { action = [&] { return cmd_report(common, rep, out); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace posereg
