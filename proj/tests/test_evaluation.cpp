#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "posereg/errors.hpp"
#include "posereg/evaluation.hpp"

using namespace posereg;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  Dataset data;
  ModelConfig mc;
  Tensor mean;
  CropSpec center{16, 12, CropMode::Center, 128};

  Fixture() {
    DatasetSpec s;
    s.seed = 6;
    s.intrinsics = Intrinsics{12.0, 8.0, 8.0, 16, 16};
    s.train_count = 20;
    s.test_count = 6;
    data = generate_dataset(s);
    mc.input_size = 12;
    mc.trunk = parse_trunk("conv(4,3,2,1) relu maxpool(2,2) conv(8,3,1,1) relu flatten");
    mc.feature_dim = 16;
    mean = compute_scene_mean(rescale_all(data.train, 16));
  }
};

std::vector<PoseSample> relabel_with_predictions(const Model& model, const Tensor& mean,
                                                 std::vector<PoseSample> samples) {
  const auto rescaled = rescale_all(samples, 16);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].pose = model.predict(center_input(rescaled[i], mean, 12));
  }
  return samples;
}

}  // namespace

TEST_CASE("assemble_report invariants") {
  std::vector<FrameRecord> frames;
  Rng rng(3);
  for (int i = 0; i < 37; ++i) {
    frames.push_back({"f" + std::to_string(100 - i), rng.uniform(0, 5), rng.uniform(0, 90)});
  }
  const ExperimentReport r = assemble_report(frames, true, true);
  CHECK(std::is_sorted(r.frames.begin(), r.frames.end(),
                       [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; }));
  std::vector<double> pos, ori;
  for (const auto& f : r.frames) {
    pos.push_back(f.position_error_m);
    ori.push_back(f.orientation_error_deg);
  }
  CHECK(r.median_position_m == percentile(pos, 50));
  CHECK(r.median_orientation_deg == percentile(ori, 50));
  bool has95 = false;
  for (auto [p, v] : r.position_percentiles) {
    CHECK(v == percentile(pos, p));
    has95 |= p == 95;
  }
  CHECK(has95);

  const auto hist = cumulative_histogram(pos);
  REQUIRE(hist.size() == pos.size());
  for (std::size_t i = 1; i < hist.size(); ++i) {
    CHECK(hist[i].first >= hist[i - 1].first);
    CHECK(hist[i].second >= hist[i - 1].second);
  }
  CHECK(hist.back().second == 1.0);
  CHECK_THROWS_AS(assemble_report({}, true, true), std::invalid_argument);

  const fs::path dir = fs::temp_directory_path() / "posereg_test_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_report(dir, "test_center", r);
  for (const char* suffix : {"_frames.csv", "_summary.csv", "_hist_position.csv",
                             "_hist_orientation.csv", "_timing.csv"}) {
    CHECK(fs::exists(dir / ("test_center" + std::string(suffix))));
  }
  const ExperimentReport back = read_report(dir, "test_center");
  CHECK(format_summary(back) == format_summary(r));
  CHECK(back.median_position_m == r.median_position_m);
}

TEST_CASE("evaluate: self-consistency and forward counts") {
  Fixture fx;
  const Model model(fx.mc, 2);
  const auto relabelled = relabel_with_predictions(model, fx.mean, fx.data.test);
  const ExperimentReport r = evaluate(model, fx.mean, relabelled, fx.center);
  CHECK(r.forwards_per_frame == 1);
  REQUIRE(r.frames.size() == relabelled.size());
  for (const auto& f : r.frames) {
    CHECK(f.position_error_m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.orientation_error_deg < 1e-6);
  }
  CHECK(r.model_bytes == model.to_checkpoint(nullptr, 0).parameter_bytes());

  CropSpec dense = fx.center;
  dense.mode = CropMode::Dense;
  const ExperimentReport d = evaluate(model, fx.mean, fx.data.test, dense);
  CHECK(d.forwards_per_frame == 128);
  dense.dense_count = 9;
  CHECK(evaluate(model, fx.mean, fx.data.test, dense).forwards_per_frame == 9);

  CHECK_THROWS_AS(evaluate(model, fx.mean, {}, fx.center), std::invalid_argument);
  CropSpec random = fx.center;
  random.mode = CropMode::Random;
  CHECK_THROWS_AS(evaluate(model, fx.mean, fx.data.test, random), std::invalid_argument);
}

TEST_CASE("evaluate: position-only heads report no orientation metric") {
  Fixture fx;
  fx.mc.head_mode = HeadMode::PositionOnly;
  const Model model(fx.mc, 2);
  const ExperimentReport r = evaluate(model, fx.mean, fx.data.test, fx.center);
  CHECK(r.has_position);
  CHECK_FALSE(r.has_orientation);
  CHECK(r.orientation_percentiles.empty());
  CHECK(format_summary(r).find("median_orientation") == std::string::npos);
  CHECK(format_summary(r).find("has_orientation,false") != std::string::npos);
}

TEST_CASE("constant baseline predicts one pose") {
  Fixture fx;
  const ExperimentReport r = constant_baseline(fx.data.train, fx.data.test);
  std::vector<std::array<double, 7>> v;
  for (const auto& s : fx.data.train) v.push_back(s.pose.to_vector());
  const Pose c = average_pose_vectors(v);
  for (std::size_t i = 0; i < fx.data.test.size(); ++i) {
    const auto& s = fx.data.test[i];
    const auto it = std::find_if(r.frames.begin(), r.frames.end(),
                                 [&](const FrameRecord& f) { return f.frame_id == s.frame_id; });
    REQUIRE(it != r.frames.end());
    CHECK(it->position_error_m == position_error_m(c.position(), s.pose.position()));
  }
}

TEST_CASE("nearest-neighbour baseline") {
  Fixture fx;
  const Model model(fx.mc, 4);
  const FeatureIndex index = build_feature_index(model, fx.mean, fx.data.train, fx.center);
  CHECK(index.entries.size() == fx.data.train.size());
  CHECK(index.dim == fx.mc.feature_dim);

  const ExperimentReport self = nn_baseline(index, model, fx.mean, fx.data.train, fx.center);
  for (const auto& f : self.frames) {
    CHECK(f.position_error_m == 0.0);
    CHECK(f.orientation_error_deg == 0.0);
  }

  // Every NN answer is a training pose, so its error on the interpolation
  // split is at least the distance from the true pose to the training set.
  const ExperimentReport interp = nn_baseline(index, model, fx.mean, fx.data.interp, fx.center);
  std::vector<double> nearest;
  for (const auto& s : fx.data.interp) {
    double best = 1e300;
    for (const auto& t : fx.data.train) best = std::min(best, position_error_m(s.pose.position(), t.pose.position()));
    nearest.push_back(best);
  }
  CHECK(interp.median_position_m >= median(nearest));
  CHECK(interp.median_position_m >= 0.5 * 0.5 * 0.85);  // half the nominal spacing, minus step jitter

  CHECK_THROWS_AS(nn_baseline(FeatureIndex{}, model, fx.mean, fx.data.test, fx.center),
                  std::invalid_argument);
}

TEST_CASE("sweep preconditions") {
  Fixture fx;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.crop = CropSpec{16, 12, CropMode::Random, 4};
  CHECK_THROWS_AS(beta_sweep(fx.data, {1, 10}, fx.mc, 1, tc, 10), ConfigError);
  CHECK_THROWS_AS(beta_sweep(fx.data, {1, 2, 5}, fx.mc, 1, tc, 10), ConfigError);
  CHECK_THROWS_AS(beta_sweep(fx.data, {-1, 10, 1000}, fx.mc, 1, tc, 10), ConfigError);
  CHECK_THROWS_AS(spacing_sweep(fx.data, 0.5, {1, 0.5}, fx.mc, 1, tc), ConfigError);
  CHECK_THROWS_AS(spacing_sweep(fx.data, 0.5, {0.5, 4.0}, fx.mc, 1, tc), ConfigError);  // 3 frames < batch
  CHECK_THROWS_AS(spacing_sweep(fx.data, 0.0, {0.5}, fx.mc, 1, tc), ConfigError);

  CHECK(sweep_learning_rate(1e-3, 10, 30) == 1e-3);
  CHECK(sweep_learning_rate(1e-3, 309, 30) == doctest::Approx(1e-4).epsilon(1e-12));
}

TEST_CASE("spacing sweep is step-matched") {
  Fixture fx;
  TrainConfig tc;
  tc.batch_size = 2;
  tc.epochs = 2;
  tc.eval_every = 1;
  tc.crop = CropSpec{16, 12, CropMode::Random, 4};
  const auto rows = spacing_sweep(fx.data, 0.5, {0.5, 1.0, 2.0}, fx.mc, 1, tc);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].stride == 1);
  CHECK(rows[1].stride == 2);
  CHECK(rows[2].stride == 4);
  CHECK(rows[1].train_count == 10);
  CHECK(rows[2].epochs == 8);
  for (const auto& r : rows) {
    CHECK_FALSE(r.diverged);
    CHECK(r.epochs * r.train_count == rows[0].epochs * rows[0].train_count);
  }
}

TEST_CASE("saliency maps") {
  Fixture fx;
  Model model(fx.mc, 5);
  const SaliencyResult s = saliency_map(model, fx.mean, fx.data.test[0], fx.center);
  CHECK(s.map.shape() == Shape{12, 12});
  double lo = 1.0, hi = 0.0;
  for (double v : s.map.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
  CHECK_FALSE(s.degenerate);

  for (auto& p : model.parameters()) {
    for (double& v : p.tensor.values()) v = 0.0;
  }
  const SaliencyResult flat = saliency_map(model, fx.mean, fx.data.test[0], fx.center);
  CHECK(flat.degenerate);
  for (double v : flat.map.values()) CHECK(v == 0.0);
}

TEST_CASE("efficiency report") {
  Fixture fx;
  const Model model(fx.mc, 1);
  CropSpec dense = fx.center;
  dense.mode = CropMode::Dense;
  const EfficiencyReport e = efficiency_report(model, fx.mean, fx.data.test[0], dense, 40, 5);
  CHECK(e.parameter_bytes == model.to_checkpoint(nullptr, 0).parameter_bytes());
  CHECK(e.parameter_bytes == 8 * model.parameter_count());
  CHECK(e.center_runs == 40);
  CHECK(e.dense_runs == 5);
  const double ratio = e.dense_ms / e.center_ms;
  MESSAGE("dense/center time ratio " << ratio);
  CHECK(ratio >= 128.0 / 3.0);
  CHECK(ratio <= 128.0 * 3.0);
}
