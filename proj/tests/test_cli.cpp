#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "posereg/checkpoint.hpp"
#include "posereg/cli.hpp"
#include "posereg/dataset.hpp"

using namespace posereg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// One small dataset and a briefly trained model shared by the tests below.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "posereg_test_cli";
  fs::path data = root / "data";
  fs::path model = root / "model";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(cli({"gen-data", "--out", data.string(), "--seed", "4", "--train-count", "16",
                 "--test-count", "4"})
                .code == 0);
    REQUIRE(cli({"train", "--data", data.string(), "--out", model.string(), "--epochs", "1",
                 "--batch-size", "8", "--eval-every", "1"})
                .code == 0);
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("cli: gen-data writes disjoint, reproducible splits") {
  auto& w = workspace();
  const auto train = read_label_file(w.data / "train_labels.txt").entries;
  const auto test = read_label_file(w.data / "test_labels.txt").entries;
  CHECK(train.size() == 16);
  CHECK(test.size() == 4);
  std::set<std::string> ids;
  for (const auto& e : train) ids.insert(e.frame_id);
  for (const auto& e : test) CHECK(ids.count(e.frame_id) == 0);

  const fs::path again = w.root / "data2";
  REQUIRE(cli({"gen-data", "--out", again.string(), "--seed", "4", "--train-count", "16",
               "--test-count", "4"})
              .code == 0);
  for (const char* f : {"train_labels.txt", "test_labels.txt", "interp_labels.txt", "scene.txt"}) {
    CHECK(slurp(w.data / f) == slurp(again / f));
  }
  CHECK(slurp(w.data / "images" / (train[3].frame_id)) == slurp(again / "images" / (train[3].frame_id)));
}

TEST_CASE("cli: usage errors exit 2 and create nothing") {
  auto& w = workspace();
  const fs::path bad = w.root / "bad";
  const Result r = cli({"gen-data", "--out", bad.string(), "--spacing", "0"});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  CHECK_FALSE(fs::exists(bad));

  CHECK(cli({"train", "--data", w.data.string(), "--out", bad.string(), "--set", "nonsense=1"}).code == 2);
  CHECK(cli({"train", "--data", w.data.string(), "--out", bad.string(), "--batch-size", "64"}).code == 2);
  CHECK_FALSE(fs::exists(bad));
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);

  // Refuses to overwrite without --force.
  const Result again = cli({"gen-data", "--out", w.data.string()});
  CHECK(again.code == 2);
  CHECK(again.err.find("--force") != std::string::npos);
}

TEST_CASE("cli: --help exits 0") {
  const Result r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("gen-data") != std::string::npos);
  CHECK(cli({"train", "--help"}).code == 0);
}

TEST_CASE("cli: missing inputs are named") {
  auto& w = workspace();
  const Result r = cli({"train", "--data", (w.root / "nowhere").string(), "--out", (w.root / "t").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("nowhere") != std::string::npos);
}

TEST_CASE("cli: train writes its artifacts and manifest") {
  auto& w = workspace();
  for (const char* f : {"checkpoint.bin", "mean.bin", "model.txt", "train_config.txt",
                        "train_log.csv", "manifest.json", "describe.txt"}) {
    CHECK(fs::exists(w.model / f));
  }
  const auto m = nlohmann::json::parse(slurp(w.model / "manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["tool_version"] == kToolVersion);
  CHECK_FALSE(m["end_time"].is_null());
  CHECK(m.contains("seeds"));
  CHECK(m.contains("config"));
  CHECK(m.contains("inputs"));
  CHECK(read_checkpoint(w.model / "checkpoint.bin").epochs_completed == 1);

  const fs::path zero = w.root / "zero";
  CHECK(cli({"train", "--data", w.data.string(), "--out", zero.string(), "--epochs", "0",
             "--batch-size", "8"})
            .code == 0);
  CHECK(read_checkpoint(zero / "checkpoint.bin").epochs_completed == 0);
}

TEST_CASE("cli: eval, nn and report") {
  auto& w = workspace();
  const fs::path ev = w.root / "eval";
  REQUIRE(cli({"eval", "--data", w.data.string(), "--model", w.model.string(), "--out", ev.string()}).code == 0);
  const Result dense = cli({"eval", "--data", w.data.string(), "--model", w.model.string(), "--out",
                            ev.string(), "--force", "--mode", "dense"});
  REQUIRE(dense.code == 0);
  CHECK(slurp(ev / "test_dense_summary.csv").find("forwards_per_frame,128") != std::string::npos);
  CHECK(slurp(ev / "test_center_summary.csv").find("forwards_per_frame,1\n") != std::string::npos);

  const Result rep = cli({"report", "--eval-dir", ev.string(), "--out", (w.root / "rep").string()});
  REQUIRE(rep.code == 0);
  for (const char* prefix : {"test_center", "test_dense"}) {
    const std::string summary = slurp(ev / (std::string(prefix) + "_summary.csv"));
    const auto at = summary.find("median_position_m,");
    REQUIRE(at != std::string::npos);
    const std::string value = summary.substr(at + 18, summary.find('\n', at) - at - 18);
    CHECK(rep.out.find(std::string(prefix) + ": 4 frames, median position " + value + " m") != std::string::npos);
  }

  const fs::path nn = w.root / "nn";
  REQUIRE(cli({"nn", "--data", w.data.string(), "--model", w.model.string(), "--out", nn.string(),
               "--split", "train"})
              .code == 0);
  CHECK(slurp(nn / "train_nn_summary.csv").find("median_position_m,0\n") != std::string::npos);
  CHECK(fs::exists(nn / "features.csv"));
}

TEST_CASE("cli: a config digest mismatch is refused") {
  auto& w = workspace();
  const Result r = cli({"eval", "--data", w.data.string(), "--model", w.model.string(), "--out",
                        (w.root / "mismatch").string(), "--set", "feature_dim=64"});
  CHECK(r.code == 1);
  const std::string digest = read_checkpoint(w.model / "checkpoint.bin").config_digest;
  CHECK(r.err.find(digest) != std::string::npos);
  CHECK(r.err.find("does not match") != std::string::npos);
}

TEST_CASE("cli: automatic beta is recorded") {
  auto& w = workspace();
  const fs::path out = w.root / "auto";
  REQUIRE(cli({"train", "--data", w.data.string(), "--out", out.string(), "--epochs", "2",
               "--batch-size", "8", "--beta", "auto"})
              .code == 0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m.dump().find("estimated_beta") != std::string::npos);
}

TEST_CASE("cli: resume continues to the same checkpoint") {
  auto& w = workspace();
  const fs::path full = w.root / "full", part = w.root / "part";
  const std::vector<std::string> base{"train", "--data", w.data.string(), "--batch-size", "8",
                                      "--eval-every", "1"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return cli(a).code;
  };
  REQUIRE(with({"--out", full.string(), "--epochs", "2"}) == 0);
  REQUIRE(with({"--out", part.string(), "--epochs", "1"}) == 0);
  REQUIRE(with({"--out", part.string(), "--epochs", "2", "--resume"}) == 0);
  CHECK(slurp(full / "checkpoint.bin") == slurp(part / "checkpoint.bin"));
  CHECK(slurp(full / "train_log.csv") == slurp(part / "train_log.csv"));
}
