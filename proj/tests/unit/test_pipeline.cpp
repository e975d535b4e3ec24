#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "catseq/error.hpp"
#include "catseq/pipeline.hpp"
#include "test_util.hpp"

using namespace catseq;
namespace fs = std::filesystem;
using catseq::testing::scratch_dir;

namespace {

std::string cli() {
  const char* path = std::getenv("CATSEQ_CLI");
  REQUIRE_MESSAGE(path != nullptr, "CATSEQ_CLI is not set");
  return path;
}

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json_file(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

/// synth, train, detect and eval into `dir`; returns the first nonzero exit.
int full_run(const fs::path& dir, const std::string& train_flags) {
  const std::string d = dir.string();
  int rc = run("synth --seed 7 --length 1000 --out " + d + "/data");
  if (rc == 0) rc = run("train " + d + "/data/train.csv --seed 3 " + train_flags + " --out " + d + "/bundle");
  if (rc == 0) rc = run("detect " + d + "/bundle " + d + "/data/test.csv --out " + d + "/report");
  if (rc == 0) {
    rc = run("eval " + d + "/report/events.json --truths " + d + "/data/truths.json --out " + d +
             "/report");
  }
  return rc;
}

}  // namespace

TEST_CASE("the projection pipeline finds the injected anomalies") {
  const auto dir = scratch_dir("pipeline_svd");
  REQUIRE(full_run(dir, "--model svd") == 0);
  for (const char* f : {"data/train.csv", "data/test.csv", "data/truths.json", "data/spec.json",
                        "bundle/manifest.json", "bundle/sub0.vocabulary.json", "bundle/sub0.model.bin",
                        "bundle/sub0.model.json", "report/scores.csv", "report/events.json",
                        "report/metrics.json", "report/metrics.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  const auto metrics = read_json_file(dir / "report/metrics.json");
  CHECK(metrics["metrics"]["tp"] == 3);
  CHECK(metrics["metrics"]["fn"] == 0);
  CHECK(metrics["series_length"] == 1000);
  const auto events = read_json_file(dir / "report/events.json");
  CHECK(events["model"] == "svd");
  CHECK(events["cluster_gap"] == 5);
  CHECK(slurp(dir / "report/scores.csv").rfind("time,subsystem,score,ratio\n", 0) == 0);
}

TEST_CASE("two runs with one seed produce identical files") {
  const auto a = scratch_dir("pipeline_det_a");
  const auto b = scratch_dir("pipeline_det_b");
  REQUIRE(full_run(a, "--model svd") == 0);
  REQUIRE(full_run(b, "--model svd") == 0);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    CAPTURE(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
  }
}

TEST_CASE("sentence count follows the word length") {
  const auto dir = scratch_dir("pipeline_count");
  const std::string d = dir.string();
  REQUIRE(run("synth --seed 2 --length 500 --out " + d) == 0);
  REQUIRE(run("train " + d + "/train.csv --wordl 5 --out " + d + "/bundle") == 0);
  REQUIRE(run("detect " + d + "/bundle " + d + "/test.csv --out " + d + "/report") == 0);
  CHECK(line_count(dir / "report/scores.csv") == 1 + 496);
  const auto manifest = read_json_file(dir / "bundle/manifest.json");
  CHECK(manifest["subsystems"][0]["reference_count"] == 496);
}

TEST_CASE("re-flagging the training series at alpha 1 stays within the percentile") {
  const auto dir = scratch_dir("pipeline_reflag");
  const std::string d = dir.string();
  REQUIRE(run("synth --seed 4 --length 1000 --out " + d) == 0);
  REQUIRE(run("train " + d + "/train.csv --alpha 1 --out " + d + "/bundle") == 0);
  const auto entry = read_json_file(dir / "bundle/manifest.json")["subsystems"][0];
  CHECK(entry["reference_flagged"].get<double>() <= 0.005 * entry["reference_count"].get<double>());
  REQUIRE(run("detect " + d + "/bundle " + d + "/train.csv --alpha 1 --out " + d + "/self") == 0);
  const auto report = read_json_file(dir / "self/events.json");
  CHECK(report["subsystems"][0]["flagged"] == entry["reference_flagged"]);
}

TEST_CASE("schema drift and bad arguments map to exit codes") {
  const auto dir = scratch_dir("pipeline_errors");
  const std::string d = dir.string();
  REQUIRE(run("synth --seed 1 --length 300 --out " + d) == 0);
  REQUIRE(run("train " + d + "/train.csv --out " + d + "/bundle") == 0);
  std::string test = slurp(dir / "test.csv");
  test.replace(test.find("s03"), 3, "zz9");
  write_file(dir / "renamed.csv", test);
  CHECK(run("detect " + d + "/bundle " + d + "/renamed.csv --out " + d + "/r") == 4);
  CHECK(run("train " + d + "/train.csv --model forest --out " + d + "/b2") == 2);
  CHECK(run("train " + d + "/missing.csv --out " + d + "/b3") == 6);
  CHECK(run("detect") == 2);
  write_file(dir / "broken.json", "{\"word_length\": ");
  CHECK(run("train " + d + "/train.csv --config " + d + "/broken.json --out " + d + "/b4") == 3);
}

TEST_CASE("eval tolerance and length can be overridden") {
  const auto dir = scratch_dir("pipeline_tol");
  REQUIRE(full_run(dir, "--model svd") == 0);
  const std::string d = dir.string();
  REQUIRE(run("eval " + d + "/report/events.json --truths " + d +
              "/data/truths.json --tolerance 0.05 --length 2000 --out " + d + "/wide") == 0);
  const auto m = read_json_file(dir / "wide/metrics.json");
  CHECK(m["tolerance"] == 0.05);
  CHECK(m["series_length"] == 2000);
}

TEST_CASE("subsystems train separately and vote") {
  const auto dir = scratch_dir("pipeline_groups");
  const std::string d = dir.string();
  REQUIRE(run("synth --seed 7 --length 1000 --out " + d) == 0);
  nlohmann::json config;
  config["subsystems"] = nlohmann::json::object();
  for (std::size_t i = 0; i < 20; ++i) {
    config["subsystems"][sensor_name(i)] = i < 10 ? "left" : "right";
  }
  write_file(dir / "config.json", config.dump());
  REQUIRE(run("train " + d + "/train.csv --config " + d + "/config.json --out " + d + "/bundle") == 0);
  const auto manifest = read_json_file(dir / "bundle/manifest.json");
  REQUIRE(manifest["subsystems"].size() == 2);
  CHECK(manifest["subsystems"][0]["name"] == "left");
  CHECK(manifest["subsystems"][1]["sensors"].size() == 10);
  REQUIRE(run("detect " + d + "/bundle " + d + "/test.csv --out " + d + "/report") == 0);
  const auto events = read_json_file(dir / "report/events.json");
  for (const auto& e : events["events"]) CHECK(e["suspects"].size() == 20);

  config["subsystems"].erase("s19");
  write_file(dir / "partial.json", config.dump());
  CHECK(run("train " + d + "/train.csv --config " + d + "/partial.json --out " + d + "/b2") == 4);
}

TEST_CASE("run configuration round trips through JSON") {
  RunConfig c;
  c.model = ModelKind::kLstm;
  c.alpha = 1.5;
  c.lstm.model.lstm1 = 64;
  c.lstm.embedding.epochs = 7;
  c.transformer.model.d_model = 32;
  c.ensemble = EnsemblePolicy::kMajority;
  const auto back = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());
  nlohmann::json bad = c.to_json();
  bad["alpha"] = -1.0;
  CHECK_THROWS_AS(RunConfig::from_json(bad), Error);
}

TEST_CASE("subsystem planning") {
  const std::vector<std::string> sensors{"a", "b", "c"};
  const auto all = plan_subsystems(sensors, {});
  REQUIRE(all.size() == 1);
  CHECK(all[0].name == "all");
  CHECK(all[0].sensors == sensors);
  const auto split = plan_subsystems(sensors, {{"a", "y"}, {"b", "x"}, {"c", "y"}});
  REQUIRE(split.size() == 2);
  CHECK(split[0].name == "x");
  CHECK(split[1].sensors == std::vector<std::string>{"a", "c"});
  CHECK_THROWS_AS(plan_subsystems(sensors, {{"a", "y"}, {"b", "x"}}), Error);
  CHECK_THROWS_AS(plan_subsystems(sensors, {{"a", "y"}, {"b", "x"}, {"c", "y"}, {"d", "x"}}), Error);
}
