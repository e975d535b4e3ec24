#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "catseq/error.hpp"
#include "catseq/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string model;
  double alpha = 0.0;
  std::size_t wordl = 0;
  std::string out = ".";
  std::string input;
  std::string bundle;
  std::string truths;
  std::size_t length = 0;
  double tolerance = 0.0;
};

int run(int argc, char** argv) {
  using namespace catseq;
  CLI::App app{"catseq: anomaly detection on categorical time series"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a ground-truthed synthetic train/test pair");
  synth->add_option("--config", o.config, "synthetic spec JSON (defaults to the 20-sensor benchmark)");
  synth->add_option("--seed", o.seed, "random seed");
  synth->add_option("--length", o.length, "rows in each of train and test");
  synth->add_option("--out", o.out, "output directory");

  auto* train = app.add_subcommand("train", "train a model bundle on nominal data");
  train->add_option("csv", o.input, "training CSV")->required();
  train->add_option("--config", o.config, "run configuration JSON");
  train->add_option("--seed", o.seed, "random seed");
  train->add_option("--model", o.model, "svd, transformer or lstm");
  train->add_option("--alpha", o.alpha, "threshold factor");
  train->add_option("--wordl", o.wordl, "word length");
  train->add_option("--out", o.out, "bundle directory");

  auto* detect = app.add_subcommand("detect", "score a series with a bundle");
  detect->add_option("bundle", o.bundle, "bundle directory")->required();
  detect->add_option("csv", o.input, "CSV to score")->required();
  detect->add_option("--alpha", o.alpha, "override the bundle's threshold factor");
  detect->add_option("--out", o.out, "report directory");

  auto* eval = app.add_subcommand("eval", "compare detected events with ground truth");
  eval->add_option("events", o.input, "events.json written by detect")->required();
  eval->add_option("--truths", o.truths, "truths JSON")->required();
  eval->add_option("--length", o.length, "series length (defaults to the value in events.json)");
  eval->add_option("--tolerance", o.tolerance, "start tolerance as a fraction of the length");
  eval->add_option("--out", o.out, "metrics directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::kInvalidArgument);
  }

  const bool seed_set = app.got_subcommand(synth) ? synth->count("--seed") > 0
                                                  : train->count("--seed") > 0;
  if (*synth) {
    SynthSpec spec = acceptance_spec();
    if (!o.config.empty()) {
      std::ifstream in(o.config);
      if (!in) fail(ErrorKind::kIo, "cannot open " + o.config);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::kParse, std::string("malformed synthetic spec: ") + e.what());
      }
      spec = SynthSpec::from_json(j);
    }
    if (o.length > 0) {
      spec.train_length = spec.test_length = o.length;
    }
    cmd_synth(spec, o.seed, o.out);
    std::cout << "wrote train.csv, test.csv, truths.json to " << o.out << "\n";
  } else if (*train) {
    RunConfig config = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (seed_set) config.seed = o.seed;
    if (!o.model.empty()) config.model = parse_model_kind(o.model);
    if (train->count("--alpha") > 0) config.alpha = o.alpha;
    if (o.wordl > 0) config.word_length = o.wordl;
    cmd_train(config, o.input, o.out);
    std::cout << "wrote bundle to " << o.out << "\n";
  } else if (*detect) {
    std::optional<double> alpha;
    if (detect->count("--alpha") > 0) alpha = o.alpha;
    cmd_detect(o.bundle, o.input, o.out, alpha);
    std::cout << "wrote scores.csv and events.json to " << o.out << "\n";
  } else if (*eval) {
    std::optional<std::size_t> length;
    std::optional<double> tolerance;
    if (o.length > 0) length = o.length;
    if (eval->count("--tolerance") > 0) tolerance = o.tolerance;
    const Metrics m = cmd_eval(o.input, o.truths, o.out, length, tolerance);
    std::cout << metrics_table({{"result", m}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const catseq::Error& e) {
    std::cerr << "catseq: " << catseq::to_string(e.kind()) << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "catseq: internal error: " << e.what() << "\n";
    return 1;
  }
}
