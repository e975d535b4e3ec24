#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/detection.hpp"
#include "catseq/embedding_lstm.hpp"
#include "catseq/eval.hpp"
#include "catseq/synth.hpp"
#include "catseq/tfidf_svd.hpp"
#include "catseq/transformer.hpp"

namespace catseq {

enum class ModelKind { kSvd, kTransformer, kLstm };

const char* to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(const std::string& text);

struct TransformerRunConfig {
  TransformerConfig model;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
};

struct LstmRunConfig {
  LstmConfig model;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  EmbeddingTrainOptions embedding;
};

struct RunConfig {
  std::size_t word_length = 5;
  ModelKind model = ModelKind::kSvd;
  double alpha = 1.25;
  double reference_percentile = 99.5;
  std::uint64_t seed = 0;
  SvdFitOptions svd;
  TransformerRunConfig transformer;
  LstmRunConfig lstm;
  std::map<std::string, std::string> subsystems;  // sensor -> subsystem
  EnsemblePolicy ensemble = EnsemblePolicy::kAny;
  std::size_t cluster_gap = 0;  // 0: default_cluster_gap
  double tolerance = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::filesystem::path& path);

struct SubsystemGroup {
  std::string name;
  std::vector<std::string> sensors;  // in CSV column order
};

/// One group per subsystem name, ordered by name; a single group "all"
/// when no map is given. Every sensor must belong to exactly one group.
std::vector<SubsystemGroup> plan_subsystems(const std::vector<std::string>& sensors,
                                            const std::map<std::string, std::string>& map);

/// Scores every sentence of `corpus` that the model can score.
ScoreSeries score_with_svd(const SvdModel& model, const TokenizedCorpus& corpus);
ScoreSeries score_with_forecaster(const Forecaster& model, const TokenizedCorpus& corpus);

/// Writes train.csv, test.csv, truths.json and spec.json into `out_dir`.
void cmd_synth(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Trains one model per subsystem, calibrates thresholds on the training
/// scores and writes the bundle (manifest.json plus model files).
void cmd_train(const RunConfig& config, const std::filesystem::path& train_csv,
               const std::filesystem::path& bundle_dir);

/// Scores a series with a bundle and writes scores.csv and events.json.
void cmd_detect(const std::filesystem::path& bundle_dir, const std::filesystem::path& test_csv,
                const std::filesystem::path& out_dir, std::optional<double> alpha = std::nullopt);

/// Matches events.json against a truths file and writes metrics.json and
/// metrics.txt into `out_dir`.
Metrics cmd_eval(const std::filesystem::path& events_json,
                 const std::filesystem::path& truths_json, const std::filesystem::path& out_dir,
                 std::optional<std::size_t> series_length = std::nullopt,
                 std::optional<double> tolerance = std::nullopt);

}  // namespace catseq
