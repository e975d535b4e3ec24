#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "catseq/forecast.hpp"
#include "catseq/nn/ops.hpp"
#include "catseq/nn/optim.hpp"
#include "catseq/nn/params.hpp"
#include "catseq/tokenization.hpp"

namespace catseq {

/// 2 for up to 30 sensors, 5 beyond.
std::size_t default_embedding_dim(std::size_t sensors) noexcept;

/// Dense word vectors, one row per global index plus row 0 for the mask and
/// for unknown tokens.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(nn::Tensor matrix);

  std::size_t rows() const noexcept { return matrix_.rows(); }
  std::size_t dim() const noexcept { return matrix_.cols(); }
  const nn::Tensor& matrix() const noexcept { return matrix_; }
  std::span<const double> row(std::size_t index) const;

 private:
  nn::Tensor matrix_;
};

/// Row of the table used for `id`: its own row for true words, row 0 for
/// unknown tokens and the mask.
std::size_t embedding_row(const Vocabulary& vocab, WordId id);

/// Concatenation of the per-sensor rows, in vocabulary sensor order.
std::vector<double> embed_sentence(const EmbeddingTable& table, const Vocabulary& vocab,
                                   const Sentence& sentence);

struct MaskedSample {
  std::vector<std::size_t> input;  // embedding rows, one per sensor
  WordId target = kMaskId;
  std::size_t masked_sensor = 0;
};

MaskedSample make_masked_sample(const Vocabulary& vocab, const Sentence& sentence,
                                std::size_t masked_sensor);

struct EmbeddingTrainOptions {
  std::size_t dim = 0;      // 0: default_embedding_dim
  std::size_t hidden1 = 0;  // 0: sensor count
  std::size_t hidden2 = 0;  // 0: round(mean(word count, sensor count))
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

/// Masked-word network: the embedded sentence passes through three dense
/// layers ending in a softmax over the whole vocabulary.
class MaskedWordModel {
 public:
  MaskedWordModel(std::shared_ptr<const Vocabulary> vocabulary, const EmbeddingTrainOptions& options);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden1() const noexcept { return hidden1_; }
  std::size_t hidden2() const noexcept { return hidden2_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  /// Logits (batch x m) over global indices minus one.
  nn::Var forward(const std::vector<MaskedSample>& batch) const;
  nn::Var loss(const std::vector<MaskedSample>& batch) const;
  /// Most probable word of the masked sensor's slice.
  WordId predict(const MaskedSample& sample) const;
  EmbeddingTable table() const;

 private:
  std::shared_ptr<const Vocabulary> vocabulary_;
  std::size_t dim_;
  std::size_t hidden1_;
  std::size_t hidden2_;
  nn::ParamStore params_;
};

struct EmbeddingTrainResult {
  EmbeddingTable table;
  std::vector<double> epoch_loss;
};

/// One masked sample per sentence per epoch, masking a uniformly drawn sensor.
EmbeddingTrainResult train_embeddings(MaskedWordModel& model, const TokenizedCorpus& corpus,
                                      const EmbeddingTrainOptions& options);

void save_embedding(const std::filesystem::path& stem, const EmbeddingTable& table,
                    const Vocabulary& vocab);
EmbeddingTable load_embedding(const std::filesystem::path& stem, const Vocabulary& vocab);

struct LstmConfig {
  std::size_t lookback = 10;
  std::size_t lstm1 = 0;  // 0: max(sensors / 2, 800)
  std::size_t lstm2 = 0;  // 0: round(mean(lstm1, word count))

  /// Copy with zero dimensions replaced by their defaults.
  LstmConfig resolved(std::size_t sensors, std::size_t words) const;
  nlohmann::json to_json() const;
  static LstmConfig from_json(const nlohmann::json& j);
};

/// Target distribution for a sentence: mass 1/sensors at each of its words.
nn::Tensor multi_hot_target(const Vocabulary& vocab, const Sentence& sentence);

/// Two stacked LSTM layers over embedded sentences, then a dense softmax
/// layer over the global vocabulary. The embedding table stays frozen.
class LstmForecaster : public Forecaster {
 public:
  LstmForecaster(std::shared_ptr<const Vocabulary> vocabulary, EmbeddingTable table,
                 LstmConfig config, std::uint64_t seed);

  const LstmConfig& config() const noexcept { return config_; }
  const EmbeddingTable& table() const noexcept { return table_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  /// Logits (batch x m) for the sentences at `indices`, each predicted from
  /// the lookback sentences before it.
  nn::Var forward(const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const;
  nn::Var loss(const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const;

  std::size_t lookback() const override { return config_.lookback; }
  std::vector<WordId> forecast(const TokenizedCorpus& corpus, std::size_t index) const override;
  /// Forecasts for a batch of indices in one pass.
  std::vector<std::vector<WordId>> forecast_batch(
      const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const override;

  void save(const std::filesystem::path& stem) const;
  static LstmForecaster load(const std::filesystem::path& stem,
                             std::shared_ptr<const Vocabulary> vocabulary);

 private:
  void check_corpus(const TokenizedCorpus& corpus) const;

  std::shared_ptr<const Vocabulary> vocabulary_;
  EmbeddingTable table_;
  LstmConfig config_;
  nn::ParamStore params_;
};

struct LstmTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

std::vector<double> train_lstm_forecaster(LstmForecaster& model, const TokenizedCorpus& corpus,
                                          const LstmTrainOptions& options);

/// Same contract as the transformer score: summed per-sensor Levenshtein
/// distances between forecast and observed words.
ForecastScore lstm_anomaly_score(const std::vector<WordId>& forecast,
                                 const TokenizedCorpus& actual, std::size_t index);

}  // namespace catseq
