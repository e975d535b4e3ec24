#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "catseq/forecast.hpp"
#include "catseq/nn/ops.hpp"
#include "catseq/nn/optim.hpp"
#include "catseq/nn/params.hpp"
#include "catseq/tokenization.hpp"

namespace catseq {

struct TransformerConfig {
  std::size_t d_model = 256;
  std::size_t heads = 5;
  std::size_t blocks = 2;
  std::size_t lookback = 4;
  std::size_t ffn_multiplier = 4;

  /// Per-head width: d_model / heads, rounded up when it does not divide.
  std::size_t head_dim() const noexcept { return (d_model + heads - 1) / heads; }
  void validate() const;

  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
};

/// Token positions of one sample: lookback sentences of context in sensor
/// order, sentence-major, followed by one masked target slot per sensor.
struct TokenLayout {
  std::size_t sensors = 0;
  std::size_t lookback = 0;

  std::size_t context_length() const noexcept { return sensors * lookback; }
  std::size_t length() const noexcept { return context_length() + sensors; }
  std::size_t target_position(std::size_t sensor) const noexcept {
    return context_length() + sensor;
  }
};

/// Context queries see only context keys; the target slot of a sensor sees
/// every context key and itself, never another target slot.
nn::AttentionMask dual_attention_mask(const TokenLayout& layout);

struct TransformerSample {
  std::vector<std::size_t> tokens;  // word indices, 0 at target slots
  std::vector<WordId> targets;      // observed word per sensor
  std::int64_t time = 0;
};

/// Sample predicting sentence `index` from the `lookback` sentences before it.
TransformerSample assemble_sample(const TokenizedCorpus& corpus, std::size_t index,
                                  std::size_t lookback);

/// Single-stack encoder with dual self/causal attention and one output
/// projection onto the global vocabulary; softmax is taken per sensor slice.
class TransformerForecaster : public Forecaster {
 public:
  TransformerForecaster(std::shared_ptr<const Vocabulary> vocabulary, TransformerConfig config,
                        std::uint64_t seed);

  const TransformerConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return *vocabulary_; }
  const TokenLayout& layout() const noexcept { return layout_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  /// Target-slot logits (sensors x m) for a full token sequence.
  nn::Var forward(const std::vector<std::size_t>& tokens) const;
  nn::Var loss(const TransformerSample& sample) const;

  std::vector<WordId> forecast_tokens(const std::vector<std::size_t>& tokens) const;

  std::size_t lookback() const override { return config_.lookback; }
  std::vector<WordId> forecast(const TokenizedCorpus& corpus, std::size_t index) const override;

  void save(const std::filesystem::path& stem) const;
  static TransformerForecaster load(const std::filesystem::path& stem,
                                    std::shared_ptr<const Vocabulary> vocabulary);

 private:
  std::shared_ptr<const Vocabulary> vocabulary_;
  TransformerConfig config_;
  TokenLayout layout_;
  nn::AttentionMask mask_;
  nn::ParamStore params_;
  std::vector<nn::ColumnRange> ranges_;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

TrainReport train_transformer(TransformerForecaster& model, const TokenizedCorpus& corpus,
                              const TrainOptions& options);

}  // namespace catseq
