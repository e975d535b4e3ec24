#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "catseq/levenshtein.hpp"
#include "catseq/tokenization.hpp"

namespace catseq {

/// Highest logit inside a vocabulary slice; ties go to the lowest index.
/// `logits` is indexed by WordId - 1.
WordId argmax_in_slice(std::span<const double> logits, IndexRange slice);

/// Per-sentence score of a forecaster: sum over sensors of the distance
/// between the forecast word and the observed word.
struct ForecastScore {
  double score = 0.0;
  std::vector<double> contributions;  // per sensor
};

ForecastScore forecast_anomaly_score(const std::vector<Word>& forecast,
                                     const std::vector<Word>& actual, std::size_t word_length);

/// Scores forecast word indices against sentence `index` of `actual`,
/// using the observed letters retained by the tokenizer.
ForecastScore forecast_anomaly_score(const std::vector<WordId>& forecast,
                                     const TokenizedCorpus& actual, std::size_t index);

/// A trained next-sentence model.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual std::size_t lookback() const = 0;
  /// Forecast for sentence `index` from the `lookback()` sentences before it.
  virtual std::vector<WordId> forecast(const TokenizedCorpus& corpus, std::size_t index) const = 0;
  virtual std::vector<std::vector<WordId>> forecast_batch(
      const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const;
};

struct ScoredSentence {
  std::int64_t time = 0;
  ForecastScore score;
};

/// Scores every sentence that has a full lookback window.
std::vector<ScoredSentence> score_corpus(const Forecaster& model, const TokenizedCorpus& corpus);

}  // namespace catseq
