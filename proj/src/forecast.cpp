#include "catseq/forecast.hpp"

#include <algorithm>
#include <numeric>

#include "catseq/error.hpp"

namespace catseq {

WordId argmax_in_slice(std::span<const double> logits, IndexRange slice) {
  if (slice.size() == 0 || slice.begin == kMaskId || slice.end - 1 > logits.size()) {
    fail(ErrorKind::kInvalidArgument, "vocabulary slice outside the logit vector");
  }
  WordId best = slice.begin;
  double best_value = logits[slice.begin - 1];
  for (WordId id = slice.begin + 1; id < slice.end; ++id) {
    if (logits[id - 1] > best_value) {
      best_value = logits[id - 1];
      best = id;
    }
  }
  return best;
}

ForecastScore forecast_anomaly_score(const std::vector<Word>& forecast,
                                     const std::vector<Word>& actual, std::size_t word_length) {
  if (forecast.size() != actual.size()) {
    fail(ErrorKind::kSchema, "sensor-set mismatch between forecast and observed sentence");
  }
  ForecastScore out;
  out.contributions.reserve(actual.size());
  for (std::size_t s = 0; s < actual.size(); ++s) {
    const auto d = static_cast<double>(levenshtein(actual[s], forecast[s], word_length));
    out.contributions.push_back(d);
    out.score += d;
  }
  return out;
}

ForecastScore forecast_anomaly_score(const std::vector<WordId>& forecast,
                                     const TokenizedCorpus& actual, std::size_t index) {
  const Vocabulary& vocab = actual.vocabulary();
  if (forecast.size() != vocab.sensor_count()) {
    fail(ErrorKind::kSchema, "sensor-set mismatch between forecast and observed sentence");
  }
  std::vector<Word> predicted;
  std::vector<Word> observed;
  predicted.reserve(forecast.size());
  observed.reserve(forecast.size());
  for (std::size_t s = 0; s < forecast.size(); ++s) {
    predicted.push_back(vocab.word(forecast[s]));
    if (predicted.back().sensor != s) {
      fail(ErrorKind::kSchema, "forecast word for sensor " + std::to_string(s) +
                                   " belongs to another sensor");
    }
    observed.push_back(actual.observed_word(index, s));
  }
  return forecast_anomaly_score(predicted, observed, actual.word_length());
}

std::vector<std::vector<WordId>> Forecaster::forecast_batch(
    const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const {
  std::vector<std::vector<WordId>> out;
  out.reserve(indices.size());
  for (std::size_t index : indices) {
    out.push_back(forecast(corpus, index));
  }
  return out;
}

std::vector<ScoredSentence> score_corpus(const Forecaster& model, const TokenizedCorpus& corpus) {
  std::vector<ScoredSentence> out;
  const std::size_t n = model.lookback();
  if (corpus.size() <= n) {
    return out;
  }
  out.reserve(corpus.size() - n);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = n; start < corpus.size(); start += kChunk) {
    std::vector<std::size_t> indices(std::min(kChunk, corpus.size() - start));
    std::iota(indices.begin(), indices.end(), start);
    const auto forecasts = model.forecast_batch(corpus, indices);
    for (std::size_t j = 0; j < indices.size(); ++j) {
      out.push_back({corpus.sentence(indices[j]).time,
                     forecast_anomaly_score(forecasts[j], corpus, indices[j])});
    }
  }
  return out;
}

}  // namespace catseq
