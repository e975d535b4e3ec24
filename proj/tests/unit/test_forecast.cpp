#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "catseq/error.hpp"
#include "catseq/forecast.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::make_series;

namespace {

// Plain recursive definition, memoized on (i, j).
std::size_t recursive_distance(const std::vector<LetterCode>& a, const std::vector<LetterCode>& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) {
    if (i == 0) return j;
    if (j == 0) return i;
    if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
    const std::size_t sub = d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    const std::size_t best = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, sub});
    memo[i][j] = static_cast<long>(best);
    return best;
  };
  return d(a.size(), b.size());
}

class ConstantForecaster : public Forecaster {
 public:
  ConstantForecaster(std::vector<WordId> words, std::size_t lookback)
      : words_(std::move(words)), lookback_(lookback) {}
  std::size_t lookback() const override { return lookback_; }
  std::vector<WordId> forecast(const TokenizedCorpus&, std::size_t) const override {
    return words_;
  }

 private:
  std::vector<WordId> words_;
  std::size_t lookback_;
};

}  // namespace

TEST_CASE("edit distance agrees with the recursive definition") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(0, 7);
  std::uniform_int_distribution<LetterCode> letter(0, 3);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<LetterCode> a(len(rng)), b(len(rng));
    for (auto& x : a) x = letter(rng);
    for (auto& x : b) x = letter(rng);
    CHECK(edit_distance(a, b) == recursive_distance(a, b));
    CHECK(edit_distance(a, b) == edit_distance(b, a));
  }
  const std::vector<LetterCode> kitten{10, 8, 19, 19, 4, 13};
  const std::vector<LetterCode> sitting{18, 8, 19, 19, 8, 13, 6};
  CHECK(edit_distance(kitten, sitting) == 3);
}

TEST_CASE("unknown tokens without letters are a full word length away") {
  const Word known{0, {1, 2, 0}, WordKind::kTrueWord};
  const Word bare{0, {}, WordKind::kUnknownWord};
  const Word observed_unknown{0, {1, 2, 5}, WordKind::kUnknownLetter};
  CHECK(levenshtein(known, bare, 3) == 3);
  CHECK(levenshtein(bare, bare, 3) == 3);
  CHECK(levenshtein(known, observed_unknown, 3) == 1);
  const Word other_sensor{1, {1, 2, 0}, WordKind::kTrueWord};
  CHECK_THROWS_AS(levenshtein(known, other_sensor, 3), Error);
}

TEST_CASE("argmax stays inside the slice and breaks ties low") {
  const std::vector<double> logits{9.0, 1.0, 3.0, 3.0, 0.5, 7.0};
  CHECK(argmax_in_slice(logits, {2, 5}) == 3);
  CHECK(argmax_in_slice(logits, {5, 7}) == 6);
  CHECK(argmax_in_slice(logits, {1, 2}) == 1);
}

TEST_CASE("forecast score sums per-sensor distances on observed letters") {
  const auto train = make_series({"a", "b"}, {{"0", "1", "0", "1", "0"}, {"x", "x", "y", "y", "x"}});
  const auto corpus = tokenize_training(train, 2);
  const auto vocab = corpus.vocabulary_ptr();
  const auto test = make_series({"a", "b"}, {{"0", "1", "2", "1", "0"}, {"x", "x", "y", "y", "x"}});
  const auto inf = tokenize_inference(test, vocab);
  const WordId a01 = vocab->find(0, std::vector<LetterCode>{0, 1});
  const WordId bxx = vocab->find(1, std::vector<LetterCode>{0, 0});
  REQUIRE(a01 != kMaskId);
  REQUIRE(bxx != kMaskId);
  // Sentence 1 observes a = "1 2" (unseen letter) and b = "x y".
  const auto s = forecast_anomaly_score(std::vector<WordId>{a01, bxx}, inf, 1);
  CHECK(s.contributions == std::vector<double>{2.0, 1.0});
  CHECK(s.score == 3.0);
  const auto u = forecast_anomaly_score(std::vector<WordId>{vocab->unknown_word(0), bxx}, inf, 0);
  CHECK(u.contributions[0] == 2.0);
  CHECK_THROWS_AS(forecast_anomaly_score(std::vector<WordId>{bxx, bxx}, inf, 0), Error);
  CHECK_THROWS_AS(forecast_anomaly_score(std::vector<WordId>{a01}, inf, 0), Error);
}

TEST_CASE("corpus scoring skips sentences without a full lookback") {
  std::mt19937_64 rng(3);
  const auto train = catseq::testing::coupled_series(rng, 40);
  const auto corpus = tokenize_training(train, 3);
  const ConstantForecaster model(corpus.sentence(0).words, 4);
  const auto scored = score_corpus(model, corpus);
  REQUIRE(scored.size() == corpus.size() - 4);
  CHECK(scored.front().time == corpus.sentence(4).time);
  for (std::size_t j = 0; j < scored.size(); ++j) {
    const auto direct = forecast_anomaly_score(corpus.sentence(0).words, corpus, j + 4);
    CHECK(scored[j].score.score == direct.score);
  }
  const ConstantForecaster long_window(corpus.sentence(0).words, 100);
  CHECK(score_corpus(long_window, corpus).empty());
}
