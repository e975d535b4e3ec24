#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "catseq/error.hpp"
#include "catseq/transformer.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::make_series;
using catseq::testing::scratch_dir;

namespace {

TransformerConfig toy_config(std::size_t lookback) {
  TransformerConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.blocks = 1;
  c.lookback = lookback;
  return c;
}

/// Each sensor alternates between two values; sensors differ in phase.
CategoricalSeries alternating_series(std::size_t rows, std::size_t offset) {
  std::vector<std::vector<std::string>> cols(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + offset;
    cols[0].push_back(t % 2 == 0 ? "a" : "b");
    cols[1].push_back(t % 2 == 0 ? "q" : "p");
    cols[2].push_back((t / 2) % 2 == 0 ? "0" : "1");
  }
  return make_series({"x", "y", "z"}, cols);
}

double accuracy(const TransformerForecaster& model, const TokenizedCorpus& corpus) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = model.lookback(); i < corpus.size(); ++i) {
    const auto f = model.forecast(corpus, i);
    for (std::size_t s = 0; s < f.size(); ++s) {
      hit += f[s] == corpus.sentence(i).words[s] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("head width rounds up when heads do not divide the model width") {
  TransformerConfig c;
  CHECK(c.head_dim() == 52);
  c.d_model = 32;
  c.heads = 2;
  CHECK(c.head_dim() == 16);
  c.lookback = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("dual mask separates context and target slots") {
  const TokenLayout layout{3, 2};
  const auto mask = dual_attention_mask(layout);
  REQUIRE(layout.length() == 9);
  for (std::size_t q = 0; q < 9; ++q) {
    for (std::size_t k = 0; k < 9; ++k) {
      const bool expected = k < 6 || (q >= 6 && q == k);
      CHECK(mask(q, k) == expected);
    }
  }
}

TEST_CASE("samples place mask tokens after the context window") {
  const auto corpus = tokenize_training(alternating_series(30, 0), 2);
  const auto s = assemble_sample(corpus, 5, 2);
  REQUIRE(s.tokens.size() == 9);
  for (std::size_t i = 6; i < 9; ++i) CHECK(s.tokens[i] == kMaskId);
  for (std::size_t sn = 0; sn < 3; ++sn) {
    CHECK(s.tokens[sn] == corpus.sentence(3).words[sn]);
    CHECK(s.tokens[3 + sn] == corpus.sentence(4).words[sn]);
  }
  CHECK(s.targets == corpus.sentence(5).words);
  const auto next = assemble_sample(corpus, 6, 2);
  CHECK(std::equal(next.tokens.begin(), next.tokens.begin() + 3, s.tokens.begin() + 3));
  try {
    assemble_sample(corpus, 1, 2);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("window underflow") != std::string::npos);
  }
}

TEST_CASE("target slots never see one another") {
  const auto corpus = tokenize_training(alternating_series(40, 0), 2);
  const TransformerForecaster model(corpus.vocabulary_ptr(), toy_config(2), 3);
  const std::size_t m = corpus.vocabulary().size();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> word(0, m);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::size_t> tokens(9);
    for (std::size_t i = 0; i < 6; ++i) tokens[i] = word(rng);
    const auto base = model.forward(tokens).value();
    for (std::size_t s = 0; s < 3; ++s) {
      auto changed = tokens;
      for (std::size_t o = 0; o < 3; ++o) {
        if (o != s) changed[6 + o] = word(rng);
      }
      const auto out = model.forward(changed).value();
      for (std::size_t j = 0; j < m; ++j) CHECK(out.at(s, j) == base.at(s, j));
    }
    auto corrupted = tokens;
    corrupted[0] = (tokens[0] + 1) % (m + 1);
    const auto out = model.forward(corrupted).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) diff = std::max(diff, std::abs(out[i] - base[i]));
    CHECK(diff > 0.0);
  }
}

TEST_CASE("untrained loss is close to the uniform slice entropy") {
  const auto corpus = tokenize_training(alternating_series(40, 0), 2);
  const TransformerForecaster model(corpus.vocabulary_ptr(), toy_config(2), 1);
  double expected = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    expected += std::log(static_cast<double>(corpus.vocabulary().slice(s).size()));
  }
  expected /= 3.0;
  double total = 0.0;
  for (std::size_t i = 2; i < 12; ++i) total += model.loss(assemble_sample(corpus, i, 2)).value()[0];
  CHECK(total / 10.0 == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("forecast words always come from the sensor's own slice") {
  const auto corpus = tokenize_training(alternating_series(40, 0), 2);
  const TransformerForecaster model(corpus.vocabulary_ptr(), toy_config(2), 5);
  for (std::size_t i = 2; i < corpus.size(); ++i) {
    const auto f = model.forecast(corpus, i);
    for (std::size_t s = 0; s < 3; ++s) CHECK(corpus.vocabulary().slice(s).contains(f[s]));
  }
}

TEST_CASE("a periodic pattern is learned and generalizes") {
  const auto corpus = tokenize_training(alternating_series(200, 0), 2);
  TransformerForecaster model(corpus.vocabulary_ptr(), toy_config(2), 4);
  TrainOptions options;
  options.epochs = 4;
  options.adam.lr = 0.005;
  options.seed = 2;
  const auto report = train_transformer(model, corpus, options);
  REQUIRE(report.epoch_loss.size() == 4);
  CHECK(report.epoch_loss.back() < report.epoch_loss.front());
  const auto held_out = tokenize_inference(alternating_series(60, 1), corpus.vocabulary_ptr());
  CHECK(accuracy(model, held_out) > 0.95);
}

TEST_CASE("a constant corpus is memorized") {
  const auto series = make_series({"a", "b"}, {std::vector<std::string>(30, "1"),
                                               std::vector<std::string>(30, "7")});
  const auto corpus = tokenize_training(series, 3);
  TransformerForecaster model(corpus.vocabulary_ptr(), toy_config(1), 8);
  TrainOptions options;
  options.epochs = 10;
  options.adam.lr = 0.01;
  train_transformer(model, corpus, options);
  CHECK(accuracy(model, corpus) == 1.0);
}

TEST_CASE("training is deterministic and models round trip") {
  const auto corpus = tokenize_training(alternating_series(60, 0), 2);
  TrainOptions options;
  options.epochs = 1;
  options.seed = 6;
  TransformerForecaster a(corpus.vocabulary_ptr(), toy_config(2), 4);
  TransformerForecaster b(corpus.vocabulary_ptr(), toy_config(2), 4);
  CHECK(train_transformer(a, corpus, options).epoch_loss ==
        train_transformer(b, corpus, options).epoch_loss);

  const auto dir = scratch_dir("transformer_io");
  a.save(dir / "model");
  const auto back = TransformerForecaster::load(dir / "model", corpus.vocabulary_ptr());
  const auto tokens = assemble_sample(corpus, 10, 2).tokens;
  const auto x = a.forward(tokens).value();
  const auto y = back.forward(tokens).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);

  const auto other = tokenize_training(alternating_series(60, 0), 3);
  try {
    TransformerForecaster::load(dir / "model", other.vocabulary_ptr());
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchema);
  }
  CHECK_THROWS_AS(a.forecast(other, 5), Error);
}
