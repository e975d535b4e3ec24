#include <doctest.h>

#include <cmath>
#include <random>

#include "catseq/embedding_lstm.hpp"
#include "catseq/error.hpp"
#include "test_util.hpp"

using namespace catseq;
using catseq::testing::make_series;
using catseq::testing::scratch_dir;

namespace {

/// Sensor b's value is a fixed function of sensor a's value in the same row.
CategoricalSeries functional_series(std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 2);
  const char* image[] = {"k", "m", "k"};
  std::vector<std::vector<std::string>> cols(2);
  for (std::size_t r = 0; r < rows; ++r) {
    const int a = pick(rng);
    cols[0].push_back(std::to_string(a));
    cols[1].push_back(image[a]);
  }
  return make_series({"a", "b"}, cols);
}

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

EmbeddingTable random_table(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return EmbeddingTable(nn::normal_init({rows, dim}, 1.0, rng));
}

double accuracy(const LstmForecaster& model, const TokenizedCorpus& corpus) {
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

LstmForecaster small_lstm(const TokenizedCorpus& corpus, std::size_t lookback, std::uint64_t seed) {
  LstmConfig config;
  config.lookback = lookback;
  config.lstm1 = 16;
  config.lstm2 = 16;
  return LstmForecaster(corpus.vocabulary_ptr(),
                        random_table(corpus.vocabulary().size() + 1, 2, seed), config, seed);
}

}  // namespace

TEST_CASE("default dimensions") {
  CHECK(default_embedding_dim(30) == 2);
  CHECK(default_embedding_dim(31) == 5);
  const auto c = LstmConfig{}.resolved(3, 10);
  CHECK(c.lstm1 == 800);
  CHECK(c.lstm2 == 405);
  CHECK(LstmConfig{}.resolved(2000, 100).lstm1 == 1000);
}

TEST_CASE("sentences embed to concatenated rows with unknowns on row 0") {
  const auto corpus = tokenize_training(alternating_series(20, 0), 2);
  const Vocabulary& v = corpus.vocabulary();
  const auto table = random_table(v.size() + 1, 2, 1);
  const auto x = embed_sentence(table, v, corpus.sentence(3));
  REQUIRE(x.size() == 6);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto row = table.row(corpus.sentence(3).words[s]);
    CHECK(x[2 * s] == row[0]);
    CHECK(x[2 * s + 1] == row[1]);
  }
  CHECK(embed_sentence(table, v, corpus.sentence(5)) == embed_sentence(table, v, corpus.sentence(9)));
  CHECK(embedding_row(v, v.unknown_word(1)) == 0);
  CHECK(embedding_row(v, v.unknown_letter(2)) == 0);
  CHECK(embedding_row(v, kMaskId) == 0);
  Sentence odd = corpus.sentence(3);
  odd.words[1] = v.unknown_letter(1);
  const auto y = embed_sentence(table, v, odd);
  CHECK(y[2] == table.row(0)[0]);
  CHECK(y[3] == table.row(0)[1]);
}

TEST_CASE("masked samples and multi-hot targets") {
  const auto corpus = tokenize_training(alternating_series(20, 0), 2);
  const Vocabulary& v = corpus.vocabulary();
  const auto sample = make_masked_sample(v, corpus.sentence(2), 1);
  CHECK(sample.input[1] == 0);
  CHECK(sample.input[0] == corpus.sentence(2).words[0]);
  CHECK(sample.target == corpus.sentence(2).words[1]);
  CHECK_THROWS_AS(make_masked_sample(v, corpus.sentence(2), 3), Error);

  const auto t = multi_hot_target(v, corpus.sentence(2));
  REQUIRE(t.size() == v.size());
  for (std::size_t s = 0; s < 3; ++s) {
    double mass = 0.0;
    std::size_t nonzero = 0;
    for (WordId id = v.slice(s).begin; id < v.slice(s).end; ++id) {
      mass += t[id - 1];
      nonzero += t[id - 1] > 0.0 ? 1 : 0;
    }
    CHECK(nonzero == 1);
    CHECK(mass == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("untrained masked-word loss is about ln m") {
  const auto corpus = tokenize_training(functional_series(100, 1), 1);
  const MaskedWordModel model(corpus.vocabulary_ptr(), EmbeddingTrainOptions{});
  std::vector<MaskedSample> batch;
  for (std::size_t i = 0; i < 50; ++i) {
    batch.push_back(make_masked_sample(corpus.vocabulary(), corpus.sentence(i), i % 2));
  }
  const double m = static_cast<double>(corpus.vocabulary().size());
  CHECK(model.loss(batch).value()[0] == doctest::Approx(std::log(m)).epsilon(0.1));
}

TEST_CASE("row 0 gets no gradient from a batch without mask or unknown rows") {
  const auto corpus = tokenize_training(functional_series(50, 2), 1);
  EmbeddingTrainOptions options;
  options.hidden1 = 8;
  options.hidden2 = 8;
  const MaskedWordModel model(corpus.vocabulary_ptr(), options);
  MaskedSample s;
  s.input = {corpus.sentence(0).words[0], corpus.sentence(0).words[1]};
  s.target = corpus.sentence(0).words[1];
  s.masked_sensor = 1;
  nn::Var loss = model.loss({s});
  loss.backward();
  const auto& g = model.params().get("embedding").grad();
  const std::size_t d = model.dim();
  for (std::size_t j = 0; j < d; ++j) CHECK(g.at(0, j) == 0.0);
  double touched = 0.0;
  for (std::size_t j = 0; j < d; ++j) touched += std::abs(g.at(s.input[0], j));
  CHECK(touched > 0.0);
}

TEST_CASE("masked-word training recovers a functional relation") {
  const auto corpus = tokenize_training(functional_series(400, 3), 1);
  EmbeddingTrainOptions options;
  options.hidden1 = 8;
  options.hidden2 = 8;
  options.epochs = 30;
  options.adam.lr = 0.01;
  options.seed = 4;
  MaskedWordModel model(corpus.vocabulary_ptr(), options);
  const auto result = train_embeddings(model, corpus, options);
  CHECK(result.epoch_loss.size() == 30);
  CHECK(result.table.rows() == corpus.vocabulary().size() + 1);
  std::size_t hit = 0;
  for (const auto& sentence : corpus.sentences()) {
    const auto sample = make_masked_sample(corpus.vocabulary(), sentence, 1);
    hit += model.predict(sample) == sample.target ? 1 : 0;
  }
  CHECK(static_cast<double>(hit) / static_cast<double>(corpus.size()) > 0.95);
}

TEST_CASE("embedding files round trip and reject a different vocabulary") {
  const auto corpus = tokenize_training(functional_series(60, 5), 1);
  const auto table = random_table(corpus.vocabulary().size() + 1, 2, 3);
  const auto dir = scratch_dir("embedding_io");
  save_embedding(dir / "emb", table, corpus.vocabulary());
  const auto back = load_embedding(dir / "emb", corpus.vocabulary());
  for (std::size_t i = 0; i < table.matrix().size(); ++i) {
    CHECK(back.matrix()[i] == table.matrix()[i]);
  }
  const auto other = tokenize_training(functional_series(60, 5), 2);
  CHECK_THROWS_AS(load_embedding(dir / "emb", other.vocabulary()), Error);
}

TEST_CASE("a period-2 corpus is forecast on held-out data") {
  const auto corpus = tokenize_training(alternating_series(200, 0), 2);
  auto model = small_lstm(corpus, 3, 7);
  const nn::Tensor before = model.table().matrix();
  LstmTrainOptions options;
  options.epochs = 10;
  options.adam.lr = 0.01;
  options.seed = 1;
  const auto losses = train_lstm_forecaster(model, corpus, options);
  REQUIRE(losses.size() == 10);
  CHECK(losses.back() < losses.front());
  const auto held_out = tokenize_inference(alternating_series(60, 1), corpus.vocabulary_ptr());
  CHECK(accuracy(model, held_out) > 0.95);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.table().matrix()[i] == before[i]);
}

TEST_CASE("a constant corpus is memorized") {
  const auto series = make_series({"a", "b"}, {std::vector<std::string>(40, "1"),
                                               std::vector<std::string>(40, "7")});
  const auto corpus = tokenize_training(series, 3);
  auto model = small_lstm(corpus, 2, 2);
  LstmTrainOptions options;
  options.epochs = 10;
  options.adam.lr = 0.01;
  train_lstm_forecaster(model, corpus, options);
  CHECK(accuracy(model, corpus) == 1.0);
}

TEST_CASE("batched and single forecasts agree and scores match the shared contract") {
  const auto corpus = tokenize_training(alternating_series(40, 0), 2);
  const auto model = small_lstm(corpus, 3, 9);
  const std::vector<std::size_t> idx{3, 10, 20, 38};
  const auto batch = model.forecast_batch(corpus, idx);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto single = model.forecast(corpus, idx[j]);
    CHECK(batch[j] == single);
    for (std::size_t s = 0; s < 3; ++s) CHECK(corpus.vocabulary().slice(s).contains(single[s]));
    const auto a = lstm_anomaly_score(single, corpus, idx[j]);
    const auto b = forecast_anomaly_score(single, corpus, idx[j]);
    CHECK(a.score == b.score);
    CHECK(a.contributions == b.contributions);
  }
  CHECK_THROWS_AS(model.forecast(corpus, 2), Error);
}

TEST_CASE("LSTM models are deterministic and round trip") {
  const auto corpus = tokenize_training(alternating_series(60, 0), 2);
  LstmTrainOptions options;
  options.epochs = 1;
  options.seed = 3;
  auto a = small_lstm(corpus, 3, 5);
  auto b = small_lstm(corpus, 3, 5);
  CHECK(train_lstm_forecaster(a, corpus, options) == train_lstm_forecaster(b, corpus, options));
  const auto dir = scratch_dir("lstm_io");
  a.save(dir / "model");
  const auto back = LstmForecaster::load(dir / "model", corpus.vocabulary_ptr());
  const std::vector<std::size_t> idx{5, 6, 7};
  const auto x = a.forward(corpus, idx).value();
  const auto y = back.forward(corpus, idx).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
  const auto other = tokenize_training(alternating_series(60, 0), 3);
  CHECK_THROWS_AS(LstmForecaster::load(dir / "model", other.vocabulary_ptr()), Error);
}
