#include "catseq/embedding_lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catseq/error.hpp"

namespace catseq {

std::size_t default_embedding_dim(std::size_t sensors) noexcept { return sensors <= 30 ? 2 : 5; }

EmbeddingTable::EmbeddingTable(nn::Tensor matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rank() != 2 || matrix_.rows() == 0 || matrix_.cols() == 0) {
    fail(ErrorKind::kInvalidArgument, "embedding table must be a nonempty matrix");
  }
}

std::span<const double> EmbeddingTable::row(std::size_t index) const {
  if (index >= rows()) {
    fail(ErrorKind::kInvalidArgument, "embedding row " + std::to_string(index) + " out of range");
  }
  return {matrix_.data() + index * dim(), dim()};
}

std::size_t embedding_row(const Vocabulary& vocab, WordId id) {
  if (id == kMaskId) {
    return 0;
  }
  return vocab.word(id).kind == WordKind::kTrueWord ? id : 0;
}

std::vector<double> embed_sentence(const EmbeddingTable& table, const Vocabulary& vocab,
                                   const Sentence& sentence) {
  if (sentence.words.size() != vocab.sensor_count()) {
    fail(ErrorKind::kSchema, "sentence does not have one word per sensor");
  }
  if (table.rows() != vocab.size() + 1) {
    fail(ErrorKind::kSchema, "embedding table does not match the vocabulary size");
  }
  std::vector<double> out;
  out.reserve(sentence.words.size() * table.dim());
  for (WordId id : sentence.words) {
    const auto r = table.row(embedding_row(vocab, id));
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

MaskedSample make_masked_sample(const Vocabulary& vocab, const Sentence& sentence,
                                std::size_t masked_sensor) {
  if (masked_sensor >= sentence.words.size()) {
    fail(ErrorKind::kInvalidArgument, "masked sensor out of range");
  }
  MaskedSample sample;
  sample.input.reserve(sentence.words.size());
  for (WordId id : sentence.words) {
    sample.input.push_back(embedding_row(vocab, id));
  }
  sample.input[masked_sensor] = 0;
  sample.target = sentence.words[masked_sensor];
  sample.masked_sensor = masked_sensor;
  return sample;
}

// ---------------------------------------------------------------------------
// Masked-word model

MaskedWordModel::MaskedWordModel(std::shared_ptr<const Vocabulary> vocabulary,
                                 const EmbeddingTrainOptions& options)
    : vocabulary_(std::move(vocabulary)) {
  const std::size_t s = vocabulary_->sensor_count();
  const std::size_t m = vocabulary_->size();
  dim_ = options.dim ? options.dim : default_embedding_dim(s);
  hidden1_ = options.hidden1 ? options.hidden1 : s;
  hidden2_ = options.hidden2 ? options.hidden2
                             : static_cast<std::size_t>(std::lround((static_cast<double>(m) +
                                                                     static_cast<double>(s)) /
                                                                    2.0));
  std::mt19937_64 rng(options.seed);
  params_.add("embedding", nn::normal_init({m + 1, dim_}, 0.02, rng));
  params_.add("l1.w", nn::uniform_fan_in({s * dim_, hidden1_}, s * dim_, rng));
  params_.add("l1.b", nn::Tensor({hidden1_}, 0.0));
  params_.add("l2.w", nn::uniform_fan_in({hidden1_, hidden2_}, hidden1_, rng));
  params_.add("l2.b", nn::Tensor({hidden2_}, 0.0));
  params_.add("l3.w", nn::uniform_fan_in({hidden2_, m}, hidden2_, rng));
  params_.add("l3.b", nn::Tensor({m}, 0.0));
}

nn::Var MaskedWordModel::forward(const std::vector<MaskedSample>& batch) const {
  using namespace nn;
  const std::size_t s = vocabulary_->sensor_count();
  std::vector<std::size_t> rows;
  rows.reserve(batch.size() * s);
  for (const auto& sample : batch) {
    if (sample.input.size() != s) {
      fail(ErrorKind::kSchema, "masked sample does not have one word per sensor");
    }
    rows.insert(rows.end(), sample.input.begin(), sample.input.end());
  }
  const Var x = reshape(embedding(params_.get("embedding"), rows), {batch.size(), s * dim_});
  const Var h1 = relu(dense(x, params_.get("l1.w"), params_.get("l1.b")));
  const Var h2 = relu(dense(h1, params_.get("l2.w"), params_.get("l2.b")));
  return dense(h2, params_.get("l3.w"), params_.get("l3.b"));
}

nn::Var MaskedWordModel::loss(const std::vector<MaskedSample>& batch) const {
  std::vector<std::size_t> targets;
  targets.reserve(batch.size());
  for (const auto& sample : batch) {
    targets.push_back(sample.target - 1u);
  }
  return nn::softmax_cross_entropy(forward(batch), targets);
}

WordId MaskedWordModel::predict(const MaskedSample& sample) const {
  const nn::Var logits = forward({sample});
  return argmax_in_slice(logits.value().values(), vocabulary_->slice(sample.masked_sensor));
}

EmbeddingTable MaskedWordModel::table() const {
  return EmbeddingTable(params_.get("embedding").value());
}

EmbeddingTrainResult train_embeddings(MaskedWordModel& model, const TokenizedCorpus& corpus,
                                      const EmbeddingTrainOptions& options) {
  if (corpus.size() == 0) {
    fail(ErrorKind::kInvalidArgument, "embedding training needs a nonempty corpus");
  }
  const Vocabulary& vocab = corpus.vocabulary();
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.sensor_count() - 1);
  nn::Adam adam(model.params().all(), options.adam);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);

  EmbeddingTrainResult result;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<MaskedSample> samples;
      samples.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) {
        samples.push_back(make_masked_sample(vocab, corpus.sentence(order[j]), pick(rng)));
      }
      adam.zero_grad();
      nn::Var l = model.loss(samples);
      if (!std::isfinite(l.value()[0])) {
        fail(ErrorKind::kDiverged, "training diverged: non-finite embedding loss");
      }
      total += l.value()[0] * static_cast<double>(end - start);
      l.backward();
      adam.step();
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  result.table = model.table();
  return result;
}

void save_embedding(const std::filesystem::path& stem, const EmbeddingTable& table,
                    const Vocabulary& vocab) {
  nlohmann::json header;
  header["kind"] = "embedding";
  header["vocabulary_hash"] = vocab.fingerprint();
  nn::save_tensors(stem, {{"embedding", table.matrix()}}, header);
}

EmbeddingTable load_embedding(const std::filesystem::path& stem, const Vocabulary& vocab) {
  const auto file = nn::load_tensors(stem);
  if (file.header.value("kind", "") != "embedding") {
    fail(ErrorKind::kParse, "not an embedding file: " + stem.string());
  }
  if (file.header.at("vocabulary_hash").get<std::uint64_t>() != vocab.fingerprint()) {
    fail(ErrorKind::kSchema, "schema mismatch: embedding was trained on a different vocabulary");
  }
  EmbeddingTable table(file.get("embedding"));
  if (table.rows() != vocab.size() + 1) {
    fail(ErrorKind::kSchema, "embedding table does not match the vocabulary size");
  }
  return table;
}

// ---------------------------------------------------------------------------
// LSTM forecaster

LstmConfig LstmConfig::resolved(std::size_t sensors, std::size_t words) const {
  LstmConfig c = *this;
  if (c.lstm1 == 0) {
    c.lstm1 = std::max<std::size_t>(sensors / 2, 800);
  }
  if (c.lstm2 == 0) {
    c.lstm2 = static_cast<std::size_t>(
        std::lround((static_cast<double>(c.lstm1) + static_cast<double>(words)) / 2.0));
  }
  if (c.lookback == 0 || c.lstm1 == 0 || c.lstm2 == 0) {
    fail(ErrorKind::kInvalidArgument, "LSTM dimensions and lookback must be positive");
  }
  return c;
}

nlohmann::json LstmConfig::to_json() const {
  return {{"lookback", lookback}, {"lstm1", lstm1}, {"lstm2", lstm2}};
}

LstmConfig LstmConfig::from_json(const nlohmann::json& j) {
  LstmConfig c;
  c.lookback = j.value("lookback", c.lookback);
  c.lstm1 = j.value("lstm1", c.lstm1);
  c.lstm2 = j.value("lstm2", c.lstm2);
  return c;
}

nn::Tensor multi_hot_target(const Vocabulary& vocab, const Sentence& sentence) {
  if (sentence.words.size() != vocab.sensor_count()) {
    fail(ErrorKind::kSchema, "sentence does not have one word per sensor");
  }
  nn::Tensor t({vocab.size()}, 0.0);
  const double mass = 1.0 / static_cast<double>(sentence.words.size());
  for (WordId id : sentence.words) {
    t[id - 1] += mass;
  }
  return t;
}

LstmForecaster::LstmForecaster(std::shared_ptr<const Vocabulary> vocabulary, EmbeddingTable table,
                               LstmConfig config, std::uint64_t seed)
    : vocabulary_(std::move(vocabulary)), table_(std::move(table)) {
  const std::size_t s = vocabulary_->sensor_count();
  const std::size_t m = vocabulary_->size();
  config_ = config.resolved(s, m);
  if (table_.rows() != m + 1) {
    fail(ErrorKind::kSchema, "embedding table does not match the vocabulary size");
  }
  const std::size_t in = s * table_.dim();
  const std::size_t h1 = config_.lstm1, h2 = config_.lstm2;
  std::mt19937_64 rng(seed);
  params_.add("lstm1.w_input", nn::uniform_fan_in({in, 4 * h1}, h1, rng));
  params_.add("lstm1.w_recurrent", nn::uniform_fan_in({h1, 4 * h1}, h1, rng));
  params_.add("lstm1.bias", nn::uniform_fan_in({4 * h1}, h1, rng));
  params_.add("lstm2.w_input", nn::uniform_fan_in({h1, 4 * h2}, h2, rng));
  params_.add("lstm2.w_recurrent", nn::uniform_fan_in({h2, 4 * h2}, h2, rng));
  params_.add("lstm2.bias", nn::uniform_fan_in({4 * h2}, h2, rng));
  params_.add("output.w", nn::uniform_fan_in({h2, m}, h2, rng));
  params_.add("output.b", nn::Tensor({m}, 0.0));
}

void LstmForecaster::check_corpus(const TokenizedCorpus& corpus) const {
  if (&corpus.vocabulary() != vocabulary_.get() &&
      corpus.vocabulary().fingerprint() != vocabulary_->fingerprint()) {
    fail(ErrorKind::kSchema, "schema mismatch: corpus was tokenized with another vocabulary");
  }
}

nn::Var LstmForecaster::forward(const TokenizedCorpus& corpus,
                                const std::vector<std::size_t>& indices) const {
  using namespace nn;
  check_corpus(corpus);
  const Vocabulary& vocab = *vocabulary_;
  const std::size_t n = config_.lookback;
  const std::size_t width = vocab.sensor_count() * table_.dim();
  for (std::size_t index : indices) {
    if (index < n || index >= corpus.size()) {
      fail(ErrorKind::kInvalidArgument, "window underflow: sentence " + std::to_string(index) +
                                            " needs " + std::to_string(n) +
                                            " preceding sentences");
    }
  }
  const LstmParams p1{params_.get("lstm1.w_input"), params_.get("lstm1.w_recurrent"),
                      params_.get("lstm1.bias")};
  const LstmParams p2{params_.get("lstm2.w_input"), params_.get("lstm2.w_recurrent"),
                      params_.get("lstm2.bias")};
  LstmState s1 = lstm_zero_state(indices.size(), config_.lstm1);
  LstmState s2 = lstm_zero_state(indices.size(), config_.lstm2);
  for (std::size_t step = 0; step < n; ++step) {
    Tensor x = Tensor::matrix(indices.size(), width);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const auto v = embed_sentence(table_, vocab, corpus.sentence(indices[b] - n + step));
      std::copy(v.begin(), v.end(), x.data() + b * width);
    }
    s1 = lstm_step(Var::constant(std::move(x)), s1, p1);
    s2 = lstm_step(s1.h, s2, p2);
  }
  return dense(s2.h, params_.get("output.w"), params_.get("output.b"));
}

nn::Var LstmForecaster::loss(const TokenizedCorpus& corpus,
                             const std::vector<std::size_t>& indices) const {
  const std::size_t m = vocabulary_->size();
  nn::Tensor targets = nn::Tensor::matrix(indices.size(), m);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const nn::Tensor t = multi_hot_target(*vocabulary_, corpus.sentence(indices[b]));
    std::copy(t.data(), t.data() + m, targets.data() + b * m);
  }
  return nn::softmax_cross_entropy(forward(corpus, indices), targets);
}

std::vector<std::vector<WordId>> LstmForecaster::forecast_batch(
    const TokenizedCorpus& corpus, const std::vector<std::size_t>& indices) const {
  const nn::Var logits = forward(corpus, indices);
  const std::size_t m = vocabulary_->size();
  std::vector<std::vector<WordId>> out(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::span<const double> row(logits.value().data() + b * m, m);
    out[b].reserve(vocabulary_->sensor_count());
    for (std::size_t s = 0; s < vocabulary_->sensor_count(); ++s) {
      out[b].push_back(argmax_in_slice(row, vocabulary_->slice(s)));
    }
  }
  return out;
}

std::vector<WordId> LstmForecaster::forecast(const TokenizedCorpus& corpus,
                                             std::size_t index) const {
  return forecast_batch(corpus, {index}).front();
}

void LstmForecaster::save(const std::filesystem::path& stem) const {
  nlohmann::json header;
  header["kind"] = "lstm";
  header["config"] = config_.to_json();
  header["vocabulary_hash"] = vocabulary_->fingerprint();
  header["sensor_order"] = vocabulary_->sensors();
  std::vector<nn::NamedTensor> tensors{{"embedding", table_.matrix()}};
  for (const auto& [name, var] : params_.entries()) {
    tensors.push_back({name, var.value()});
  }
  nn::save_tensors(stem, tensors, header);
}

LstmForecaster LstmForecaster::load(const std::filesystem::path& stem,
                                    std::shared_ptr<const Vocabulary> vocabulary) {
  const auto file = nn::load_tensors(stem);
  const auto& h = file.header;
  if (h.value("kind", "") != "lstm") {
    fail(ErrorKind::kParse, "not an LSTM parameter file: " + stem.string());
  }
  if (h.at("vocabulary_hash").get<std::uint64_t>() != vocabulary->fingerprint()) {
    fail(ErrorKind::kSchema, "schema mismatch: model was trained on a different vocabulary");
  }
  LstmForecaster model(std::move(vocabulary), EmbeddingTable(file.get("embedding")),
                       LstmConfig::from_json(h.at("config")), 0);
  if (file.tensors.size() != model.params_.entries().size() + 1) {
    fail(ErrorKind::kSchema, "LSTM parameter file has an unexpected tensor count");
  }
  for (auto& [name, var] : model.params_.entries()) {
    const nn::Tensor& t = file.get(name);
    if (!t.same_shape(var.value())) {
      fail(ErrorKind::kSchema, "parameter '" + name + "' has shape " + nn::shape_string(t.shape()) +
                                   ", model expects " + nn::shape_string(var.shape()));
    }
    nn::Var copy = var;
    copy.value() = t;
  }
  return model;
}

std::vector<double> train_lstm_forecaster(LstmForecaster& model, const TokenizedCorpus& corpus,
                                          const LstmTrainOptions& options) {
  const std::size_t n = model.lookback();
  if (corpus.size() <= n) {
    fail(ErrorKind::kInvalidArgument, "corpus has no sentence with a full lookback window");
  }
  std::vector<std::size_t> order(corpus.size() - n);
  std::iota(order.begin(), order.end(), n);
  std::mt19937_64 rng(options.seed);
  nn::Adam adam(model.params().all(), options.adam);
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);

  std::vector<double> epoch_loss;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
      adam.zero_grad();
      nn::Var l = model.loss(corpus, indices);
      if (!std::isfinite(l.value()[0])) {
        fail(ErrorKind::kDiverged, "training diverged: non-finite LSTM loss");
      }
      total += l.value()[0] * static_cast<double>(end - start);
      l.backward();
      adam.step();
    }
    epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return epoch_loss;
}

ForecastScore lstm_anomaly_score(const std::vector<WordId>& forecast,
                                 const TokenizedCorpus& actual, std::size_t index) {
  return forecast_anomaly_score(forecast, actual, index);
}

}  // namespace catseq
