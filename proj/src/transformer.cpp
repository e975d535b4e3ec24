#include "catseq/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catseq/error.hpp"

namespace catseq {

void TransformerConfig::validate() const {
  if (d_model == 0 || heads == 0 || blocks == 0 || ffn_multiplier == 0) {
    fail(ErrorKind::kInvalidArgument, "transformer dimensions must be positive");
  }
  if (lookback == 0) {
    fail(ErrorKind::kInvalidArgument, "transformer lookback must be at least 1");
  }
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"d_model", d_model},
          {"heads", heads},
          {"blocks", blocks},
          {"lookback", lookback},
          {"ffn_multiplier", ffn_multiplier}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.lookback = j.value("lookback", c.lookback);
  c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
  c.validate();
  return c;
}

nn::AttentionMask dual_attention_mask(const TokenLayout& layout) {
  const std::size_t len = layout.length();
  const std::size_t ctx = layout.context_length();
  nn::AttentionMask mask;
  mask.queries = len;
  mask.keys = len;
  mask.visible.assign(len * len, 0);
  for (std::size_t q = 0; q < len; ++q) {
    for (std::size_t k = 0; k < ctx; ++k) {
      mask.visible[q * len + k] = 1;
    }
    if (q >= ctx) {
      mask.visible[q * len + q] = 1;
    }
  }
  return mask;
}

TransformerSample assemble_sample(const TokenizedCorpus& corpus, std::size_t index,
                                  std::size_t lookback) {
  if (index < lookback || index >= corpus.size()) {
    fail(ErrorKind::kInvalidArgument,
         "window underflow: sentence " + std::to_string(index) + " needs " +
             std::to_string(lookback) + " preceding sentences");
  }
  const std::size_t sensors = corpus.sensor_count();
  TransformerSample sample;
  sample.tokens.reserve((lookback + 1) * sensors);
  for (std::size_t i = index - lookback; i < index; ++i) {
    for (WordId id : corpus.sentence(i).words) {
      sample.tokens.push_back(id);
    }
  }
  sample.tokens.insert(sample.tokens.end(), sensors, kMaskId);
  sample.targets = corpus.sentence(index).words;
  sample.time = corpus.sentence(index).time;
  return sample;
}

namespace {

std::string block_name(std::size_t b, const char* part) {
  return "block" + std::to_string(b) + "." + part;
}

}  // namespace

TransformerForecaster::TransformerForecaster(std::shared_ptr<const Vocabulary> vocabulary,
                                             TransformerConfig config, std::uint64_t seed)
    : vocabulary_(std::move(vocabulary)), config_(config) {
  config_.validate();
  layout_.sensors = vocabulary_->sensor_count();
  layout_.lookback = config_.lookback;
  mask_ = dual_attention_mask(layout_);

  const std::size_t m = vocabulary_->size();
  const std::size_t d = config_.d_model;
  const std::size_t inner = config_.heads * config_.head_dim();
  const std::size_t ffn = config_.ffn_multiplier * d;
  std::mt19937_64 rng(seed);

  params_.add("token_embedding", nn::normal_init({m + 1, d}, 0.02, rng));
  params_.add("position_embedding", nn::normal_init({layout_.length(), d}, 0.02, rng));
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    params_.add(block_name(b, "ln1.gamma"), nn::Tensor({d}, 1.0));
    params_.add(block_name(b, "ln1.beta"), nn::Tensor({d}, 0.0));
    for (const char* proj : {"wq", "wk", "wv"}) {
      params_.add(block_name(b, proj), nn::uniform_fan_in({d, inner}, d, rng));
    }
    params_.add(block_name(b, "bq"), nn::Tensor({inner}, 0.0));
    params_.add(block_name(b, "bk"), nn::Tensor({inner}, 0.0));
    params_.add(block_name(b, "bv"), nn::Tensor({inner}, 0.0));
    params_.add(block_name(b, "wo"), nn::uniform_fan_in({inner, d}, inner, rng));
    params_.add(block_name(b, "bo"), nn::Tensor({d}, 0.0));
    params_.add(block_name(b, "ln2.gamma"), nn::Tensor({d}, 1.0));
    params_.add(block_name(b, "ln2.beta"), nn::Tensor({d}, 0.0));
    params_.add(block_name(b, "ffn.w1"), nn::uniform_fan_in({d, ffn}, d, rng));
    params_.add(block_name(b, "ffn.b1"), nn::Tensor({ffn}, 0.0));
    params_.add(block_name(b, "ffn.w2"), nn::uniform_fan_in({ffn, d}, ffn, rng));
    params_.add(block_name(b, "ffn.b2"), nn::Tensor({d}, 0.0));
  }
  params_.add("final_ln.gamma", nn::Tensor({d}, 1.0));
  params_.add("final_ln.beta", nn::Tensor({d}, 0.0));
  params_.add("output.w", nn::uniform_fan_in({d, m}, d, rng));
  params_.add("output.b", nn::Tensor({m}, 0.0));

  for (std::size_t s = 0; s < layout_.sensors; ++s) {
    const IndexRange slice = vocabulary_->slice(s);
    ranges_.push_back({slice.begin - 1u, slice.end - 1u});
  }
}

nn::Var TransformerForecaster::forward(const std::vector<std::size_t>& tokens) const {
  using namespace nn;
  if (tokens.size() != layout_.length()) {
    fail(ErrorKind::kSchema, "token sequence has length " + std::to_string(tokens.size()) +
                                 ", layout expects " + std::to_string(layout_.length()));
  }
  Var x = add(embedding(params_.get("token_embedding"), tokens),
              params_.get("position_embedding"));
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const auto p = [&](const char* part) -> const Var& { return params_.get(block_name(b, part)); };
    const Var h = layer_norm(x, p("ln1.gamma"), p("ln1.beta"));
    const Var q = dense(h, p("wq"), p("bq"));
    const Var k = dense(h, p("wk"), p("bk"));
    const Var v = dense(h, p("wv"), p("bv"));
    const Var a = attention(q, k, v, config_.heads, &mask_);
    x = add(x, dense(a, p("wo"), p("bo")));
    const Var h2 = layer_norm(x, p("ln2.gamma"), p("ln2.beta"));
    x = add(x, dense(gelu(dense(h2, p("ffn.w1"), p("ffn.b1"))), p("ffn.w2"), p("ffn.b2")));
  }
  std::vector<std::size_t> targets(layout_.sensors);
  for (std::size_t s = 0; s < layout_.sensors; ++s) {
    targets[s] = layout_.target_position(s);
  }
  const Var out = layer_norm(select_rows(x, targets), params_.get("final_ln.gamma"),
                             params_.get("final_ln.beta"));
  return dense(out, params_.get("output.w"), params_.get("output.b"));
}

nn::Var TransformerForecaster::loss(const TransformerSample& sample) const {
  if (sample.targets.size() != layout_.sensors) {
    fail(ErrorKind::kSchema, "sample has the wrong number of target words");
  }
  std::vector<std::size_t> cols(layout_.sensors);
  for (std::size_t s = 0; s < layout_.sensors; ++s) {
    cols[s] = sample.targets[s] - 1u;
  }
  return nn::grouped_cross_entropy(forward(sample.tokens), ranges_, cols);
}

std::vector<WordId> TransformerForecaster::forecast_tokens(
    const std::vector<std::size_t>& tokens) const {
  const nn::Var logits = forward(tokens);
  const std::size_t m = vocabulary_->size();
  std::vector<WordId> out(layout_.sensors);
  for (std::size_t s = 0; s < layout_.sensors; ++s) {
    std::span<const double> row(logits.value().data() + s * m, m);
    out[s] = argmax_in_slice(row, vocabulary_->slice(s));
  }
  return out;
}

std::vector<WordId> TransformerForecaster::forecast(const TokenizedCorpus& corpus,
                                                    std::size_t index) const {
  if (&corpus.vocabulary() != vocabulary_.get() &&
      corpus.vocabulary().fingerprint() != vocabulary_->fingerprint()) {
    fail(ErrorKind::kSchema, "schema mismatch: corpus was tokenized with another vocabulary");
  }
  return forecast_tokens(assemble_sample(corpus, index, config_.lookback).tokens);
}

void TransformerForecaster::save(const std::filesystem::path& stem) const {
  nlohmann::json header;
  header["kind"] = "transformer";
  header["config"] = config_.to_json();
  header["vocabulary_hash"] = vocabulary_->fingerprint();
  header["sensor_order"] = vocabulary_->sensors();
  nn::save_params(stem, params_, header);
}

TransformerForecaster TransformerForecaster::load(const std::filesystem::path& stem,
                                                  std::shared_ptr<const Vocabulary> vocabulary) {
  const auto file = nn::load_tensors(stem);
  const auto& h = file.header;
  if (h.value("kind", "") != "transformer") {
    fail(ErrorKind::kParse, "not a transformer parameter file: " + stem.string());
  }
  if (h.at("vocabulary_hash").get<std::uint64_t>() != vocabulary->fingerprint()) {
    fail(ErrorKind::kSchema, "schema mismatch: model was trained on a different vocabulary");
  }
  TransformerForecaster model(std::move(vocabulary), TransformerConfig::from_json(h.at("config")),
                              0);
  nn::load_params(stem, model.params_);
  return model;
}

TrainReport train_transformer(TransformerForecaster& model, const TokenizedCorpus& corpus,
                              const TrainOptions& options) {
  const std::size_t n = model.config().lookback;
  if (corpus.size() <= n) {
    fail(ErrorKind::kInvalidArgument, "corpus has no sentence with a full lookback window");
  }
  std::vector<TransformerSample> samples;
  samples.reserve(corpus.size() - n);
  for (std::size_t i = n; i < corpus.size(); ++i) {
    samples.push_back(assemble_sample(corpus, i, n));
  }
  std::mt19937_64 rng(options.seed);
  nn::Adam adam(model.params().all(), options.adam);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);

  TrainReport report;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      adam.zero_grad();
      for (std::size_t j = start; j < end; ++j) {
        nn::Var l = nn::scale(model.loss(samples[order[j]]), 1.0 / static_cast<double>(end - start));
        if (!std::isfinite(l.value()[0])) {
          fail(ErrorKind::kDiverged, "training diverged: non-finite transformer loss");
        }
        total += l.value()[0] * static_cast<double>(end - start);
        l.backward();
      }
      adam.step();
    }
    report.epoch_loss.push_back(total / static_cast<double>(samples.size()));
  }
  return report;
}

}  // namespace catseq
