#include "catseq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "catseq/csv.hpp"
#include "catseq/error.hpp"

namespace catseq {

namespace fs = std::filesystem;

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::kSvd:
      return "svd";
    case ModelKind::kTransformer:
      return "transformer";
    case ModelKind::kLstm:
      return "lstm";
  }
  return "svd";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "svd") return ModelKind::kSvd;
  if (text == "transformer") return ModelKind::kTransformer;
  if (text == "lstm") return ModelKind::kLstm;
  fail(ErrorKind::kInvalidArgument, "unknown model '" + text + "' (expected svd, transformer or lstm)");
}

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::kIo, "cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorKind::kIo, "cannot write " + path.string());
  }
  out << text;
  if (!out) {
    fail(ErrorKind::kIo, "write failed for " + path.string());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (word_length == 0) {
    fail(ErrorKind::kInvalidArgument, "word length must be at least 1");
  }
  if (!(alpha > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "alpha must be positive");
  }
  if (!(reference_percentile > 0.0 && reference_percentile <= 100.0)) {
    fail(ErrorKind::kInvalidArgument, "reference percentile must lie in (0, 100]");
  }
  if (!(svd.energy > 0.0 && svd.energy <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "svd energy must lie in (0, 1]");
  }
  if (!(tolerance > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "tolerance must be positive");
  }
  transformer.model.validate();
  if (lstm.model.lookback == 0) {
    fail(ErrorKind::kInvalidArgument, "LSTM lookback must be at least 1");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["word_length"] = word_length;
  j["model"] = to_string(model);
  j["alpha"] = alpha;
  j["reference_percentile"] = reference_percentile;
  j["seed"] = seed;
  j["svd"] = {{"energy", svd.energy}, {"k", svd.k}, {"unknown_factor", svd.unknown_factor}};
  nlohmann::json t = transformer.model.to_json();
  t["epochs"] = transformer.epochs;
  t["batch_size"] = transformer.batch_size;
  t["lr"] = transformer.lr;
  j["transformer"] = std::move(t);
  nlohmann::json l = lstm.model.to_json();
  l["epochs"] = lstm.epochs;
  l["batch_size"] = lstm.batch_size;
  l["lr"] = lstm.lr;
  l["embedding"] = {{"dim", lstm.embedding.dim},
                    {"hidden1", lstm.embedding.hidden1},
                    {"hidden2", lstm.embedding.hidden2},
                    {"epochs", lstm.embedding.epochs},
                    {"batch_size", lstm.embedding.batch_size},
                    {"lr", lstm.embedding.adam.lr}};
  j["lstm"] = std::move(l);
  j["subsystems"] = subsystems;
  j["ensemble"] = to_string(ensemble);
  j["cluster_gap"] = cluster_gap;
  j["tolerance"] = tolerance;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.word_length = j.value("word_length", c.word_length);
    c.model = parse_model_kind(j.value("model", std::string(to_string(c.model))));
    c.alpha = j.value("alpha", c.alpha);
    c.reference_percentile = j.value("reference_percentile", c.reference_percentile);
    c.seed = j.value("seed", c.seed);
    if (j.contains("svd")) {
      const auto& s = j.at("svd");
      c.svd.energy = s.value("energy", c.svd.energy);
      c.svd.k = s.value("k", c.svd.k);
      c.svd.unknown_factor = s.value("unknown_factor", c.svd.unknown_factor);
    }
    if (j.contains("transformer")) {
      const auto& t = j.at("transformer");
      c.transformer.model = TransformerConfig::from_json(t);
      c.transformer.epochs = t.value("epochs", c.transformer.epochs);
      c.transformer.batch_size = t.value("batch_size", c.transformer.batch_size);
      c.transformer.lr = t.value("lr", c.transformer.lr);
    }
    if (j.contains("lstm")) {
      const auto& l = j.at("lstm");
      c.lstm.model = LstmConfig::from_json(l);
      c.lstm.epochs = l.value("epochs", c.lstm.epochs);
      c.lstm.batch_size = l.value("batch_size", c.lstm.batch_size);
      c.lstm.lr = l.value("lr", c.lstm.lr);
      if (l.contains("embedding")) {
        const auto& e = l.at("embedding");
        auto& o = c.lstm.embedding;
        o.dim = e.value("dim", o.dim);
        o.hidden1 = e.value("hidden1", o.hidden1);
        o.hidden2 = e.value("hidden2", o.hidden2);
        o.epochs = e.value("epochs", o.epochs);
        o.batch_size = e.value("batch_size", o.batch_size);
        o.adam.lr = e.value("lr", o.adam.lr);
      }
    }
    c.subsystems = j.value("subsystems", c.subsystems);
    c.ensemble = parse_ensemble_policy(j.value("ensemble", std::string("any")));
    c.cluster_gap = j.value("cluster_gap", c.cluster_gap);
    c.tolerance = j.value("tolerance", c.tolerance);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed run configuration: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return RunConfig::from_json(read_json(path)); }

std::vector<SubsystemGroup> plan_subsystems(const std::vector<std::string>& sensors,
                                            const std::map<std::string, std::string>& map) {
  if (map.empty()) {
    return {{"all", sensors}};
  }
  const std::set<std::string> present(sensors.begin(), sensors.end());
  for (const auto& [sensor, group] : map) {
    if (!present.count(sensor)) {
      fail(ErrorKind::kSchema, "schema mismatch: subsystem map names unknown sensor '" + sensor + "'");
    }
  }
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& sensor : sensors) {
    const auto it = map.find(sensor);
    if (it == map.end()) {
      fail(ErrorKind::kSchema, "schema mismatch: sensor '" + sensor + "' has no subsystem");
    }
    groups[it->second].push_back(sensor);
  }
  std::vector<SubsystemGroup> out;
  for (auto& [name, members] : groups) {
    out.push_back({name, std::move(members)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

ScoreSeries score_with_svd(const SvdModel& model, const TokenizedCorpus& corpus) {
  ScoreSeries out;
  out.sensors = corpus.vocabulary().sensors();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto scored = model.score(corpus, i);
    out.times.push_back(corpus.sentence(i).time);
    out.scores.push_back(scored.score);
    out.contributions.push_back(std::move(scored.sensor_scores));
  }
  return out;
}

ScoreSeries score_with_forecaster(const Forecaster& model, const TokenizedCorpus& corpus) {
  ScoreSeries out;
  out.sensors = corpus.vocabulary().sensors();
  for (auto& s : score_corpus(model, corpus)) {
    out.times.push_back(s.time);
    out.scores.push_back(s.score.score);
    out.contributions.push_back(std::move(s.score.contributions));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const SynthSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const SyntheticData data = generate_synthetic(spec, seed);
  write_series_csv(out_dir / "train.csv", data.train);
  write_series_csv(out_dir / "test.csv", data.test);
  write_truths(out_dir / "truths.json", data.truths);
  nlohmann::json echo = spec.to_json();
  echo["seed"] = seed;
  write_json(out_dir / "spec.json", echo);
}

namespace {

std::string group_prefix(std::size_t index) { return "sub" + std::to_string(index); }

std::shared_ptr<const Vocabulary> load_vocabulary(const fs::path& path) {
  return std::make_shared<const Vocabulary>(Vocabulary::from_json(read_json(path)));
}

}  // namespace

void cmd_train(const RunConfig& config, const fs::path& train_csv, const fs::path& bundle_dir) {
  config.validate();
  const CategoricalSeries series = read_series_csv(train_csv);
  const auto groups = plan_subsystems(series.sensors, config.subsystems);
  ensure_dir(bundle_dir);

  nlohmann::json manifest;
  manifest["format"] = "catseq-bundle";
  manifest["version"] = 1;
  manifest["config"] = config.to_json();
  manifest["training_rows"] = series.rows();
  manifest["subsystems"] = nlohmann::json::array();

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const std::string prefix = group_prefix(g);
    const TokenizedCorpus corpus = tokenize_training(series.select(group.sensors), config.word_length);
    const auto vocab = corpus.vocabulary_ptr();
    write_json(bundle_dir / (prefix + ".vocabulary.json"), vocab->to_json());
    const std::uint64_t seed = config.seed + g;

    nlohmann::json entry;
    entry["name"] = group.name;
    entry["sensors"] = group.sensors;
    entry["vocabulary"] = prefix + ".vocabulary.json";
    entry["vocabulary_hash"] = vocab->fingerprint();
    entry["model"] = prefix + ".model";
    entry["word_count"] = vocab->size();

    ScoreSeries reference;
    switch (config.model) {
      case ModelKind::kSvd: {
        const SvdModel model = fit_svd_model(corpus, config.svd);
        save_svd_model(model, vocab->fingerprint(), bundle_dir / (prefix + ".model"));
        entry["k"] = model.projector.u().cols();
        reference = score_with_svd(model, corpus);
        break;
      }
      case ModelKind::kTransformer: {
        TransformerForecaster model(vocab, config.transformer.model, seed);
        TrainOptions options;
        options.epochs = config.transformer.epochs;
        options.batch_size = config.transformer.batch_size;
        options.adam.lr = config.transformer.lr;
        options.seed = seed;
        entry["epoch_loss"] = train_transformer(model, corpus, options).epoch_loss;
        model.save(bundle_dir / (prefix + ".model"));
        reference = score_with_forecaster(model, corpus);
        break;
      }
      case ModelKind::kLstm: {
        EmbeddingTrainOptions emb = config.lstm.embedding;
        emb.seed = seed;
        MaskedWordModel masked(vocab, emb);
        const EmbeddingTrainResult embedded = train_embeddings(masked, corpus, emb);
        save_embedding(bundle_dir / (prefix + ".embedding"), embedded.table, *vocab);
        entry["embedding_loss"] = embedded.epoch_loss;
        LstmForecaster model(vocab, embedded.table, config.lstm.model, seed);
        LstmTrainOptions options;
        options.epochs = config.lstm.epochs;
        options.batch_size = config.lstm.batch_size;
        options.adam.lr = config.lstm.lr;
        options.seed = seed;
        entry["epoch_loss"] = train_lstm_forecaster(model, corpus, options);
        entry["lstm"] = model.config().to_json();
        model.save(bundle_dir / (prefix + ".model"));
        reference = score_with_forecaster(model, corpus);
        break;
      }
    }
    if (reference.size() == 0) {
      fail(ErrorKind::kInvalidArgument,
           "training series too short: no sentence could be scored for subsystem " + group.name);
    }
    const Threshold th = calibrate_threshold(reference, config.alpha, config.reference_percentile);
    entry["threshold"] = th.to_json();
    entry["reference_count"] = reference.size();
    entry["reference_flagged"] = flag_times(reference, th).size();
    manifest["subsystems"].push_back(std::move(entry));
  }
  write_json(bundle_dir / "manifest.json", manifest);
}

namespace {

struct GroupScores {
  std::string name;
  ScoreSeries scores;
  Threshold threshold;
  std::vector<std::int64_t> flagged;
};

ScoreSeries score_group(const RunConfig& config, const fs::path& bundle_dir,
                        const nlohmann::json& entry, const CategoricalSeries& series) {
  const auto sensors = entry.at("sensors").get<std::vector<std::string>>();
  const auto vocab = load_vocabulary(bundle_dir / entry.at("vocabulary").get<std::string>());
  if (vocab->fingerprint() != entry.at("vocabulary_hash").get<std::uint64_t>()) {
    fail(ErrorKind::kSchema, "schema mismatch: vocabulary file does not match the manifest");
  }
  const TokenizedCorpus corpus = tokenize_inference(series.select(sensors), vocab);
  const fs::path stem = bundle_dir / entry.at("model").get<std::string>();
  switch (config.model) {
    case ModelKind::kSvd:
      return score_with_svd(load_svd_model(stem, vocab->fingerprint()), corpus);
    case ModelKind::kTransformer:
      return score_with_forecaster(TransformerForecaster::load(stem, vocab), corpus);
    case ModelKind::kLstm:
      return score_with_forecaster(LstmForecaster::load(stem, vocab), corpus);
  }
  return {};
}

double ratio(double score, const Threshold& th) {
  return th.value > 0.0 ? score / th.value : (score > 0.0 ? HUGE_VAL : 0.0);
}

}  // namespace

void cmd_detect(const fs::path& bundle_dir, const fs::path& test_csv, const fs::path& out_dir,
                std::optional<double> alpha) {
  const nlohmann::json manifest = read_json(bundle_dir / "manifest.json");
  if (manifest.value("format", "") != "catseq-bundle") {
    fail(ErrorKind::kParse, "not a catseq bundle: " + bundle_dir.string());
  }
  const RunConfig config = RunConfig::from_json(manifest.at("config"));
  const CategoricalSeries series = read_series_csv(test_csv);

  std::set<std::string> bundle_sensors;
  for (const auto& entry : manifest.at("subsystems")) {
    for (const auto& s : entry.at("sensors")) bundle_sensors.insert(s.get<std::string>());
  }
  for (const auto& s : series.sensors) {
    if (!bundle_sensors.count(s)) {
      fail(ErrorKind::kSchema, "schema mismatch: column '" + s + "' is not known to the bundle");
    }
  }

  std::vector<GroupScores> groups;
  for (const auto& entry : manifest.at("subsystems")) {
    GroupScores g;
    g.name = entry.at("name").get<std::string>();
    g.scores = score_group(config, bundle_dir, entry, series);
    g.threshold = Threshold::from_json(entry.at("threshold"));
    if (alpha) {
      g.threshold = with_alpha(g.threshold, *alpha);
    }
    g.flagged = flag_times(g.scores, g.threshold);
    groups.push_back(std::move(g));
  }

  std::vector<std::vector<std::int64_t>> members;
  for (const auto& g : groups) members.push_back(g.flagged);
  const auto combined = ensemble_flag(members, config.ensemble);
  const std::size_t gap = config.cluster_gap ? config.cluster_gap : default_cluster_gap(series.rows());
  auto events = cluster_events(combined, gap);

  ensure_dir(out_dir);
  std::string csv = "time,subsystem,score,ratio\n";
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.scores.size(); ++i) {
      csv += std::to_string(g.scores.times[i]) + "," + g.name + "," +
             format_double(g.scores.scores[i]) + "," +
             format_double(ratio(g.scores.scores[i], g.threshold)) + "\n";
    }
  }
  write_text(out_dir / "scores.csv", csv);

  nlohmann::json report;
  report["model"] = to_string(config.model);
  report["series_length"] = series.rows();
  report["alpha"] = alpha.value_or(config.alpha);
  report["ensemble"] = to_string(config.ensemble);
  report["cluster_gap"] = gap;
  report["tolerance"] = config.tolerance;
  report["subsystems"] = nlohmann::json::array();
  for (const auto& g : groups) {
    report["subsystems"].push_back({{"name", g.name},
                                    {"threshold", g.threshold.to_json()},
                                    {"scored", g.scores.size()},
                                    {"flagged", g.flagged.size()}});
  }
  report["events"] = nlohmann::json::array();
  for (auto& event : events) {
    double peak = 0.0;
    SuspectRanking merged;
    for (const auto& g : groups) {
      std::vector<std::int64_t> times;
      for (std::int64_t t : event.member_times) {
        if (std::binary_search(g.scores.times.begin(), g.scores.times.end(), t)) {
          times.push_back(t);
          peak = std::max(peak, ratio(g.scores.scores[g.scores.position(t)], g.threshold));
        }
      }
      const SuspectRanking part = suspect_ranking(g.scores, times);
      merged.entries.insert(merged.entries.end(), part.entries.begin(), part.entries.end());
    }
    std::sort(merged.entries.begin(), merged.entries.end(),
              [](const SuspectEntry& a, const SuspectEntry& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.sensor < b.sensor;
              });
    for (std::size_t i = 0; i < merged.entries.size(); ++i) merged.entries[i].rank = i + 1;
    event.peak_score = peak;
    report["events"].push_back({{"start", event.start},
                                {"end", event.end},
                                {"member_count", event.member_times.size()},
                                {"peak_ratio", std::isfinite(peak) ? nlohmann::json(peak)
                                                                   : nlohmann::json(nullptr)},
                                {"suspects", merged.to_json()}});
  }
  write_json(out_dir / "events.json", report);
}

Metrics cmd_eval(const fs::path& events_json, const fs::path& truths_json, const fs::path& out_dir,
                 std::optional<std::size_t> series_length, std::optional<double> tolerance) {
  const nlohmann::json report = read_json(events_json);
  const auto truths = read_truths(truths_json);
  std::vector<AnomalyEvent> events;
  std::vector<SuspectRanking> rankings;
  std::size_t length = 0;
  double tol = 0.01;
  std::string model;
  try {
    length = series_length.value_or(report.at("series_length").get<std::size_t>());
    tol = tolerance.value_or(report.value("tolerance", 0.01));
    model = report.value("model", "model");
    for (const auto& e : report.at("events")) {
      AnomalyEvent ev;
      ev.start = e.at("start").get<std::int64_t>();
      ev.end = e.at("end").get<std::int64_t>();
      events.push_back(ev);
      SuspectRanking r;
      for (const auto& s : e.value("suspects", nlohmann::json::array())) {
        r.entries.push_back({s.at("sensor").get<std::string>(), s.at("score").get<double>(),
                             s.at("rank").get<std::size_t>()});
      }
      rankings.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed events file: ") + e.what());
  }

  const MatchResult match = match_events(events, truths, length, tol);
  const Metrics metrics = compute_metrics(match);

  nlohmann::json out;
  out["model"] = model;
  out["series_length"] = length;
  out["tolerance"] = tol;
  out["metrics"] = metrics.to_json();
  out["matches"] = nlohmann::json::array();
  for (const auto& [e, t] : match.matched_pairs) {
    nlohmann::json m{{"event", e}, {"truth", t}};
    if (truths[t].culprit_sensors && !truths[t].culprit_sensors->empty()) {
      m["rootcause_hit_rate"] = rootcause_hit_rate(rankings[e], truths[t]);
    }
    out["matches"].push_back(std::move(m));
  }
  ensure_dir(out_dir);
  write_json(out_dir / "metrics.json", out);
  write_text(out_dir / "metrics.txt", metrics_table({{model, metrics}}));
  return metrics;
}

}  // namespace catseq
