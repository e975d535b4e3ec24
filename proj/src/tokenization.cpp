#include "catseq/tokenization.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "catseq/error.hpp"

namespace catseq {

const char* to_string(WordKind kind) noexcept {
  switch (kind) {
    case WordKind::kTrueWord:
      return "true_word";
    case WordKind::kUnknownWord:
      return "unknown_word";
    case WordKind::kUnknownLetter:
      return "unknown_letter";
  }
  return "true_word";
}

namespace {

WordKind kind_from_string(const std::string& s) {
  if (s == "true_word") return WordKind::kTrueWord;
  if (s == "unknown_word") return WordKind::kUnknownWord;
  if (s == "unknown_letter") return WordKind::kUnknownLetter;
  fail(ErrorKind::kParse, "unknown word kind '" + s + "'");
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string escape_token(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '\\' || c == '_') {
      out.push_back('\\');
    }
    out.push_back(c);
  }
  return out;
}

std::string word_text(const std::string& sensor, const std::vector<std::string>& letters) {
  std::string out = escape_token(sensor);
  for (const auto& l : letters) {
    out.push_back('_');
    out += escape_token(l);
  }
  return out;
}

std::pair<std::string, std::vector<std::string>> parse_word_text(const std::string& text) {
  std::vector<std::string> parts(1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\') {
      if (i + 1 >= text.size()) {
        fail(ErrorKind::kParse, "dangling escape in word text '" + text + "'");
      }
      parts.back().push_back(text[++i]);
    } else if (c == '_') {
      parts.emplace_back();
    } else {
      parts.back().push_back(c);
    }
  }
  std::string sensor = std::move(parts.front());
  parts.erase(parts.begin());
  return {std::move(sensor), std::move(parts)};
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> sensors,
                       std::vector<std::vector<std::string>> alphabets,
                       const std::vector<std::vector<std::vector<LetterCode>>>& words_per_sensor,
                       std::size_t word_length)
    : sensors_(std::move(sensors)), alphabets_(std::move(alphabets)), word_length_(word_length) {
  if (sensors_.empty()) {
    fail(ErrorKind::kInvalidArgument, "vocabulary needs at least one sensor");
  }
  if (alphabets_.size() != sensors_.size() || words_per_sensor.size() != sensors_.size()) {
    fail(ErrorKind::kInvalidArgument, "inconsistent inputs: per-sensor table sizes differ");
  }
  if (word_length_ == 0) {
    fail(ErrorKind::kInvalidArgument, "word length must be positive");
  }
  letter_index_.resize(sensors_.size());
  for (std::size_t s = 0; s < sensors_.size(); ++s) {
    for (std::size_t a = 0; a < alphabets_[s].size(); ++a) {
      letter_index_[s].emplace(alphabets_[s][a], static_cast<LetterCode>(a));
    }
  }

  words_.emplace_back();  // mask placeholder
  lookup_.resize(sensors_.size());
  slices_.resize(sensors_.size());
  for (std::size_t s = 0; s < sensors_.size(); ++s) {
    std::set<std::vector<LetterCode>> sorted(words_per_sensor[s].begin(),
                                             words_per_sensor[s].end());
    slices_[s].begin = static_cast<WordId>(words_.size());
    for (const auto& letters : sorted) {
      if (letters.size() != word_length_) {
        fail(ErrorKind::kInvalidArgument, "word length mismatch in vocabulary");
      }
      for (LetterCode c : letters) {
        if (c >= alphabets_[s].size()) {
          fail(ErrorKind::kInvalidArgument, "word letter outside the sensor alphabet");
        }
      }
      lookup_[s].emplace(letters, static_cast<WordId>(words_.size()));
      words_.push_back(Word{s, letters, WordKind::kTrueWord});
    }
    words_.push_back(Word{s, {}, WordKind::kUnknownWord});
    words_.push_back(Word{s, {}, WordKind::kUnknownLetter});
    slices_[s].end = static_cast<WordId>(words_.size());
  }
  fingerprint_ = fnv1a(to_json().dump());
}

std::size_t Vocabulary::sensor_index(const std::string& name) const {
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    if (sensors_[i] == name) {
      return i;
    }
  }
  fail(ErrorKind::kSchema, "schema mismatch: sensor '" + name + "' not in vocabulary");
}

const Word& Vocabulary::word(WordId id) const {
  if (id == kMaskId || id >= words_.size()) {
    fail(ErrorKind::kInvalidArgument, "word index " + std::to_string(id) + " out of range");
  }
  return words_[id];
}

WordId Vocabulary::find(std::size_t sensor, std::span<const LetterCode> letters) const {
  const auto& table = lookup_.at(sensor);
  auto it = table.find(std::vector<LetterCode>(letters.begin(), letters.end()));
  return it == table.end() ? kMaskId : it->second;
}

std::optional<LetterCode> Vocabulary::letter_code(std::size_t sensor,
                                                  const std::string& value) const {
  const auto& table = letter_index_.at(sensor);
  auto it = table.find(value);
  if (it == table.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::string Vocabulary::text(WordId id) const {
  const Word& w = word(id);
  switch (w.kind) {
    case WordKind::kUnknownWord:
      return escape_token(sensors_[w.sensor]) + "_unknown_word";
    case WordKind::kUnknownLetter:
      return escape_token(sensors_[w.sensor]) + "_unknown_letter";
    case WordKind::kTrueWord:
      break;
  }
  std::vector<std::string> values;
  values.reserve(w.letters.size());
  for (LetterCode c : w.letters) {
    values.push_back(alphabets_[w.sensor][c]);
  }
  return word_text(sensors_[w.sensor], values);
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["word_length"] = word_length_;
  j["sensor_order"] = sensors_;
  nlohmann::json alph = nlohmann::json::array();
  for (std::size_t s = 0; s < sensors_.size(); ++s) {
    alph.push_back({{"sensor", sensors_[s]}, {"letters", alphabets_[s]}});
  }
  j["alphabets"] = std::move(alph);
  nlohmann::json words = nlohmann::json::array();
  for (WordId id = 1; id < words_.size(); ++id) {
    const Word& w = words_[id];
    std::vector<std::string> values;
    for (LetterCode c : w.letters) {
      values.push_back(alphabets_[w.sensor][c]);
    }
    words.push_back({{"index", id},
                     {"sensor", sensors_[w.sensor]},
                     {"kind", to_string(w.kind)},
                     {"letters", values},
                     {"text", text(id)}});
  }
  j["words"] = std::move(words);
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    auto sensors = j.at("sensor_order").get<std::vector<std::string>>();
    const auto word_length = j.at("word_length").get<std::size_t>();
    std::vector<std::vector<std::string>> alphabets(sensors.size());
    const auto& alph = j.at("alphabets");
    if (alph.size() != sensors.size()) {
      fail(ErrorKind::kParse, "vocabulary alphabets do not match sensor_order");
    }
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      if (alph[s].at("sensor").get<std::string>() != sensors[s]) {
        fail(ErrorKind::kParse, "vocabulary alphabets out of sensor order");
      }
      alphabets[s] = alph[s].at("letters").get<std::vector<std::string>>();
    }
    std::vector<std::unordered_map<std::string, LetterCode>> codes(sensors.size());
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      for (std::size_t a = 0; a < alphabets[s].size(); ++a) {
        codes[s].emplace(alphabets[s][a], static_cast<LetterCode>(a));
      }
    }
    std::unordered_map<std::string, std::size_t> sensor_pos;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      sensor_pos.emplace(sensors[s], s);
    }
    std::vector<std::vector<std::vector<LetterCode>>> words(sensors.size());
    for (const auto& w : j.at("words")) {
      if (kind_from_string(w.at("kind").get<std::string>()) != WordKind::kTrueWord) {
        continue;
      }
      const std::size_t s = sensor_pos.at(w.at("sensor").get<std::string>());
      std::vector<LetterCode> letters;
      for (const auto& v : w.at("letters")) {
        letters.push_back(codes[s].at(v.get<std::string>()));
      }
      words[s].push_back(std::move(letters));
    }
    Vocabulary vocab(std::move(sensors), std::move(alphabets), words, word_length);
    // Indices are a pure function of the content; verify they agree.
    for (const auto& w : j.at("words")) {
      const auto id = w.at("index").get<WordId>();
      if (vocab.text(id) != w.at("text").get<std::string>()) {
        fail(ErrorKind::kParse, "vocabulary index table is inconsistent");
      }
    }
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed vocabulary: ") + e.what());
  } catch (const std::out_of_range&) {
    fail(ErrorKind::kParse, "malformed vocabulary: dangling reference");
  }
}


// ---------------------------------------------------------------------------
// Corpus

TokenizedCorpus::TokenizedCorpus(std::shared_ptr<const Vocabulary> vocabulary,
                                 std::vector<std::vector<LetterCode>> letters,
                                 std::vector<std::vector<std::string>> novel_letters)
    : vocabulary_(std::move(vocabulary)),
      letters_(std::move(letters)),
      novel_letters_(std::move(novel_letters)) {}

std::span<const LetterCode> TokenizedCorpus::letters(std::size_t i, std::size_t sensor) const {
  if (i >= sentences_.size()) {
    fail(ErrorKind::kInvalidArgument, "sentence index out of range");
  }
  const auto& column = letters_.at(sensor);
  return std::span<const LetterCode>(column).subspan(i, word_length());
}

Word TokenizedCorpus::observed_word(std::size_t i, std::size_t sensor) const {
  const auto lts = letters(i, sensor);
  Word w;
  w.sensor = sensor;
  w.letters.assign(lts.begin(), lts.end());
  w.kind = vocabulary_->word(sentences_[i].words[sensor]).kind;
  return w;
}

std::string TokenizedCorpus::letter_value(std::size_t sensor, LetterCode code) const {
  const auto& alph = vocabulary_->alphabet(sensor);
  if (code < alph.size()) {
    return alph[code];
  }
  return novel_letters_.at(sensor).at(code - alph.size());
}

std::string TokenizedCorpus::observed_text(std::size_t i, std::size_t sensor) const {
  std::vector<std::string> values;
  for (LetterCode c : letters(i, sensor)) {
    values.push_back(letter_value(sensor, c));
  }
  return word_text(vocabulary_->sensors()[sensor], values);
}

namespace {

void check_series_shape(const CategoricalSeries& series, std::size_t word_length) {
  if (word_length == 0) {
    fail(ErrorKind::kInvalidArgument, "word length must be positive");
  }
  if (series.sensors.empty()) {
    fail(ErrorKind::kInvalidArgument, "series has no sensor columns");
  }
  if (series.values.size() != series.sensors.size()) {
    fail(ErrorKind::kInvalidArgument, "incomplete series: column count mismatch");
  }
  for (std::size_t s = 0; s < series.sensors.size(); ++s) {
    if (series.sensors[s].empty()) {
      fail(ErrorKind::kInvalidArgument, "sensor names must be nonempty");
    }
    if (series.values[s].size() != series.rows()) {
      fail(ErrorKind::kInvalidArgument,
           "incomplete series: column '" + series.sensors[s] + "' has a missing cell");
    }
    for (const auto& v : series.values[s]) {
      if (v.empty()) {
        fail(ErrorKind::kInvalidArgument,
             "incomplete series: missing cell in column '" + series.sensors[s] + "'");
      }
    }
  }
  std::set<std::string> unique(series.sensors.begin(), series.sensors.end());
  if (unique.size() != series.sensors.size()) {
    fail(ErrorKind::kInvalidArgument, "duplicate sensor names in series");
  }
  if (series.rows() < word_length) {
    fail(ErrorKind::kInvalidArgument, "series too short: " + std::to_string(series.rows()) +
                                          " rows for word length " +
                                          std::to_string(word_length));
  }
}

}  // namespace

TokenizedCorpus tokenize_training(const CategoricalSeries& series, std::size_t word_length) {
  check_series_shape(series, word_length);
  const std::size_t n_sensors = series.sensor_count();
  const std::size_t rows = series.rows();

  std::vector<std::vector<std::string>> alphabets(n_sensors);
  std::vector<std::vector<LetterCode>> letters(n_sensors);
  for (std::size_t s = 0; s < n_sensors; ++s) {
    std::set<std::string> values(series.values[s].begin(), series.values[s].end());
    alphabets[s].assign(values.begin(), values.end());
    std::unordered_map<std::string, LetterCode> code;
    for (std::size_t a = 0; a < alphabets[s].size(); ++a) {
      code.emplace(alphabets[s][a], static_cast<LetterCode>(a));
    }
    letters[s].reserve(rows);
    for (const auto& v : series.values[s]) {
      letters[s].push_back(code.at(v));
    }
  }

  std::vector<std::vector<std::vector<LetterCode>>> words(n_sensors);
  for (std::size_t s = 0; s < n_sensors; ++s) {
    std::set<std::vector<LetterCode>> distinct;
    for (std::size_t end = word_length - 1; end < rows; ++end) {
      distinct.emplace(letters[s].begin() + static_cast<std::ptrdiff_t>(end + 1 - word_length),
                       letters[s].begin() + static_cast<std::ptrdiff_t>(end + 1));
    }
    words[s].assign(distinct.begin(), distinct.end());
  }

  auto vocab = std::make_shared<const Vocabulary>(series.sensors, std::move(alphabets), words,
                                                  word_length);
  TokenizedCorpus corpus(vocab, std::move(letters),
                         std::vector<std::vector<std::string>>(n_sensors));
  corpus.sentences_.reserve(rows - word_length + 1);
  for (std::size_t end = word_length - 1; end < rows; ++end) {
    Sentence sentence;
    sentence.time = static_cast<std::int64_t>(end);
    sentence.words.reserve(n_sensors);
    for (std::size_t s = 0; s < n_sensors; ++s) {
      const auto span = std::span<const LetterCode>(corpus.letters_[s])
                            .subspan(end + 1 - word_length, word_length);
      sentence.words.push_back(vocab->find(s, span));
    }
    corpus.sentences_.push_back(std::move(sentence));
  }
  return corpus;
}

TokenizedCorpus tokenize_inference(const CategoricalSeries& raw,
                                   std::shared_ptr<const Vocabulary> vocabulary) {
  const Vocabulary& vocab = *vocabulary;
  const std::size_t word_length = vocab.word_length();
  {
    std::set<std::string> expected(vocab.sensors().begin(), vocab.sensors().end());
    std::set<std::string> actual(raw.sensors.begin(), raw.sensors.end());
    if (expected != actual || raw.sensors.size() != vocab.sensor_count()) {
      fail(ErrorKind::kSchema, "schema mismatch: series columns differ from the vocabulary");
    }
  }
  const CategoricalSeries series = raw.select(vocab.sensors());
  check_series_shape(series, word_length);
  const std::size_t n_sensors = series.sensor_count();
  const std::size_t rows = series.rows();

  std::vector<std::vector<LetterCode>> letters(n_sensors);
  std::vector<std::vector<std::string>> novel(n_sensors);
  for (std::size_t s = 0; s < n_sensors; ++s) {
    const auto base = static_cast<LetterCode>(vocab.alphabet(s).size());
    std::unordered_map<std::string, LetterCode> novel_code;
    letters[s].reserve(rows);
    for (const auto& v : series.values[s]) {
      if (auto code = vocab.letter_code(s, v)) {
        letters[s].push_back(*code);
        continue;
      }
      auto [it, inserted] =
          novel_code.emplace(v, base + static_cast<LetterCode>(novel[s].size()));
      if (inserted) {
        novel[s].push_back(v);
      }
      letters[s].push_back(it->second);
    }
  }

  TokenizedCorpus corpus(std::move(vocabulary), std::move(letters), std::move(novel));
  corpus.sentences_.reserve(rows - word_length + 1);
  for (std::size_t end = word_length - 1; end < rows; ++end) {
    Sentence sentence;
    sentence.time = static_cast<std::int64_t>(end);
    sentence.words.reserve(n_sensors);
    for (std::size_t s = 0; s < n_sensors; ++s) {
      const auto span = std::span<const LetterCode>(corpus.letters_[s])
                            .subspan(end + 1 - word_length, word_length);
      const auto alphabet_size = vocab.alphabet(s).size();
      const bool novel_letter =
          std::any_of(span.begin(), span.end(), [&](LetterCode c) { return c >= alphabet_size; });
      WordId id = kMaskId;
      if (novel_letter) {
        id = vocab.unknown_letter(s);
      } else {
        id = vocab.find(s, span);
        if (id == kMaskId) {
          id = vocab.unknown_word(s);
        }
      }
      sentence.words.push_back(id);
    }
    corpus.sentences_.push_back(std::move(sentence));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Ordinal ranking

namespace {

std::optional<double> parse_number(const std::string& s) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t')) --last;
  if (first == last) {
    return std::nullopt;
  }
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

CategoricalSeries ordinal_rank_column(const CategoricalSeries& series, const std::string& column,
                                      std::size_t calibration_steps) {
  if (calibration_steps == 0) {
    fail(ErrorKind::kInvalidArgument, "calibration_steps must be at least 1");
  }
  const std::size_t c = series.column_index(column);
  const auto& raw = series.values[c];
  std::vector<double> numbers;
  numbers.reserve(raw.size());
  for (const auto& v : raw) {
    auto x = parse_number(v);
    if (!x) {
      fail(ErrorKind::kInvalidArgument,
           "not numeric: column '" + column + "' has value '" + v + "'");
    }
    numbers.push_back(*x);
  }
  const std::size_t calib = std::min(calibration_steps, numbers.size());
  std::vector<double> levels(numbers.begin(), numbers.begin() + static_cast<std::ptrdiff_t>(calib));
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  CategoricalSeries out = series;
  for (std::size_t r = 0; r < numbers.size(); ++r) {
    const double x = numbers[r];
    std::size_t best = 0;
    if (!levels.empty()) {
      auto it = std::lower_bound(levels.begin(), levels.end(), x);
      if (it == levels.end()) {
        best = levels.size() - 1;
      } else if (it == levels.begin()) {
        best = 0;
      } else {
        const auto hi = static_cast<std::size_t>(it - levels.begin());
        const double d_hi = levels[hi] - x;
        const double d_lo = x - levels[hi - 1];
        best = d_lo <= d_hi ? hi - 1 : hi;
      }
    }
    out.values[c][r] = std::to_string(best);
  }
  return out;
}

}  // namespace catseq
