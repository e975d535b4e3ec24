#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catseq/csv.hpp"

namespace catseq {

/// Global word index. 0 is reserved for the mask token; real words are 1..m.
using WordId = std::uint32_t;
/// Per-sensor letter code. Codes below the sensor's alphabet size are letters
/// seen in training; larger codes are letters first seen at inference.
using LetterCode = std::uint32_t;

inline constexpr WordId kMaskId = 0;

enum class WordKind { kTrueWord, kUnknownWord, kUnknownLetter };

const char* to_string(WordKind kind) noexcept;

struct Word {
  std::size_t sensor = 0;
  std::vector<LetterCode> letters;
  WordKind kind = WordKind::kTrueWord;
};

/// Half-open range of global word indices.
struct IndexRange {
  WordId begin = 0;
  WordId end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool contains(WordId id) const noexcept { return id >= begin && id < end; }
};

/// Escapes '\' and '_' so that "_"-joined text forms stay unambiguous.
std::string escape_token(const std::string& raw);

/// Canonical display form: sensor and letters joined by '_', each escaped.
std::string word_text(const std::string& sensor, const std::vector<std::string>& letters);

/// Splits a canonical word text on unescaped '_' and unescapes each part.
/// Returns (sensor, letters).
std::pair<std::string, std::vector<std::string>> parse_word_text(const std::string& text);

/// Per-sensor vocabularies with a single global integer encoding.
///
/// Indices are assigned sensor-major: every sensor owns one contiguous slice
/// holding its true words (lexicographic by letter values) followed by its
/// unknown_word and unknown_letter tokens. Immutable once built.
class Vocabulary {
 public:
  using WordSet = std::map<std::vector<LetterCode>, WordId>;

  Vocabulary(std::vector<std::string> sensors, std::vector<std::vector<std::string>> alphabets,
             const std::vector<std::vector<std::vector<LetterCode>>>& words_per_sensor,
             std::size_t word_length);

  std::size_t size() const noexcept { return words_.size() - 1; }
  std::size_t sensor_count() const noexcept { return sensors_.size(); }
  std::size_t word_length() const noexcept { return word_length_; }
  const std::vector<std::string>& sensors() const noexcept { return sensors_; }
  std::size_t sensor_index(const std::string& name) const;

  const Word& word(WordId id) const;
  std::size_t sensor_of(WordId id) const { return word(id).sensor; }
  /// Returns kMaskId when the letter sequence is not a known word of `sensor`.
  WordId find(std::size_t sensor, std::span<const LetterCode> letters) const;
  WordId unknown_word(std::size_t sensor) const { return slices_.at(sensor).end - 2; }
  WordId unknown_letter(std::size_t sensor) const { return slices_.at(sensor).end - 1; }
  IndexRange slice(std::size_t sensor) const { return slices_.at(sensor); }

  const std::vector<std::string>& alphabet(std::size_t sensor) const {
    return alphabets_.at(sensor);
  }
  std::optional<LetterCode> letter_code(std::size_t sensor, const std::string& value) const;

  std::string text(WordId id) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  /// FNV-1a hash of the canonical JSON form; used to detect schema drift.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  std::vector<std::string> sensors_;
  std::vector<std::vector<std::string>> alphabets_;
  std::vector<std::unordered_map<std::string, LetterCode>> letter_index_;
  std::vector<Word> words_;  // words_[0] is a placeholder for the mask
  std::vector<WordSet> lookup_;
  std::vector<IndexRange> slices_;
  std::size_t word_length_;
  std::uint64_t fingerprint_ = 0;
};

struct Sentence {
  std::int64_t time = 0;
  std::vector<WordId> words;  // one per sensor, in vocabulary sensor order
};

/// Sentences produced from one series, plus the letter codes they were built
/// from. Sentence i ends at row i + word_length - 1.
class TokenizedCorpus {
 public:
  TokenizedCorpus(std::shared_ptr<const Vocabulary> vocabulary,
                  std::vector<std::vector<LetterCode>> letters,
                  std::vector<std::vector<std::string>> novel_letters);

  const Vocabulary& vocabulary() const noexcept { return *vocabulary_; }
  std::shared_ptr<const Vocabulary> vocabulary_ptr() const noexcept { return vocabulary_; }
  std::size_t word_length() const noexcept { return vocabulary_->word_length(); }
  std::size_t size() const noexcept { return sentences_.size(); }
  std::size_t sensor_count() const noexcept { return vocabulary_->sensor_count(); }
  const std::vector<Sentence>& sentences() const noexcept { return sentences_; }
  const Sentence& sentence(std::size_t i) const { return sentences_.at(i); }
  const std::vector<std::string>& alphabet(std::size_t sensor) const {
    return vocabulary_->alphabet(sensor);
  }

  /// The observed letters of sensor's word in sentence i (retained even when
  /// the word itself was replaced by an unknown token).
  std::span<const LetterCode> letters(std::size_t i, std::size_t sensor) const;
  /// Observed word with its token kind and raw letters.
  Word observed_word(std::size_t i, std::size_t sensor) const;
  std::string letter_value(std::size_t sensor, LetterCode code) const;
  /// Canonical text of the observed letters (not of the replacement token).
  std::string observed_text(std::size_t i, std::size_t sensor) const;

 private:
  friend TokenizedCorpus tokenize_training(const CategoricalSeries&, std::size_t);
  friend TokenizedCorpus tokenize_inference(const CategoricalSeries&,
                                            std::shared_ptr<const Vocabulary>);

  std::shared_ptr<const Vocabulary> vocabulary_;
  std::vector<std::vector<LetterCode>> letters_;
  std::vector<std::vector<std::string>> novel_letters_;
  std::vector<Sentence> sentences_;
};

/// Builds the vocabulary from a training series and tokenizes it.
TokenizedCorpus tokenize_training(const CategoricalSeries& series, std::size_t word_length);

/// Tokenizes a series against a frozen vocabulary. Unseen words become the
/// sensor's unknown_word token, or unknown_letter when any letter is new.
/// Columns are matched by name and reordered to the vocabulary's order.
TokenizedCorpus tokenize_inference(const CategoricalSeries& series,
                                   std::shared_ptr<const Vocabulary> vocabulary);

/// Replaces a numeric column by ordinal categories calibrated on its first
/// `calibration_steps` rows. Later values map to the nearest calibration
/// value, ties going to the lower category.
CategoricalSeries ordinal_rank_column(const CategoricalSeries& series, const std::string& column,
                                      std::size_t calibration_steps = 1000);

}  // namespace catseq
