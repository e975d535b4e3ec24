#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace catseq {

/// Per-sentence anomaly scores of one model, with per-sensor contributions.
struct ScoreSeries {
  std::vector<std::string> sensors;
  std::vector<std::int64_t> times;                // strictly increasing
  std::vector<double> scores;                     // aligned with times
  std::vector<std::vector<double>> contributions;  // [time][sensor]

  std::size_t size() const noexcept { return times.size(); }
  /// Position of `time`, or throws for a time not in the series.
  std::size_t position(std::int64_t time) const;
  /// Checks alignment, ordering and that contributions sum to the scores.
  void validate() const;
};

/// Linearly interpolated percentile between order statistics, q in [0, 100].
double percentile(std::vector<double> values, double q);

struct Threshold {
  double reference_percentile = 99.5;
  double alpha = 1.25;
  double percentile_value = 0.0;
  double value = 0.0;

  nlohmann::json to_json() const;
  static Threshold from_json(const nlohmann::json& j);
};

Threshold calibrate_threshold(const std::vector<double>& reference, double alpha,
                              double reference_percentile = 99.5);
Threshold calibrate_threshold(const ScoreSeries& reference, double alpha,
                              double reference_percentile = 99.5);
/// Same reference percentile, different alpha.
Threshold with_alpha(const Threshold& threshold, double alpha);

/// Times whose score strictly exceeds the threshold.
std::vector<std::int64_t> flag_times(const ScoreSeries& scores, const Threshold& threshold);

struct AnomalyEvent {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<std::int64_t> member_times;
  double peak_score = 0.0;
};

/// max(5, 0.5% of the series length).
std::size_t default_cluster_gap(std::size_t series_length) noexcept;

/// Merges sorted flagged times whose successive gaps are at most `gap`.
/// Peak scores are taken from `scores` when given.
std::vector<AnomalyEvent> cluster_events(std::vector<std::int64_t> flagged, std::size_t gap,
                                         const ScoreSeries* scores = nullptr);

struct SuspectEntry {
  std::string sensor;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct SuspectRanking {
  std::vector<SuspectEntry> entries;  // descending score, ties by name

  std::vector<std::string> order() const;
  nlohmann::json to_json() const;
};

/// Sums each sensor's contributions over `times`.
SuspectRanking suspect_ranking(const ScoreSeries& scores, const std::vector<std::int64_t>& times);

enum class EnsemblePolicy { kAny, kMajority };

const char* to_string(EnsemblePolicy policy) noexcept;
EnsemblePolicy parse_ensemble_policy(const std::string& text);

/// Combines per-member flagged sets time by time. kAny is the union; kMajority
/// keeps times flagged by more than half the members.
std::vector<std::int64_t> ensemble_flag(const std::vector<std::vector<std::int64_t>>& members,
                                        EnsemblePolicy policy = EnsemblePolicy::kAny);

}  // namespace catseq
