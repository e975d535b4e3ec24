#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catseq/detection.hpp"

namespace catseq {

struct GroundTruthAnomaly {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::optional<std::vector<std::string>> culprit_sensors;
  std::string label;  // free-form, e.g. the injected anomaly type

  nlohmann::json to_json() const;
  static GroundTruthAnomaly from_json(const nlohmann::json& j);
};

std::vector<GroundTruthAnomaly> read_truths(const std::filesystem::path& path);
void write_truths(const std::filesystem::path& path, const std::vector<GroundTruthAnomaly>& truths);

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// (event index, truth index): the nearest-start event credited to each
  /// detected truth.
  std::vector<std::pair<std::size_t, std::size_t>> matched_pairs;
  /// Truth index each event was assigned to, if any.
  std::vector<std::optional<std::size_t>> event_truth;
};

/// An event qualifies for a truth when its start lies within
/// tolerance_frac * series_length of the truth start, or when it overlaps
/// [start, end]. Each event is assigned to its nearest qualifying truth;
/// events without one are false positives; truths with no assigned event are
/// false negatives.
MatchResult match_events(const std::vector<AnomalyEvent>& events,
                         const std::vector<GroundTruthAnomaly>& truths, std::size_t series_length,
                         double tolerance_frac = 0.01);

/// (1 + b^2) tp / ((1 + b^2) tp + b^2 fn + fp); 0 when tp is 0.
double f_beta(std::size_t tp, std::size_t fp, std::size_t fn, double beta);

/// Rounds half away from zero to `decimals` places.
double round_to(double value, int decimals);

struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double f0_5 = 0.0;

  nlohmann::json to_json() const;
};

Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t fn);
Metrics compute_metrics(const MatchResult& match);

/// Plain-text table with TP, FP, FN, F1 and F0.5 columns, one row per label.
std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows);

/// Fraction of the truth's culprits found in the top ceil(top_frac * sensors)
/// entries of the ranking.
double rootcause_hit_rate(const SuspectRanking& ranking, const GroundTruthAnomaly& truth,
                          double top_frac = 0.10);

}  // namespace catseq
