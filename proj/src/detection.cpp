#include "catseq/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "catseq/error.hpp"

namespace catseq {

std::size_t ScoreSeries::position(std::int64_t time) const {
  const auto it = std::lower_bound(times.begin(), times.end(), time);
  if (it == times.end() || *it != time) {
    fail(ErrorKind::kInvalidArgument, "unknown time " + std::to_string(time));
  }
  return static_cast<std::size_t>(it - times.begin());
}

void ScoreSeries::validate() const {
  if (scores.size() != times.size() || contributions.size() != times.size()) {
    fail(ErrorKind::kInvalidArgument, "score series fields are not aligned");
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && times[i] <= times[i - 1]) {
      fail(ErrorKind::kInvalidArgument, "score series times must increase");
    }
    if (!(scores[i] >= 0.0) || !std::isfinite(scores[i])) {
      fail(ErrorKind::kNumeric, "score series holds a negative or non-finite score");
    }
    if (contributions[i].size() != sensors.size()) {
      fail(ErrorKind::kInvalidArgument, "contribution row does not cover every sensor");
    }
    double total = 0.0;
    for (double c : contributions[i]) total += c;
    if (std::abs(total - scores[i]) > 1e-9 * std::max(1.0, std::abs(scores[i]))) {
      fail(ErrorKind::kNumeric, "contributions do not sum to the score");
    }
  }
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) {
    fail(ErrorKind::kInvalidArgument, "percentile of an empty reference");
  }
  if (!(q >= 0.0 && q <= 100.0)) {
    fail(ErrorKind::kInvalidArgument, "percentile must lie in [0, 100]");
  }
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

nlohmann::json Threshold::to_json() const {
  return {{"reference_percentile", reference_percentile},
          {"alpha", alpha},
          {"percentile_value", percentile_value},
          {"value", value},
          {"percentile_method", "linear"}};
}

Threshold Threshold::from_json(const nlohmann::json& j) {
  Threshold t;
  t.reference_percentile = j.at("reference_percentile").get<double>();
  t.alpha = j.at("alpha").get<double>();
  t.percentile_value = j.at("percentile_value").get<double>();
  t.value = j.at("value").get<double>();
  return t;
}

Threshold calibrate_threshold(const std::vector<double>& reference, double alpha,
                              double reference_percentile) {
  if (reference.empty()) {
    fail(ErrorKind::kInvalidArgument, "empty reference: no scores to calibrate on");
  }
  if (!(alpha > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "alpha must be positive");
  }
  Threshold t;
  t.reference_percentile = reference_percentile;
  t.alpha = alpha;
  t.percentile_value = percentile(reference, reference_percentile);
  t.value = alpha * t.percentile_value;
  return t;
}

Threshold calibrate_threshold(const ScoreSeries& reference, double alpha,
                              double reference_percentile) {
  return calibrate_threshold(reference.scores, alpha, reference_percentile);
}

Threshold with_alpha(const Threshold& threshold, double alpha) {
  if (!(alpha > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "alpha must be positive");
  }
  Threshold t = threshold;
  t.alpha = alpha;
  t.value = alpha * t.percentile_value;
  return t;
}

std::vector<std::int64_t> flag_times(const ScoreSeries& scores, const Threshold& threshold) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.scores[i] > threshold.value) {
      out.push_back(scores.times[i]);
    }
  }
  return out;
}

std::size_t default_cluster_gap(std::size_t series_length) noexcept {
  return std::max<std::size_t>(5, series_length / 200);
}

std::vector<AnomalyEvent> cluster_events(std::vector<std::int64_t> flagged, std::size_t gap,
                                         const ScoreSeries* scores) {
  if (gap == 0) {
    fail(ErrorKind::kInvalidArgument, "cluster gap must be at least 1");
  }
  std::sort(flagged.begin(), flagged.end());
  flagged.erase(std::unique(flagged.begin(), flagged.end()), flagged.end());
  std::vector<AnomalyEvent> events;
  for (std::int64_t t : flagged) {
    if (events.empty() || t - events.back().end > static_cast<std::int64_t>(gap)) {
      events.push_back({t, t, {}, 0.0});
    }
    AnomalyEvent& e = events.back();
    e.end = t;
    e.member_times.push_back(t);
    if (scores != nullptr) {
      e.peak_score = std::max(e.peak_score, scores->scores[scores->position(t)]);
    }
  }
  return events;
}

std::vector<std::string> SuspectRanking::order() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.sensor);
  return out;
}

nlohmann::json SuspectRanking::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) {
    out.push_back({{"sensor", e.sensor}, {"score", e.score}, {"rank", e.rank}});
  }
  return out;
}

SuspectRanking suspect_ranking(const ScoreSeries& scores, const std::vector<std::int64_t>& times) {
  std::vector<double> totals(scores.sensors.size(), 0.0);
  for (std::int64_t t : times) {
    const auto& row = scores.contributions.at(scores.position(t));
    for (std::size_t s = 0; s < totals.size(); ++s) {
      totals[s] += row.at(s);
    }
  }
  SuspectRanking ranking;
  for (std::size_t s = 0; s < totals.size(); ++s) {
    ranking.entries.push_back({scores.sensors[s], totals[s], 0});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const SuspectEntry& a, const SuspectEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.sensor < b.sensor;
            });
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    ranking.entries[i].rank = i + 1;
  }
  return ranking;
}

const char* to_string(EnsemblePolicy policy) noexcept {
  return policy == EnsemblePolicy::kAny ? "any" : "majority";
}

EnsemblePolicy parse_ensemble_policy(const std::string& text) {
  if (text == "any") return EnsemblePolicy::kAny;
  if (text == "majority") return EnsemblePolicy::kMajority;
  fail(ErrorKind::kInvalidArgument, "unknown ensemble policy '" + text + "'");
}

std::vector<std::int64_t> ensemble_flag(const std::vector<std::vector<std::int64_t>>& members,
                                        EnsemblePolicy policy) {
  if (members.empty()) {
    fail(ErrorKind::kInvalidArgument, "ensemble needs at least one member");
  }
  std::map<std::int64_t, std::size_t> votes;
  for (const auto& member : members) {
    std::vector<std::int64_t> unique = member;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (std::int64_t t : unique) ++votes[t];
  }
  std::vector<std::int64_t> out;
  for (const auto& [t, count] : votes) {
    if (policy == EnsemblePolicy::kAny || 2 * count > members.size()) {
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace catseq
