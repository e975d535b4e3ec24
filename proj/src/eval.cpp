#include "catseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "catseq/error.hpp"

namespace catseq {

nlohmann::json GroundTruthAnomaly::to_json() const {
  nlohmann::json j{{"start", start}, {"end", end}};
  if (culprit_sensors) {
    j["culprit_sensors"] = *culprit_sensors;
  }
  if (!label.empty()) {
    j["label"] = label;
  }
  return j;
}

GroundTruthAnomaly GroundTruthAnomaly::from_json(const nlohmann::json& j) {
  GroundTruthAnomaly t;
  t.start = j.at("start").get<std::int64_t>();
  t.end = j.at("end").get<std::int64_t>();
  if (j.contains("culprit_sensors")) {
    t.culprit_sensors = j.at("culprit_sensors").get<std::vector<std::string>>();
  }
  t.label = j.value("label", "");
  if (t.start > t.end) {
    fail(ErrorKind::kParse, "truth window has start after end");
  }
  return t;
}

std::vector<GroundTruthAnomaly> read_truths(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::kIo, "cannot open truths file " + path.string());
  }
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_array()) {
      fail(ErrorKind::kParse, "truths file must hold a JSON list");
    }
    std::vector<GroundTruthAnomaly> out;
    for (const auto& item : j) {
      out.push_back(GroundTruthAnomaly::from_json(item));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed truths file: ") + e.what());
  }
}

void write_truths(const std::filesystem::path& path, const std::vector<GroundTruthAnomaly>& truths) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : truths) {
    j.push_back(t.to_json());
  }
  std::ofstream out(path);
  if (!out) {
    fail(ErrorKind::kIo, "cannot write truths file " + path.string());
  }
  out << j.dump(2) << "\n";
}

MatchResult match_events(const std::vector<AnomalyEvent>& events,
                         const std::vector<GroundTruthAnomaly>& truths, std::size_t series_length,
                         double tolerance_frac) {
  if (!(tolerance_frac > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "tolerance fraction must be positive");
  }
  const double window = tolerance_frac * static_cast<double>(series_length);
  MatchResult result;
  result.event_truth.assign(events.size(), std::nullopt);
  std::vector<std::optional<std::size_t>> credited(truths.size());

  for (std::size_t e = 0; e < events.size(); ++e) {
    const AnomalyEvent& ev = events[e];
    std::optional<std::size_t> best;
    std::int64_t best_distance = std::numeric_limits<std::int64_t>::max();
    for (std::size_t t = 0; t < truths.size(); ++t) {
      const GroundTruthAnomaly& tr = truths[t];
      const std::int64_t distance = std::abs(ev.start - tr.start);
      const bool near_start = static_cast<double>(distance) <= window;
      const bool overlaps = ev.start <= tr.end && ev.end >= tr.start;
      if ((near_start || overlaps) && distance < best_distance) {
        best = t;
        best_distance = distance;
      }
    }
    result.event_truth[e] = best;
    if (!best) {
      ++result.fp;
      continue;
    }
    auto& slot = credited[*best];
    if (!slot || std::abs(events[*slot].start - truths[*best].start) > best_distance) {
      slot = e;
    }
  }
  for (std::size_t t = 0; t < truths.size(); ++t) {
    if (credited[t]) {
      ++result.tp;
      result.matched_pairs.emplace_back(*credited[t], t);
    } else {
      ++result.fn;
    }
  }
  std::sort(result.matched_pairs.begin(), result.matched_pairs.end());
  return result;
}

double f_beta(std::size_t tp, std::size_t fp, std::size_t fn, double beta) {
  if (tp == 0) {
    return 0.0;
  }
  const double b2 = beta * beta;
  const double num = (1.0 + b2) * static_cast<double>(tp);
  return num / (num + b2 * static_cast<double>(fn) + static_cast<double>(fp));
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

nlohmann::json Metrics::to_json() const {
  return {{"tp", tp},         {"fp", fp}, {"fn", fn}, {"precision", precision},
          {"recall", recall}, {"f1", f1}, {"f0_5", f0_5}};
}

Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = f_beta(tp, fp, fn, 1.0);
  m.f0_5 = f_beta(tp, fp, fn, 0.5);
  return m;
}

Metrics compute_metrics(const MatchResult& match) {
  return compute_metrics(match.tp, match.fp, match.fn);
}

std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::size_t width = 5;
  for (const auto& [label, m] : rows) {
    width = std::max(width, label.size());
  }
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s %5s %5s %5s %6s %6s\n", static_cast<int>(width), "model",
                "TP", "FP", "FN", "F1", "F0.5");
  out << buf;
  for (const auto& [label, m] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %5zu %5zu %5zu %6.2f %6.2f\n", static_cast<int>(width),
                  label.c_str(), m.tp, m.fp, m.fn, round_to(m.f1, 2), round_to(m.f0_5, 2));
    out << buf;
  }
  return out.str();
}

double rootcause_hit_rate(const SuspectRanking& ranking, const GroundTruthAnomaly& truth,
                          double top_frac) {
  if (!truth.culprit_sensors || truth.culprit_sensors->empty()) {
    fail(ErrorKind::kInvalidArgument, "missing culprit annotation on ground-truth anomaly");
  }
  if (!(top_frac > 0.0 && top_frac <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "top fraction must lie in (0, 1]");
  }
  const auto top = static_cast<std::size_t>(
      std::ceil(top_frac * static_cast<double>(ranking.entries.size()) - 1e-9));
  std::size_t hits = 0;
  for (const auto& culprit : *truth.culprit_sensors) {
    for (std::size_t i = 0; i < std::min(top, ranking.entries.size()); ++i) {
      if (ranking.entries[i].sensor == culprit) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(truth.culprit_sensors->size());
}

}  // namespace catseq
