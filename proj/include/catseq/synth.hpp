#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "catseq/csv.hpp"
#include "catseq/eval.hpp"

namespace catseq {

enum class AnomalyType { kUnseenLetter, kUnseenWord, kDecoupling };

const char* to_string(AnomalyType type) noexcept;
AnomalyType parse_anomaly_type(const std::string& text);

struct AnomalySpec {
  AnomalyType type = AnomalyType::kUnseenLetter;
  /// Values below 1 are a fraction of the test length; otherwise a row index.
  double start = 0.5;
  std::size_t duration = 50;
  /// Explicit culprits; when empty, `sensor_count` culprits are drawn.
  std::vector<std::string> sensors;
  std::size_t sensor_count = 4;
};

/// Nominal behavior: the first `drivers` sensors follow cyclic Markov chains
/// over their values (dwell at least `min_dwell`, then advance with
/// probability 1 - stay_probability). Every other sensor copies a driver with
/// a lag of 1..max_lag rows and a fixed value offset.
struct SynthSpec {
  std::size_t sensors = 20;
  std::size_t values_per_sensor = 3;
  std::size_t train_length = 5000;
  std::size_t test_length = 5000;
  std::size_t drivers = 2;
  std::size_t max_lag = 3;
  std::size_t min_dwell = 6;
  double stay_probability = 0.5;
  std::vector<AnomalySpec> anomalies;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

std::string sensor_name(std::size_t index);

struct SyntheticData {
  CategoricalSeries train;
  CategoricalSeries test;
  std::vector<GroundTruthAnomaly> truths;
};

/// Train and test come from one continuous nominal run; anomalies overwrite
/// culprit columns of the test part only.
SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

/// 20 sensors, 5000 rows each for train and test, one anomaly per type.
SynthSpec acceptance_spec();

}  // namespace catseq
