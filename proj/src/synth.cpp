#include "catseq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "catseq/error.hpp"

namespace catseq {

const char* to_string(AnomalyType type) noexcept {
  switch (type) {
    case AnomalyType::kUnseenLetter:
      return "unseen_letter";
    case AnomalyType::kUnseenWord:
      return "unseen_word";
    case AnomalyType::kDecoupling:
      return "decoupling";
  }
  return "unseen_letter";
}

AnomalyType parse_anomaly_type(const std::string& text) {
  if (text == "unseen_letter") return AnomalyType::kUnseenLetter;
  if (text == "unseen_word") return AnomalyType::kUnseenWord;
  if (text == "decoupling") return AnomalyType::kDecoupling;
  fail(ErrorKind::kInvalidArgument, "unknown anomaly type '" + text + "'");
}

void SynthSpec::validate() const {
  if (sensors == 0 || drivers == 0 || drivers > sensors) {
    fail(ErrorKind::kInvalidArgument, "synthetic spec needs 1 <= drivers <= sensors");
  }
  if (values_per_sensor < 3) {
    fail(ErrorKind::kInvalidArgument, "synthetic spec needs at least 3 values per sensor");
  }
  if (train_length == 0 || test_length == 0 || max_lag == 0) {
    fail(ErrorKind::kInvalidArgument, "synthetic lengths and max_lag must be positive");
  }
  if (!(stay_probability >= 0.0 && stay_probability < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "stay_probability must lie in [0, 1)");
  }
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& a : anomalies) {
    list.push_back({{"type", to_string(a.type)},
                    {"start", a.start},
                    {"duration", a.duration},
                    {"sensors", a.sensors},
                    {"sensor_count", a.sensor_count}});
  }
  return {{"sensors", sensors},
          {"values_per_sensor", values_per_sensor},
          {"train_length", train_length},
          {"test_length", test_length},
          {"drivers", drivers},
          {"max_lag", max_lag},
          {"min_dwell", min_dwell},
          {"stay_probability", stay_probability},
          {"anomalies", std::move(list)}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.sensors = j.value("sensors", s.sensors);
    s.values_per_sensor = j.value("values_per_sensor", s.values_per_sensor);
    s.train_length = j.value("train_length", s.train_length);
    s.test_length = j.value("test_length", s.test_length);
    if (j.contains("length")) {
      s.train_length = s.test_length = j.at("length").get<std::size_t>();
    }
    s.drivers = j.value("drivers", s.drivers);
    s.max_lag = j.value("max_lag", s.max_lag);
    s.min_dwell = j.value("min_dwell", s.min_dwell);
    s.stay_probability = j.value("stay_probability", s.stay_probability);
    for (const auto& a : j.value("anomalies", nlohmann::json::array())) {
      AnomalySpec spec;
      spec.type = parse_anomaly_type(a.at("type").get<std::string>());
      spec.start = a.value("start", spec.start);
      spec.duration = a.value("duration", spec.duration);
      spec.sensors = a.value("sensors", std::vector<std::string>{});
      spec.sensor_count = a.value("sensor_count", spec.sensor_count);
      s.anomalies.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string sensor_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu", index);
  return buf;
}

namespace {

struct Chain {
  std::size_t value = 0;
  std::size_t dwell = 0;
};

std::size_t advance(Chain& chain, const SynthSpec& spec, std::mt19937_64& rng) {
  ++chain.dwell;
  if (chain.dwell >= spec.min_dwell) {
    std::bernoulli_distribution stay(spec.stay_probability);
    if (!stay(rng)) {
      chain.value = (chain.value + 1) % spec.values_per_sensor;
      chain.dwell = 0;
    }
  }
  return chain.value;
}

}  // namespace

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t v = spec.values_per_sensor;
  const std::size_t warmup = spec.max_lag;
  const std::size_t total = warmup + spec.train_length + spec.test_length;

  std::vector<Chain> chains(spec.drivers);
  std::uniform_int_distribution<std::size_t> pick_value(0, v - 1);
  std::uniform_int_distribution<std::size_t> pick_dwell(0, spec.min_dwell);
  for (auto& c : chains) {
    c.value = pick_value(rng);
    c.dwell = pick_dwell(rng);
  }
  std::vector<std::size_t> lag(spec.sensors, 0), offset(spec.sensors, 0);
  for (std::size_t i = spec.drivers; i < spec.sensors; ++i) {
    lag[i] = 1 + ((i / spec.drivers) - 1) % spec.max_lag;
    offset[i] = pick_value(rng);
  }

  std::vector<std::vector<std::size_t>> raw(spec.sensors, std::vector<std::size_t>(total));
  for (std::size_t t = 0; t < total; ++t) {
    for (std::size_t d = 0; d < spec.drivers; ++d) {
      raw[d][t] = advance(chains[d], spec, rng);
    }
  }
  for (std::size_t i = spec.drivers; i < spec.sensors; ++i) {
    const std::size_t d = i % spec.drivers;
    for (std::size_t t = 0; t < total; ++t) {
      const std::size_t src = t >= lag[i] ? raw[d][t - lag[i]] : raw[d][0];
      raw[i][t] = (src + offset[i]) % v;
    }
  }

  std::vector<std::vector<std::string>> text(spec.sensors, std::vector<std::string>(total));
  for (std::size_t s = 0; s < spec.sensors; ++s) {
    for (std::size_t t = 0; t < total; ++t) {
      text[s][t] = std::to_string(raw[s][t]);
    }
  }

  SyntheticData out;
  const std::size_t test_begin = warmup + spec.train_length;
  for (const AnomalySpec& a : spec.anomalies) {
    const auto start = a.start < 1.0
                           ? static_cast<std::size_t>(
                                 std::llround(a.start * static_cast<double>(spec.test_length)))
                           : static_cast<std::size_t>(a.start);
    if (a.start < 0.0 || a.duration == 0 || start + a.duration > spec.test_length) {
      fail(ErrorKind::kInvalidArgument, "anomaly window outside series");
    }
    std::vector<std::size_t> culprits;
    if (!a.sensors.empty()) {
      for (const auto& name : a.sensors) {
        bool found = false;
        for (std::size_t s = 0; s < spec.sensors; ++s) {
          if (sensor_name(s) == name) {
            culprits.push_back(s);
            found = true;
          }
        }
        if (!found) {
          fail(ErrorKind::kInvalidArgument, "anomaly names unknown sensor '" + name + "'");
        }
      }
    } else {
      std::vector<std::size_t> eligible;
      const std::size_t first = a.type == AnomalyType::kDecoupling ? spec.drivers : 0;
      for (std::size_t s = first; s < spec.sensors; ++s) eligible.push_back(s);
      if (eligible.size() < a.sensor_count) {
        fail(ErrorKind::kInvalidArgument, "not enough eligible sensors for anomaly");
      }
      std::shuffle(eligible.begin(), eligible.end(), rng);
      culprits.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(a.sensor_count));
      std::sort(culprits.begin(), culprits.end());
    }

    for (std::size_t s : culprits) {
      Chain own{raw[s][test_begin + start], 0};
      for (std::size_t t = test_begin + start; t < test_begin + start + a.duration; ++t) {
        switch (a.type) {
          case AnomalyType::kUnseenLetter:
            text[s][t] = std::to_string(v);
            break;
          case AnomalyType::kUnseenWord:
            text[s][t] = std::to_string((v - raw[s][t]) % v);
            break;
          case AnomalyType::kDecoupling:
            text[s][t] = std::to_string(advance(own, spec, rng));
            break;
        }
      }
    }

    GroundTruthAnomaly truth;
    truth.start = static_cast<std::int64_t>(start);
    truth.end = static_cast<std::int64_t>(start + a.duration - 1);
    truth.label = to_string(a.type);
    std::vector<std::string> names;
    for (std::size_t s : culprits) names.push_back(sensor_name(s));
    truth.culprit_sensors = std::move(names);
    out.truths.push_back(std::move(truth));
  }

  auto slice = [&](std::size_t begin, std::size_t length) {
    CategoricalSeries series;
    for (std::size_t s = 0; s < spec.sensors; ++s) series.sensors.push_back(sensor_name(s));
    for (std::size_t t = 0; t < length; ++t) series.time_labels.push_back(std::to_string(t));
    series.values.resize(spec.sensors);
    for (std::size_t s = 0; s < spec.sensors; ++s) {
      series.values[s].assign(text[s].begin() + static_cast<std::ptrdiff_t>(begin),
                              text[s].begin() + static_cast<std::ptrdiff_t>(begin + length));
    }
    return series;
  };
  out.train = slice(warmup, spec.train_length);
  out.test = slice(test_begin, spec.test_length);
  return out;
}

SynthSpec acceptance_spec() {
  SynthSpec spec;
  spec.anomalies = {
      {AnomalyType::kUnseenLetter, 0.2, 50, {}, 4},
      {AnomalyType::kUnseenWord, 0.5, 50, {}, 4},
      {AnomalyType::kDecoupling, 0.8, 50, {}, 4},
  };
  return spec;
}

}  // namespace catseq
