#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "catseq/csv.hpp"

namespace catseq::testing {

inline CategoricalSeries make_series(std::vector<std::string> sensors,
                                     std::vector<std::vector<std::string>> columns) {
  CategoricalSeries s;
  s.sensors = std::move(sensors);
  s.values = std::move(columns);
  for (std::size_t r = 0; r < s.values.front().size(); ++r) {
    s.time_labels.push_back(std::to_string(r));
  }
  return s;
}

inline CategoricalSeries random_series(std::mt19937_64& rng, std::size_t sensors,
                                       std::size_t rows, std::size_t values) {
  std::uniform_int_distribution<std::size_t> pick(0, values - 1);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> cols(sensors);
  for (std::size_t s = 0; s < sensors; ++s) {
    names.push_back("S" + std::to_string(s));
    for (std::size_t r = 0; r < rows; ++r) cols[s].push_back(std::to_string(pick(rng)));
  }
  return make_series(names, cols);
}

/// Sensor b repeats sensor a one row later; sensor c cycles with period 3.
inline CategoricalSeries coupled_series(std::mt19937_64& rng, std::size_t rows) {
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<std::vector<std::string>> cols(3);
  std::string prev = "0";
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string a = std::to_string(pick(rng));
    cols[0].push_back(a);
    cols[1].push_back(prev);
    cols[2].push_back(std::to_string(r % 3));
    prev = a;
  }
  return make_series({"a", "b", "c"}, cols);
}

/// A fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("catseq_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace catseq::testing
