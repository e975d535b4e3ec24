#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace catseq {

/// A table of categorical readings, stored column-major.
///
/// `time_labels` keeps the first CSV column verbatim; everything downstream
/// indexes rows by their local ordinal position.
struct CategoricalSeries {
  std::vector<std::string> sensors;
  std::vector<std::string> time_labels;
  std::vector<std::vector<std::string>> values;  // values[sensor][row]

  std::size_t rows() const noexcept { return time_labels.size(); }
  std::size_t sensor_count() const noexcept { return sensors.size(); }
  std::size_t column_index(const std::string& name) const;

  /// Keeps only the named columns, in the given order.
  CategoricalSeries select(const std::vector<std::string>& names) const;
};

std::vector<std::string> split_csv_line(const std::string& line);

CategoricalSeries read_series_csv(std::istream& in);
CategoricalSeries read_series_csv(const std::filesystem::path& path);

void write_series_csv(std::ostream& out, const CategoricalSeries& series);
void write_series_csv(const std::filesystem::path& path, const CategoricalSeries& series);

}  // namespace catseq
