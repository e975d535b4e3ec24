#include "catseq/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "catseq/error.hpp"

namespace catseq {

std::size_t CategoricalSeries::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (sensors[i] == name) {
      return i;
    }
  }
  fail(ErrorKind::kSchema, "schema mismatch: no column '" + name + "'");
}

CategoricalSeries CategoricalSeries::select(const std::vector<std::string>& names) const {
  CategoricalSeries out;
  out.time_labels = time_labels;
  for (const auto& name : names) {
    out.sensors.push_back(name);
    out.values.push_back(values[column_index(name)]);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    fail(ErrorKind::kParse, "unterminated quote in CSV line");
  }
  fields.push_back(std::move(field));
  return fields;
}

CategoricalSeries read_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorKind::kParse, "empty CSV input");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  auto header = split_csv_line(line);
  if (header.size() < 2) {
    fail(ErrorKind::kParse, "CSV needs a time column and at least one sensor column");
  }
  CategoricalSeries series;
  series.sensors.assign(header.begin() + 1, header.end());
  std::unordered_set<std::string> seen;
  for (const auto& name : series.sensors) {
    if (name.empty()) {
      fail(ErrorKind::kParse, "empty sensor name in CSV header");
    }
    if (!seen.insert(name).second) {
      fail(ErrorKind::kParse, "duplicate sensor name '" + name + "'");
    }
  }
  series.values.resize(series.sensors.size());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::kParse, "incomplete series: line " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    }
    series.time_labels.push_back(std::move(fields[0]));
    for (std::size_t c = 0; c < series.sensors.size(); ++c) {
      if (fields[c + 1].empty()) {
        fail(ErrorKind::kParse, "incomplete series: missing cell at line " +
                                    std::to_string(line_no) + ", column '" + series.sensors[c] +
                                    "'");
      }
      series.values[c].push_back(std::move(fields[c + 1]));
    }
  }
  return series;
}

CategoricalSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  }
  return read_series_csv(in);
}

namespace {

void write_field(std::ostream& out, const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) {
    out << field;
    return;
  }
  out << '"';
  for (char c : field) {
    if (c == '"') {
      out << '"';
    }
    out << c;
  }
  out << '"';
}

}  // namespace

void write_series_csv(std::ostream& out, const CategoricalSeries& series) {
  out << "time";
  for (const auto& s : series.sensors) {
    out << ',';
    write_field(out, s);
  }
  out << '\n';
  for (std::size_t r = 0; r < series.rows(); ++r) {
    write_field(out, series.time_labels[r]);
    for (std::size_t c = 0; c < series.sensor_count(); ++c) {
      out << ',';
      write_field(out, series.values[c][r]);
    }
    out << '\n';
  }
}

void write_series_csv(const std::filesystem::path& path, const CategoricalSeries& series) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  }
  write_series_csv(out, series);
}

}  // namespace catseq
