#include "catseq/levenshtein.hpp"

#include <algorithm>
#include <numeric>

#include "catseq/error.hpp"

namespace catseq {

std::size_t edit_distance(std::span<const LetterCode> a, std::span<const LetterCode> b) {
  if (a.size() < b.size()) {
    std::swap(a, b);
  }
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({above + 1, row[j - 1] + 1, diag + cost});
      diag = above;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(const Word& w, const Word& v, std::size_t word_length) {
  if (w.sensor != v.sensor) {
    fail(ErrorKind::kInvalidArgument, "sensor mismatch: cannot compare words of sensors " +
                                          std::to_string(w.sensor) + " and " +
                                          std::to_string(v.sensor));
  }
  const auto lettered = [](const Word& x) {
    return x.kind == WordKind::kTrueWord || !x.letters.empty();
  };
  if (!lettered(w) || !lettered(v)) {
    return word_length;
  }
  return edit_distance(w.letters, v.letters);
}

}  // namespace catseq
