#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "catseq/tokenization.hpp"

namespace catseq {

/// Unit-cost edit distance (insert, delete, substitute).
std::size_t edit_distance(std::span<const LetterCode> a, std::span<const LetterCode> b);

/// Edit distance between two words of the same sensor. An unknown token that
/// carries no letters of its own is `word_length` away from anything.
std::size_t levenshtein(const Word& w, const Word& v, std::size_t word_length);

}  // namespace catseq
