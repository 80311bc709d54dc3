#pragma once

#include <string>
#include <unordered_set>

namespace textcausal {

// Snowball-style english stopword list, applied before stemming.
// Contraction forms are deliberately absent: apostrophes are deleted
// upstream, so "don't" reaches the filter as "dont" and is kept.
const std::unordered_set<std::string>& english_stopwords();

}  // namespace textcausal
