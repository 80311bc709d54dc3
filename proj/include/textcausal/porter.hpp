#pragma once

#include <string>

namespace textcausal {

// Porter (1980) suffix-stripping stemmer.  Input must already be lowercase.
std::string porter_stem(const std::string& word);

}  // namespace textcausal
