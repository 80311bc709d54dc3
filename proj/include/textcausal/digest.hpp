#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace textcausal {

std::string sha256_hex(std::string_view data);

// Digest of a sequence of fields with unambiguous framing (each field is
// length-prefixed before hashing, so concatenation cannot collide).
std::string sha256_hex_fields(const std::vector<std::string_view>& fields);

}  // namespace textcausal
