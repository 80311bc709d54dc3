#pragma once

#include <stdexcept>
#include <string>

namespace textcausal {

// Bad inputs, violated preconditions, malformed files.  CLI exit code 2.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Test-set lock discipline violations.  CLI exit code 3.
struct LockError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite bounds, failed decompositions and the like.  CLI exit code 4.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace textcausal
