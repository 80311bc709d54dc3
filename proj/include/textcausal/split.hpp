#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textcausal/corpus.hpp"

namespace textcausal {

struct SplitAssignment {
    std::vector<std::string> train_ids;  // J, in corpus order
    std::vector<std::string> test_ids;   // I, in corpus order
    double proportion = 0.5;
    std::string strata;  // covariate name, empty = unstratified
    std::uint64_t seed = 0;
    std::string test_digest;  // sha256 over test ids + raw text
};

// One-shot token guarding the test set.  Advisory but loud: every
// estimate records whether the lock was honored.
struct TestLock {
    std::string digest;
    bool consumed = false;
    std::string consumed_at;   // UTC, empty until consumed
    std::string fingerprint;   // consuming command
};

SplitAssignment split(const Corpus& corpus, double proportion, const std::string& strata,
                      std::uint64_t seed);

std::string compute_test_digest(const Corpus& corpus, const std::vector<std::string>& test_ids);

TestLock make_lock(const SplitAssignment& a);

// false -> true exactly once; second call throws LockError.
TestLock consume_lock(TestLock lock, const std::string& fingerprint);

// Recompute the digest against current corpus content; LockError on mismatch.
void verify_test_integrity(const Corpus& corpus, const SplitAssignment& a, const TestLock& lock);

void save_split(const std::string& path, const SplitAssignment& a);
SplitAssignment load_split(const std::string& path);
void save_lock(const std::string& path, const TestLock& lock);  // atomic write-then-rename
TestLock load_lock(const std::string& path);

}  // namespace textcausal
