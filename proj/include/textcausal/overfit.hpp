#pragma once

#include <cstdint>

namespace textcausal {

struct OverfitReport {
    double same_sample_rate = 0.0;   // select and test on the full sample
    double split_sample_rate = 0.0;  // select on train, test once on the held-out half
    int n_units = 0;
    int n_noise_gs = 0;
    int n_reps = 0;
    long long locks_consumed = 0;  // one lock per replication, spent exactly once
};

// Monte-Carlo portrait of an analyst shopping among n_noise_gs noise
// summaries for the smallest p-value.  The features never look at the
// treatment, so every rejection is a false positive; sharing one sample
// between selection and testing inflates the rate, a fresh half restores it.
OverfitReport overfit_demo(int n_units, int n_noise_gs, std::uint64_t seed, int n_reps = 1000);

}  // namespace textcausal
