#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "textcausal/corpus.hpp"
#include "textcausal/stm.hpp"

namespace textcausal {

// How each replication's model is initialized: spectral on its own
// subsample, spectral computed once on the full corpus, or the converged
// full-data parameters themselves.
enum class StartMode { cold_spectral, warm_spectral, warm_oracle };

struct StabilityConfig {
    std::vector<int> sample_sizes = {5000, 1000};
    int n_reps = 100;
    StartMode mode = StartMode::cold_spectral;
    std::vector<int> tracked_topics;  // full-model topic indices; empty = all
    int top_words = 10;
    std::string covariate;  // whose per-topic slope is tracked; empty = skip
    bool hungarian = false;
    std::uint64_t seed = 0;
    StmConfig stm;
    // EM cap for the replication fits; 0 = stm.max_em_iters.  Lets the
    // reference fit converge harder than the hundred refits need to.
    int rep_max_em_iters = 0;
};

struct StabilityRecord {
    int sample_size = 0;
    int rep = 0;
    int tracked = 0;  // topic index in the full-data fit
    int matched = 0;  // its nearest subsample topic
    double cosine = 0.0;
    double theta_mean = 0.0;  // mean proportion of the matched topic
    double top_mass = 0.0;    // subsample beta mass on the reference top words
    double effect = 0.0;      // covariate slope on the matched proportions
    double effect_lo = 0.0, effect_hi = 0.0;
};

struct StabilityReport {
    StartMode mode = StartMode::cold_spectral;
    int k = 0;
    int n_reps = 0;
    std::vector<int> sample_sizes;
    std::vector<int> tracked_topics;
    std::vector<std::vector<std::string>> top_words;  // per tracked topic, reference fit
    std::vector<double> full_theta_mean;              // aligned with tracked_topics
    std::vector<double> full_effect, full_effect_lo, full_effect_hi;
    std::vector<StabilityRecord> records;  // sizes x reps x tracked, in that order
    std::string note;
};

StabilityReport run_stability(const Corpus& corpus, const StabilityConfig& cfg);

// Bijective match of the tracked rows of full_beta onto rows of sub_beta
// by cosine similarity: greedy best-pair-first, or the optimal assignment
// when hungarian is set.  Returns (matched row, cosine) per tracked row.
std::vector<std::pair<int, double>> match_topics(const Eigen::MatrixXd& full_beta,
                                                 const Eigen::MatrixXd& sub_beta,
                                                 const std::vector<int>& tracked, bool hungarian);

std::string stability_records_csv(const StabilityReport& report);

}  // namespace textcausal
