#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "textcausal/corpus.hpp"

namespace textcausal {

// Deterministic anchor-word initialization: word co-occurrence moments,
// greedy farthest-from-span anchor selection, simplex-constrained least
// squares recovery.  Terms never seen in `rows` get zero mass everywhere.
Eigen::MatrixXd spectral_init(const std::vector<std::vector<std::pair<int, int>>>& rows, int V,
                              int K);
Eigen::MatrixXd spectral_init(const Corpus& c, int K);

}  // namespace textcausal
