#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "textcausal/corpus.hpp"

namespace textcausal {

// Samplers for the generative processes the test oracles are built on.

struct StmSynthSpec {
    int K = 3;
    int V = 50;
    int D = 500;
    double doc_len_mean = 40.0;
    double dirichlet_conc = 0.05;  // sparsity of topic-word rows
    double anchor_mass = 0.15;     // extra mass on each topic's private anchor word
    double sigma_scale = 0.4;      // Sigma = sigma_scale * I
    double gamma_sd = 0.5;         // scale of covariate effects on eta
    bool with_treatment = false;   // binary treatment entering the prior mean
    double treatment_effect = 0.0; // eta shift on component 0 for treated units
    std::uint64_t seed = 1;
};

struct StmSynth {
    Corpus corpus;  // dtm populated directly; covariate "group"; ids d0000..
    Eigen::MatrixXd beta;   // true K x V
    Eigen::MatrixXd gamma;  // true P x (K-1)
    Eigen::MatrixXd eta;    // true D x (K-1)
    Eigen::MatrixXd theta;  // true D x K
};

Eigen::MatrixXd sample_topic_beta(int K, int V, double conc, double anchor_mass,
                                  std::mt19937_64& eng);

std::vector<std::vector<std::pair<int, int>>> sample_counts(const Eigen::MatrixXd& beta,
                                                            const Eigen::MatrixXd& eta,
                                                            double len_mean,
                                                            std::mt19937_64& eng);

StmSynth sample_stm_corpus(const StmSynthSpec& spec);

/// Fixed population with both text potential outcomes per unit: the treated
// text shifts eta by `shift`.  Estimation picks one row per unit.
struct PotentialPopulation {
    std::vector<std::string> ids;
    std::vector<std::vector<std::pair<int, int>>> rows_control;
    std::vector<std::vector<std::pair<int, int>>> rows_treated;
};

PotentialPopulation sample_po_population(const Eigen::MatrixXd& beta,
                                         const Eigen::VectorXd& eta_shift, int n_units,
                                         double sigma_scale, double len_mean,
                                         std::uint64_t seed);

// Planted two-feature sIBP benchmark: disjoint word signatures,
// Y = 2 z1 - 1 z2 + noise.
struct SibpSynth {
    Eigen::MatrixXd X;  // D x V, unstandardized
    Eigen::VectorXd Y;
    Eigen::MatrixXd Z;  // D x 2 in {0,1}
    Eigen::MatrixXd A;  // true 2 x V loadings
};

SibpSynth sample_sibp_data(int D, int V, std::uint64_t seed, double x_noise_sd = 0.5,
                           double y_noise_sd = 0.1);

// Bundled english-text demo corpus (two arms, themed phrasebooks) for the
// end-to-end CLI pipeline; written as JSONL.
void write_demo_jsonl(const std::string& path, int n, std::uint64_t seed);

}  // namespace textcausal
