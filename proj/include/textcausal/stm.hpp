#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textcausal/corpus.hpp"

namespace textcausal {

struct StmConfig {
    int K = 10;
    // covariate names driving the document-topic prior mean; the special
    // name "treatment" refers to Document::treatment
    std::vector<std::string> prevalence;
    int max_em_iters = 200;
    double tol = 1e-5;  // relative bound change
    double gamma_ridge = 0.1;
    std::uint64_t seed = 0;
    bool literal_sigma_tilde = false;  // averaged-prior correction on unnormalized sums
    int max_estep_iters = 200;
};

// Optional warm start; any unset piece falls back to the default
// (spectral beta, zero gamma, identity Sigma, eta at the prior mean).
struct StmInit {
    std::optional<Eigen::MatrixXd> beta;
    std::optional<Eigen::MatrixXd> gamma;
    std::optional<Eigen::MatrixXd> Sigma;
    std::optional<Eigen::MatrixXd> eta;  // rows aligned with the training corpus
};

struct StmModel {
    StmConfig config;
    TokenizerConfig tok_config;
    std::vector<std::string> vocabulary;
    std::vector<std::string> doc_ids;

    Eigen::MatrixXd beta;   // K x V, rows on the simplex
    Eigen::MatrixXd gamma;  // P x (K-1), intercept row first
    Eigen::MatrixXd Sigma;  // (K-1) x (K-1)
    Eigen::MatrixXd mu;     // D x (K-1), = design * gamma
    Eigen::MatrixXd eta;    // D x (K-1) variational modes
    std::vector<Eigen::MatrixXd> nu;  // per-doc curvature inverses
    std::vector<double> bound_trace;

    Eigen::RowVectorXd mu_bar;     // column means of mu (averaged prior mean)
    Eigen::MatrixXd sigma_tilde;   // averaged prior covariance

    Eigen::MatrixXd theta() const;  // D x K
    int K() const { return config.K; }
};

enum class PriorMode { none, covariate, average };

struct ApplyResult {
    std::vector<std::string> doc_ids;
    Eigen::MatrixXd theta;          // D x K
    std::vector<double> oov_rate;   // share of tokens dropped as out-of-vocabulary
    std::vector<long long> oov_dropped;
};

StmModel fit_stm(const Corpus& train, const StmConfig& cfg, const StmInit* init = nullptr);

// Apply the frozen g to raw documents: re-tokenize with the stored config,
// drop out-of-vocabulary tokens, optimize eta under the chosen prior.
ApplyResult fit_new_documents(const StmModel& model, const Corpus& raw_docs, PriorMode mode);

// Same, for rows already aligned to the model vocabulary.
ApplyResult fit_new_counts(const StmModel& model,
                           const std::vector<std::vector<std::pair<int, int>>>& rows,
                           const std::vector<std::string>& doc_ids, PriorMode mode,
                           const Eigen::MatrixXd* covariate_design = nullptr);

// Design matrix for fit_new_documents' covariate mode (intercept + the
// model's prevalence covariates, which must not include the treatment).
Eigen::MatrixXd covariate_design_for(const StmModel& model, const Corpus& docs);

std::vector<std::pair<std::string, double>> top_words(const StmModel& model, int k, int n);
std::vector<std::pair<std::string, double>> representative_docs(const StmModel& model, int k,
                                                                int n);

// Averaged-prior pieces, recomputable from any fitted model.
Eigen::RowVectorXd averaged_prior_mean(const StmModel& model);
Eigen::MatrixXd averaged_prior_sigma(const StmModel& model, bool literal_convention);

Eigen::VectorXd softmax_full(const Eigen::RowVectorXd& eta_row);  // appends the fixed 0

// Diagnostic: the per-document objective log N(eta; mu, Sigma) + sum_v c_v
// log(theta' beta_v) and its analytic gradient, at an arbitrary eta.
std::pair<double, Eigen::VectorXd> doc_objective(const Eigen::MatrixXd& beta,
                                                 const std::vector<std::pair<int, int>>& row,
                                                 const Eigen::VectorXd& mu,
                                                 const Eigen::MatrixXd& Sigma,
                                                 const Eigen::VectorXd& eta);

void save_stm(const std::string& path, const StmModel& model);
StmModel load_stm(const std::string& path);

}  // namespace textcausal
