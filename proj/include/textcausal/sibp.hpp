#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace textcausal {

struct SibpConfig {
    double alpha = 3.0;  // stick-breaking concentration
    int k_max = 5;       // truncation level
    double sigma_n2 = 1.0;
    double sigma_a2 = 1.0;
    double sigma_beta2 = 1.0;
    double a = 1.0, b = 1.0;  // Gamma(a, b) hyperprior on the outcome precision
    int max_iters = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    int restarts = 10;
    double binarize_threshold = 0.5;
};

struct SibpModel {
    SibpConfig config;
    Eigen::MatrixXd lambda;  // k_max x 2 Beta parameters of the stick posteriors
    Eigen::VectorXd pi;      // products of stick means, nonincreasing
    Eigen::MatrixXd A;       // k_max x V posterior mean loadings
    Eigen::MatrixXd a_cov;   // shared per-column covariance of the loadings
    Eigen::VectorXd beta_y;
    Eigen::MatrixXd beta_cov;
    double tau_shape = 0.0, tau_rate = 0.0;
    Eigen::MatrixXd nu;  // D x k_max training feature probabilities
    std::vector<double> bound_trace;
    // standardization the training matrix was built with; carried so a stored
    // model can be applied to raw counts later (empty when not applicable)
    Eigen::VectorXd feat_mean, feat_scale;

    int K() const { return (int)pi.size(); }
};

struct TreatmentVector {
    std::vector<int> z;
    Eigen::VectorXd probs;
};

// pi_k = prod_{j<=k} v_j
Eigen::VectorXd stick_breaking(const Eigen::VectorXd& v);

// Mean-field fit of the supervised feature model on a standardized matrix.
SibpModel fit_sibp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SibpConfig& cfg);

// Feature probabilities for new rows (same standardization as training).
// Outcomes are deliberately not an input.
std::vector<TreatmentVector> infer_treatments(const SibpModel& m, const Eigen::MatrixXd& x);

// What infer_treatments returns for a fully average (all-zero) row.
Eigen::VectorXd prior_feature_probs(const SibpModel& m);

// Held-out predictive log-likelihood of y under the fitted outcome head.
double model_fit_score(const SibpModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

void save_sibp(const SibpModel& m, const std::string& path);
SibpModel load_sibp(const std::string& path);

}  // namespace textcausal
