#include "textcausal/sibp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/json_mat.hpp"
#include "textcausal/parallel.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/stats.hpp"

namespace textcausal {

using stats::digamma;

namespace {

constexpr double kNuClamp = 1e-12;

double sigmoid(double x) {
    double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return std::min(1.0 - kNuClamp, std::max(kNuClamp, s));
}

double bern_entropy(double p) { return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p); }

double beta_entropy(double a, double b) {
    double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    return lbeta - (a - 1) * digamma(a) - (b - 1) * digamma(b) +
           (a + b - 2) * digamma(a + b);
}

// expectations of the stick posteriors plus the auxiliary multinomials that
// lower-bound E[log(1 - pi_k)] for the truncated construction
struct StickState {
    Eigen::VectorXd psi1, psi2;  // E[log v_j], E[log(1 - v_j)]
    Eigen::VectorXd cum1;        // E[log pi_k]
    Eigen::MatrixXd qk;          // row k: optimal multinomial over m <= k
    Eigen::VectorXd lk;          // the lower bound on E[log(1 - pi_k)]
};

void refresh_psi(const Eigen::MatrixXd& lambda, StickState& st) {
    const int K = (int)lambda.rows();
    st.psi1.resize(K);
    st.psi2.resize(K);
    st.cum1.resize(K);
    double run = 0;
    for (int j = 0; j < K; j++) {
        double tot = digamma(lambda(j, 0) + lambda(j, 1));
        st.psi1[j] = digamma(lambda(j, 0)) - tot;
        st.psi2[j] = digamma(lambda(j, 1)) - tot;
        run += st.psi1[j];
        st.cum1[j] = run;
    }
}

// optimal q_k(m) ∝ exp(psi2_m + sum_{j<m} psi1_j), and the bound value
void refresh_qk(StickState& st) {
    const int K = (int)st.psi1.size();
    st.qk = Eigen::MatrixXd::Zero(K, K);
    st.lk.resize(K);
    for (int k = 0; k < K; k++) {
        Eigen::VectorXd lg(k + 1);
        double pre = 0;
        for (int m = 0; m <= k; m++) {
            lg[m] = st.psi2[m] + pre;
            pre += st.psi1[m];
        }
        double mx = lg.maxCoeff();
        Eigen::VectorXd w = (lg.array() - mx).exp();
        w /= w.sum();
        double bound = 0;
        for (int m = 0; m <= k; m++) {
            st.qk(k, m) = w[m];
            if (w[m] > 0) bound += w[m] * (lg[m] - std::log(w[m]));
        }
        st.lk[k] = bound;
    }
}

struct FitState {
    Eigen::MatrixXd lambda, nu, Abar, PhiA, Phibeta;
    Eigen::VectorXd betabar;
    double a_tau = 0, b_tau = 0;
    StickState sticks;
};

double evidence_bound(const FitState& s, const SibpConfig& cfg, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& Y) {
    const int D = (int)X.rows(), V = (int)X.cols(), K = (int)s.nu.cols();
    const double two_pi = 2.0 * M_PI;

    Eigen::VectorXd N = s.nu.colwise().sum();
    Eigen::MatrixXd M = s.nu.transpose() * s.nu;
    M.diagonal() = N;
    Eigen::MatrixXd G = s.Abar * s.Abar.transpose() + (double)V * s.PhiA;
    Eigen::MatrixXd B = s.Phibeta + s.betabar * s.betabar.transpose();
    Eigen::MatrixXd C = s.nu.transpose() * X;
    Eigen::VectorXd nuy = s.nu.transpose() * Y;

    double tau_mean = s.a_tau / s.b_tau;
    double elog_tau = digamma(s.a_tau) - std::log(s.b_tau);

    double x_quad = X.squaredNorm() - 2.0 * (s.Abar.array() * C.array()).sum() + (M * G).trace();
    double y_quad = Y.squaredNorm() - 2.0 * s.betabar.dot(nuy) + (B * M).trace();

    double b = 0;
    // sticks and features
    for (int j = 0; j < K; j++) b += std::log(cfg.alpha) + (cfg.alpha - 1) * s.sticks.psi1[j];
    for (int k = 0; k < K; k++)
        b += N[k] * s.sticks.cum1[k] + ((double)D - N[k]) * s.sticks.lk[k];
    // likelihoods and remaining priors
    b += -0.5 * D * V * std::log(two_pi * cfg.sigma_n2) - x_quad / (2.0 * cfg.sigma_n2);
    b += -0.5 * K * V * std::log(two_pi * cfg.sigma_a2) - G.trace() / (2.0 * cfg.sigma_a2);
    b += -0.5 * D * std::log(two_pi) + 0.5 * D * elog_tau - 0.5 * tau_mean * y_quad;
    b += -0.5 * K * std::log(two_pi * cfg.sigma_beta2) - B.trace() / (2.0 * cfg.sigma_beta2);
    b += cfg.a * std::log(cfg.b) - std::lgamma(cfg.a) + (cfg.a - 1) * elog_tau -
         cfg.b * tau_mean;
    // entropies
    for (int j = 0; j < K; j++) b += beta_entropy(s.lambda(j, 0), s.lambda(j, 1));
    for (int i = 0; i < D; i++)
        for (int k = 0; k < K; k++) b += bern_entropy(s.nu(i, k));
    Eigen::LLT<Eigen::MatrixXd> la(s.PhiA);
    double lda = 2.0 * la.matrixL().toDenseMatrix().diagonal().array().log().sum();
    b += 0.5 * V * (K * std::log(two_pi * M_E) + lda);
    Eigen::LLT<Eigen::MatrixXd> lb(s.Phibeta);
    double ldb = 2.0 * lb.matrixL().toDenseMatrix().diagonal().array().log().sum();
    b += 0.5 * (K * std::log(two_pi * M_E) + ldb);
    b += s.a_tau - std::log(s.b_tau) + std::lgamma(s.a_tau) +
         (1.0 - s.a_tau) * digamma(s.a_tau);
    return b;
}

void check_config(const SibpConfig& cfg) {
    if (cfg.alpha <= 0 || cfg.sigma_n2 <= 0 || cfg.sigma_a2 <= 0 || cfg.sigma_beta2 <= 0 ||
        cfg.a <= 0 || cfg.b <= 0)
        throw ContractError("sibp config: all variance and concentration parameters must be > 0");
    if (cfg.k_max < 1) throw ContractError("sibp config: k_max must be at least 1");
    if (cfg.max_iters < 1 || cfg.restarts < 1)
        throw ContractError("sibp config: max_iters and restarts must be at least 1");
    if (!(cfg.binarize_threshold > 0 && cfg.binarize_threshold < 1))
        throw ContractError("sibp config: binarize threshold must lie in (0, 1)");
}

}  // namespace

Eigen::VectorXd stick_breaking(const Eigen::VectorXd& v) {
    Eigen::VectorXd pi(v.size());
    double run = 1.0;
    for (Eigen::Index j = 0; j < v.size(); j++) {
        if (!(v[j] > 0.0) || v[j] > 1.0)
            throw ContractError("stick_breaking: proportions must lie in (0, 1]");
        run *= v[j];
        pi[j] = run;
    }
    return pi;
}

SibpModel fit_sibp(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const SibpConfig& cfg) {
    check_config(cfg);
    const int D = (int)X.rows(), V = (int)X.cols(), K = cfg.k_max;
    if ((int)Y.size() != D) throw ContractError("fit_sibp: X rows and Y length disagree");
    if (D < 1 || V < 1) throw ContractError("fit_sibp: empty data");
    if (K > D || K > V)
        throw ContractError("fit_sibp: truncation k_max exceeds the number of documents or words");

    double best_bound = -std::numeric_limits<double>::infinity();
    FitState best;
    std::vector<double> best_trace;

    for (int r = 0; r < cfg.restarts; r++) {
        auto eng = make_engine(derive_seed(cfg.seed, (std::uint64_t)r));
        std::uniform_real_distribution<double> unif(0.1, 0.9);

        FitState s;
        s.lambda.resize(K, 2);
        s.lambda.col(0).setConstant(cfg.alpha);
        s.lambda.col(1).setOnes();
        s.nu.resize(D, K);
        for (int i = 0; i < D; i++)
            for (int k = 0; k < K; k++) s.nu(i, k) = unif(eng);
        s.a_tau = cfg.a;
        s.b_tau = cfg.b;

        std::vector<double> trace;
        double prev = -std::numeric_limits<double>::infinity();
        for (int it = 0; it < cfg.max_iters; it++) {
            refresh_psi(s.lambda, s.sticks);
            refresh_qk(s.sticks);

            // sticks, given the auxiliary multinomials and feature usage
            Eigen::VectorXd N = s.nu.colwise().sum();
            for (int j = 0; j < K; j++) {
                double l1 = cfg.alpha, l2 = 1.0;
                for (int k = j; k < K; k++) {
                    l1 += N[k];
                    l2 += ((double)D - N[k]) * s.sticks.qk(k, j);
                    for (int m = j + 1; m <= k; m++)
                        l1 += ((double)D - N[k]) * s.sticks.qk(k, m);
                }
                s.lambda(j, 0) = l1;
                s.lambda(j, 1) = l2;
            }
            refresh_psi(s.lambda, s.sticks);

            // loadings: one shared covariance across columns
            Eigen::MatrixXd M = s.nu.transpose() * s.nu;
            M.diagonal() = N;
            Eigen::MatrixXd Pa =
                Eigen::MatrixXd::Identity(K, K) / cfg.sigma_a2 + M / cfg.sigma_n2;
            s.PhiA = Pa.llt().solve(Eigen::MatrixXd::Identity(K, K));
            s.Abar = s.PhiA * (s.nu.transpose() * X) / cfg.sigma_n2;

            // outcome head, then its noise precision
            double tau_mean = s.a_tau / s.b_tau;
            Eigen::MatrixXd Pb =
                Eigen::MatrixXd::Identity(K, K) / cfg.sigma_beta2 + tau_mean * M;
            s.Phibeta = Pb.llt().solve(Eigen::MatrixXd::Identity(K, K));
            s.betabar = tau_mean * (s.Phibeta * (s.nu.transpose() * Y));

            Eigen::MatrixXd B = s.Phibeta + s.betabar * s.betabar.transpose();
            s.a_tau = cfg.a + 0.5 * D;
            s.b_tau = cfg.b + 0.5 * (Y.squaredNorm() -
                                     2.0 * s.betabar.dot(s.nu.transpose() * Y) +
                                     (B * M).trace());
            tau_mean = s.a_tau / s.b_tau;

            // feature assignments, sequential over k within each document
            Eigen::MatrixXd G = s.Abar * s.Abar.transpose() + (double)V * s.PhiA;
            Eigen::MatrixXd xA = X * s.Abar.transpose();
            const double inv_n2 = 1.0 / cfg.sigma_n2;
            parallel_chunks((std::size_t)D, [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; i++) {
                    for (int k = 0; k < K; k++) {
                        double cross_g = 0, cross_b = 0;
                        for (int l = 0; l < K; l++) {
                            if (l == k) continue;
                            cross_g += s.nu((Eigen::Index)i, l) * G(k, l);
                            cross_b += s.nu((Eigen::Index)i, l) * B(k, l);
                        }
                        double logit = s.sticks.cum1[k] - s.sticks.lk[k] +
                                       inv_n2 * (xA((Eigen::Index)i, k) - 0.5 * G(k, k) -
                                                 cross_g) +
                                       tau_mean * (s.betabar[k] * Y[(Eigen::Index)i] -
                                                   0.5 * B(k, k) - cross_b);
                        s.nu((Eigen::Index)i, k) = sigmoid(logit);
                    }
                }
            });

            double bound = evidence_bound(s, cfg, X, Y);
            if (!std::isfinite(bound))
                throw NumericalError("fit_sibp: evidence bound non-finite at iteration " +
                                     std::to_string(it + 1));
            trace.push_back(bound);
            if (it > 0 && std::abs(bound - prev) < cfg.tol * std::abs(prev)) break;
            prev = bound;
        }

        if (trace.back() > best_bound) {
            best_bound = trace.back();
            best = s;
            best_trace = trace;
        }
    }

    SibpModel m;
    m.config = cfg;
    m.lambda = best.lambda;
    m.pi.resize(K);
    double run = 1.0;
    for (int j = 0; j < K; j++) {
        run *= best.lambda(j, 0) / (best.lambda(j, 0) + best.lambda(j, 1));
        m.pi[j] = run;
    }
    m.A = best.Abar;
    m.a_cov = best.PhiA;
    m.beta_y = best.betabar;
    m.beta_cov = best.Phibeta;
    m.tau_shape = best.a_tau;
    m.tau_rate = best.b_tau;
    m.nu = best.nu;
    m.bound_trace = best_trace;
    return m;
}

namespace {

// per-row fixed point of the text-only assignment update
Eigen::VectorXd infer_row(const StickState& st, const Eigen::MatrixXd& G, double sigma_n2,
                          const Eigen::RowVectorXd& xa) {
    const int K = (int)G.rows();
    Eigen::VectorXd nu = Eigen::VectorXd::Constant(K, 0.5);
    const double inv_n2 = 1.0 / sigma_n2;
    for (int sweep = 0; sweep < 500; sweep++) {
        double delta = 0;
        for (int k = 0; k < K; k++) {
            double cross = 0;
            for (int l = 0; l < K; l++)
                if (l != k) cross += nu[l] * G(k, l);
            double logit =
                st.cum1[k] - st.lk[k] + inv_n2 * (xa[k] - 0.5 * G(k, k) - cross);
            double next = sigmoid(logit);
            delta = std::max(delta, std::abs(next - nu[k]));
            nu[k] = next;
        }
        if (delta < 1e-12) break;
    }
    return nu;
}

StickState model_sticks(const SibpModel& m) {
    StickState st;
    refresh_psi(m.lambda, st);
    refresh_qk(st);
    return st;
}

}  // namespace

std::vector<TreatmentVector> infer_treatments(const SibpModel& m, const Eigen::MatrixXd& X) {
    if (X.cols() != m.A.cols())
        throw ContractError("infer_treatments: rows have " + std::to_string(X.cols()) +
                            " columns but the model was trained on " +
                            std::to_string(m.A.cols()));
    const int K = m.K();
    const int V = (int)m.A.cols();
    StickState st = model_sticks(m);
    Eigen::MatrixXd G = m.A * m.A.transpose() + (double)V * m.a_cov;
    Eigen::MatrixXd xA = X * m.A.transpose();

    std::vector<TreatmentVector> out((std::size_t)X.rows());
    parallel_chunks((std::size_t)X.rows(), [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; i++) {
            TreatmentVector tv;
            tv.probs = infer_row(st, G, m.config.sigma_n2, xA.row((Eigen::Index)i));
            tv.z.resize((std::size_t)K);
            for (int k = 0; k < K; k++)
                tv.z[(std::size_t)k] = tv.probs[k] >= m.config.binarize_threshold ? 1 : 0;
            out[i] = std::move(tv);
        }
    });
    return out;
}

Eigen::VectorXd prior_feature_probs(const SibpModel& m) {
    const int V = (int)m.A.cols();
    StickState st = model_sticks(m);
    Eigen::MatrixXd G = m.A * m.A.transpose() + (double)V * m.a_cov;
    return infer_row(st, G, m.config.sigma_n2, Eigen::RowVectorXd::Zero(m.K()));
}

double model_fit_score(const SibpModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) {
    if (X.rows() != Y.size())
        throw ContractError("model_fit_score: X rows and Y length disagree");
    auto tv = infer_treatments(m, X);
    double tau_mean = m.tau_shape / m.tau_rate;
    double ll = 0;
    for (Eigen::Index i = 0; i < Y.size(); i++) {
        double mu = tv[(std::size_t)i].probs.dot(m.beta_y);
        double resid = Y[i] - mu;
        ll += 0.5 * std::log(tau_mean / (2.0 * M_PI)) - 0.5 * tau_mean * resid * resid;
    }
    return ll;
}

void save_sibp(const SibpModel& m, const std::string& path) {
    nlohmann::json j;
    j["format"] = "sibp-model";
    j["format_version"] = 1;
    j["config"] = {{"alpha", m.config.alpha},
                   {"k_max", m.config.k_max},
                   {"sigma_n2", m.config.sigma_n2},
                   {"sigma_a2", m.config.sigma_a2},
                   {"sigma_beta2", m.config.sigma_beta2},
                   {"a", m.config.a},
                   {"b", m.config.b},
                   {"max_iters", m.config.max_iters},
                   {"tol", m.config.tol},
                   {"seed", m.config.seed},
                   {"restarts", m.config.restarts},
                   {"binarize_threshold", m.config.binarize_threshold}};
    j["lambda"] = mat_to_json(m.lambda);
    j["pi"] = vec_to_json(m.pi);
    j["A"] = mat_to_json(m.A);
    j["a_cov"] = mat_to_json(m.a_cov);
    j["beta_y"] = vec_to_json(m.beta_y);
    j["beta_cov"] = mat_to_json(m.beta_cov);
    j["tau_shape"] = m.tau_shape;
    j["tau_rate"] = m.tau_rate;
    j["nu"] = mat_to_json(m.nu);
    j["bound_trace"] = m.bound_trace;
    j["feat_mean"] = vec_to_json(m.feat_mean);
    j["feat_scale"] = vec_to_json(m.feat_scale);
    std::ofstream out(path);
    if (!out) throw ContractError("save_sibp: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

SibpModel load_sibp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("load_sibp: cannot read '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ContractError("load_sibp: '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "sibp-model")
        throw ContractError("load_sibp: '" + path + "' is not a stored sibp model");
    SibpModel m;
    const auto& c = j.at("config");
    m.config.alpha = c.at("alpha").get<double>();
    m.config.k_max = c.at("k_max").get<int>();
    m.config.sigma_n2 = c.at("sigma_n2").get<double>();
    m.config.sigma_a2 = c.at("sigma_a2").get<double>();
    m.config.sigma_beta2 = c.at("sigma_beta2").get<double>();
    m.config.a = c.at("a").get<double>();
    m.config.b = c.at("b").get<double>();
    m.config.max_iters = c.at("max_iters").get<int>();
    m.config.tol = c.at("tol").get<double>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.restarts = c.at("restarts").get<int>();
    m.config.binarize_threshold = c.at("binarize_threshold").get<double>();
    m.lambda = mat_from_json(j.at("lambda"));
    m.pi = vec_from_json(j.at("pi"));
    m.A = mat_from_json(j.at("A"));
    m.a_cov = mat_from_json(j.at("a_cov"));
    m.beta_y = vec_from_json(j.at("beta_y"));
    m.beta_cov = mat_from_json(j.at("beta_cov"));
    m.tau_shape = j.at("tau_shape").get<double>();
    m.tau_rate = j.at("tau_rate").get<double>();
    m.nu = mat_from_json(j.at("nu"));
    m.bound_trace = j.at("bound_trace").get<std::vector<double>>();
    m.feat_mean = vec_from_json(j.at("feat_mean"));
    m.feat_scale = vec_from_json(j.at("feat_scale"));
    return m;
}

}  // namespace textcausal
