#include "textcausal/stm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/json_mat.hpp"
#include "textcausal/parallel.hpp"
#include "textcausal/spectral.hpp"

using nlohmann::json;

namespace textcausal {

namespace {

constexpr double kEstepGradTol = 1e-8;
constexpr double kNonePriorVar = 100.0;  // diffuse prior for mode "none"

Eigen::MatrixXd floor_rows(Eigen::MatrixXd beta) {
    beta.array() += 1e-12;
    for (Eigen::Index k = 0; k < beta.rows(); k++) {
        double s = beta.row(k).sum();
        if (!(s > 0)) throw NumericalError("topic-word row degenerate");
        beta.row(k) /= s;
    }
    return beta;
}

Eigen::MatrixXd clamp_spd(Eigen::MatrixXd m, double floor_ev) {
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().array().max(floor_ev).matrix();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// One document's slice of the problem: the terms it uses and their counts.
struct DocView {
    std::vector<int> terms;
    Eigen::VectorXd counts;
    double total = 0;
};

DocView make_view(const std::vector<std::pair<int, int>>& row) {
    DocView v;
    v.terms.reserve(row.size());
    Eigen::VectorXd c((Eigen::Index)row.size());
    Eigen::Index j = 0;
    for (auto& [t, n] : row) {
        v.terms.push_back(t);
        c[j++] = (double)n;
        v.total += (double)n;
    }
    v.counts = std::move(c);
    return v;
}

struct EstepResult {
    Eigen::VectorXd eta;
    Eigen::MatrixXd nu;       // only when wanted
    double bound = 0;         // doc bound contribution
    double grad_norm = 0;     // final objective gradient, max-norm
    Eigen::MatrixXd phi_c;    // n_v x K, phi weighted by counts (for the beta update)
};

// Maximize  -0.5 (eta-mu)' Sinv (eta-mu) + sum_v c_v log(theta' beta_col_v)
// by damped Newton with backtracking, warm-started at eta0.
EstepResult doc_estep(const DocView& doc, const Eigen::MatrixXd& beta, const Eigen::VectorXd& mu,
                      const Eigen::MatrixXd& Sinv, double logdet_sigma,
                      const Eigen::VectorXd& eta0, int max_iters, double grad_tol,
                      bool want_nu, bool want_phi) {
    const int Km1 = (int)mu.size();
    const int K = Km1 + 1;
    const int nv = (int)doc.terms.size();

    // gather the doc's beta columns once: K x nv
    Eigen::MatrixXd B(K, nv);
    for (int j = 0; j < nv; j++) B.col(j) = beta.col(doc.terms[j]);

    Eigen::VectorXd eta = eta0;

    auto theta_of = [&](const Eigen::VectorXd& e) {
        Eigen::VectorXd full(K);
        full.head(Km1) = e;
        full[Km1] = 0.0;
        double mx = full.maxCoeff();
        Eigen::VectorXd t = (full.array() - mx).exp();
        return (t / t.sum()).eval();
    };
    auto objective = [&](const Eigen::VectorXd& e, const Eigen::VectorXd& th) {
        double quad = -0.5 * (e - mu).dot(Sinv * (e - mu));
        if (nv == 0) return quad;
        Eigen::VectorXd p = B.transpose() * th;
        double ll = 0;
        for (int j = 0; j < nv; j++) ll += doc.counts[j] * std::log(std::max(p[j], 1e-300));
        return quad + ll;
    };

    Eigen::VectorXd theta = theta_of(eta);
    double f = objective(eta, theta);
    Eigen::VectorXd grad(Km1);
    Eigen::MatrixXd phi;  // nv x K
    double gnorm = 0;

    auto compute_grad = [&]() {
        Eigen::VectorXd prior_g = Sinv * (eta - mu);
        if (nv > 0) {
            Eigen::VectorXd p = B.transpose() * theta;
            phi.resize(nv, K);
            for (int j = 0; j < nv; j++)
                phi.row(j) = (theta.array() * B.col(j).array()).transpose() / std::max(p[j], 1e-300);
            Eigen::VectorXd cnt = phi.transpose() * doc.counts;  // K
            grad = cnt.head(Km1) - doc.total * theta.head(Km1) - prior_g;
        } else {
            grad = -prior_g;
        }
        gnorm = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    };

    // curvature of -f:  Sinv - diag(cnt) + phi'C phi + N (diag(th) - th th')
    auto curvature = [&]() {
        Eigen::MatrixXd M = Sinv;
        if (nv > 0) {
            Eigen::MatrixXd phw = phi.leftCols(Km1).transpose() *
                                  doc.counts.asDiagonal() * phi.leftCols(Km1);
            Eigen::VectorXd cnt_h = (phi.transpose() * doc.counts).head(Km1);
            Eigen::VectorXd th = theta.head(Km1);
            M -= Eigen::MatrixXd(cnt_h.asDiagonal());
            M += phw;
            M += doc.total * (Eigen::MatrixXd(th.asDiagonal()) - th * th.transpose());
        }
        return M;
    };

    compute_grad();
    int it = 0;
    for (; it < max_iters && gnorm > grad_tol; it++) {
        Eigen::MatrixXd M = curvature();
        double damp = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        while (llt.info() != Eigen::Success) {
            damp = damp == 0.0 ? 1e-6 : damp * 10.0;
            if (damp > 1e8) throw NumericalError("document curvature irreparably indefinite");
            llt.compute(M + damp * Eigen::MatrixXd::Identity(Km1, Km1));
        }
        Eigen::VectorXd d = llt.solve(grad);
        double t = 1.0;
        bool accepted = false;
        while (t >= 1e-12) {
            Eigen::VectorXd e2 = eta + t * d;
            Eigen::VectorXd th2 = theta_of(e2);
            double f2 = objective(e2, th2);
            if (f2 > f) {
                eta = std::move(e2);
                theta = std::move(th2);
                f = f2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // at numerical resolution
        compute_grad();
    }

    EstepResult r;
    r.eta = eta;
    r.grad_norm = gnorm;

    // curvature at the mode for nu and the Laplace bound
    Eigen::MatrixXd M = curvature();
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    double logdet_M;
    if (llt.info() == Eigen::Success) {
        logdet_M = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        if (want_nu) r.nu = llt.solve(Eigen::MatrixXd::Identity(Km1, Km1));
    } else {
        Eigen::MatrixXd Mc = clamp_spd(M, 1e-8);
        Eigen::LLT<Eigen::MatrixXd> llt2(Mc);
        logdet_M = 2.0 * llt2.matrixL().toDenseMatrix().diagonal().array().log().sum();
        if (want_nu) r.nu = llt2.solve(Eigen::MatrixXd::Identity(Km1, Km1));
    }
    r.bound = f - 0.5 * logdet_sigma - 0.5 * logdet_M;

    if (want_phi && nv > 0) r.phi_c = doc.counts.asDiagonal() * phi;
    return r;
}

Eigen::MatrixXd design_matrix(const Corpus& c, const std::vector<std::string>& prevalence) {
    const Eigen::Index d = (Eigen::Index)c.size();
    Eigen::MatrixXd X(d, (Eigen::Index)prevalence.size() + 1);
    X.col(0).setOnes();
    for (std::size_t p = 0; p < prevalence.size(); p++) {
        const auto& name = prevalence[p];
        for (Eigen::Index i = 0; i < d; i++) {
            const Document& doc = c.documents[(std::size_t)i];
            double v;
            if (name == "treatment") {
                if (!doc.treatment)
                    throw ContractError("document '" + doc.id + "' has no treatment value");
                v = *doc.treatment;
            } else {
                auto it = doc.covariates.find(name);
                if (it == doc.covariates.end())
                    throw ContractError("document '" + doc.id + "' lacks covariate '" + name + "'");
                v = it->second;
            }
            X(i, (Eigen::Index)p + 1) = v;
        }
    }
    return X;
}

}  // namespace

Eigen::VectorXd softmax_full(const Eigen::RowVectorXd& eta_row) {
    Eigen::VectorXd full(eta_row.size() + 1);
    full.head(eta_row.size()) = eta_row.transpose();
    full[eta_row.size()] = 0.0;
    double mx = full.maxCoeff();
    Eigen::VectorXd t = (full.array() - mx).exp();
    return t / t.sum();
}

std::pair<double, Eigen::VectorXd> doc_objective(const Eigen::MatrixXd& beta,
                                                 const std::vector<std::pair<int, int>>& row,
                                                 const Eigen::VectorXd& mu,
                                                 const Eigen::MatrixXd& Sigma,
                                                 const Eigen::VectorXd& eta) {
    const int Km1 = (int)mu.size();
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success) throw NumericalError("doc_objective: Sigma not SPD");
    Eigen::MatrixXd Sinv = llt.solve(Eigen::MatrixXd::Identity(Km1, Km1));
    double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

    Eigen::VectorXd theta = softmax_full(eta.transpose());
    double value = -0.5 * Km1 * std::log(2.0 * M_PI) - 0.5 * logdet -
                   0.5 * (eta - mu).dot(Sinv * (eta - mu));
    Eigen::VectorXd grad = -Sinv * (eta - mu);
    double total = 0;
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(Km1);
    for (auto& [v, c] : row) {
        double p = theta.dot(beta.col(v));
        value += c * std::log(std::max(p, 1e-300));
        for (int k = 0; k < Km1; k++) cnt[k] += c * theta[k] * beta(k, v) / std::max(p, 1e-300);
        total += c;
    }
    grad += cnt - total * theta.head(Km1);
    return {value, grad};
}

Eigen::MatrixXd StmModel::theta() const {
    Eigen::MatrixXd th(eta.rows(), config.K);
    for (Eigen::Index i = 0; i < eta.rows(); i++) th.row(i) = softmax_full(eta.row(i)).transpose();
    return th;
}

StmModel fit_stm(const Corpus& train, const StmConfig& cfg, const StmInit* init) {
    if (!train.has_dtm()) throw ContractError("fit_stm: corpus has no document-term matrix");
    if (cfg.K < 2) throw ContractError("fit_stm: K must be at least 2");
    if (!(cfg.tol > 0)) throw ContractError("fit_stm: tolerance must be positive");
    const int K = cfg.K;
    const int Km1 = K - 1;
    const Eigen::Index D = (Eigen::Index)train.size();
    const int V = (int)train.vocabulary.size();

    Eigen::MatrixXd X = design_matrix(train, cfg.prevalence);
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols())
            throw ContractError("fit_stm: covariate design is rank-deficient");
    }
    const Eigen::Index P = X.cols();

    StmModel m;
    m.config = cfg;
    if (train.tok_config) m.tok_config = *train.tok_config;
    m.vocabulary = train.vocabulary;
    for (auto& d : train.documents) m.doc_ids.push_back(d.id);

    m.beta = floor_rows(init && init->beta ? *init->beta : spectral_init(train, K));
    if (m.beta.rows() != K || m.beta.cols() != V)
        throw ContractError("fit_stm: warm-start beta has wrong shape");
    m.gamma = init && init->gamma ? *init->gamma : Eigen::MatrixXd::Zero(P, Km1);
    m.Sigma = init && init->Sigma ? *init->Sigma : Eigen::MatrixXd::Identity(Km1, Km1);
    m.mu = X * m.gamma;
    m.eta = init && init->eta ? *init->eta : m.mu;
    if (m.eta.rows() != D || m.eta.cols() != Km1)
        throw ContractError("fit_stm: warm-start eta has wrong shape");
    m.nu.assign((std::size_t)D, Eigen::MatrixXd());

    std::vector<DocView> views;
    views.reserve((std::size_t)D);
    for (auto& row : train.rows) views.push_back(make_view(row));

    double prev_bound = -std::numeric_limits<double>::infinity();
    const int n_chunks = 64;

    for (int em = 1; em <= cfg.max_em_iters; em++) {
        Eigen::LLT<Eigen::MatrixXd> slt(m.Sigma);
        if (slt.info() != Eigen::Success) {
            m.Sigma = clamp_spd(m.Sigma, 1e-8);
            slt.compute(m.Sigma);
        }
        Eigen::MatrixXd Sinv = slt.solve(Eigen::MatrixXd::Identity(Km1, Km1));
        double logdet_sigma = 2.0 * slt.matrixL().toDenseMatrix().diagonal().array().log().sum();

        std::vector<Eigen::MatrixXd> beta_acc((std::size_t)n_chunks);
        std::vector<double> bound_acc((std::size_t)n_chunks, 0.0);
        parallel_chunks((std::size_t)D, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
            Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K, V);
            double b = 0;
            for (std::size_t i = lo; i < hi; i++) {
                auto r = doc_estep(views[i], m.beta, m.mu.row((Eigen::Index)i).transpose(), Sinv,
                                   logdet_sigma, m.eta.row((Eigen::Index)i).transpose(),
                                   cfg.max_estep_iters, kEstepGradTol, true, true);
                m.eta.row((Eigen::Index)i) = r.eta.transpose();
                m.nu[i] = std::move(r.nu);
                b += r.bound;
                for (int j = 0; j < (int)views[i].terms.size(); j++)
                    acc.col(views[i].terms[j]) += r.phi_c.row(j).transpose();
            }
            beta_acc[chunk] = std::move(acc);
            bound_acc[chunk] = b;
        }, n_chunks);

        double bound = 0;
        Eigen::MatrixXd beta_new = Eigen::MatrixXd::Zero(K, V);
        for (int c = 0; c < n_chunks; c++) {
            bound += bound_acc[(std::size_t)c];
            if (beta_acc[(std::size_t)c].size()) beta_new += beta_acc[(std::size_t)c];
        }
        if (!std::isfinite(bound))
            throw NumericalError("fit_stm: evidence bound non-finite at EM iteration " +
                                 std::to_string(em));
        m.bound_trace.push_back(bound);

        bool converged =
            em > 1 && std::abs(bound - prev_bound) < cfg.tol * std::abs(prev_bound);
        prev_bound = bound;
        // stop before the M-step so the stored eta/nu are modes of the stored model
        if (converged || em == cfg.max_em_iters) break;

        // M-step
        m.beta = floor_rows(std::move(beta_new));
        Eigen::MatrixXd XtX = X.transpose() * X;
        XtX.diagonal().array() += cfg.gamma_ridge;
        m.gamma = XtX.ldlt().solve(X.transpose() * m.eta);
        m.mu = X * m.gamma;
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(Km1, Km1);
        for (Eigen::Index i = 0; i < D; i++) {
            Eigen::VectorXd dlt = (m.eta.row(i) - m.mu.row(i)).transpose();
            S += m.nu[(std::size_t)i] + dlt * dlt.transpose();
        }
        m.Sigma = clamp_spd(S / (double)D, 1e-8);
    }

    m.mu_bar = m.mu.colwise().mean();
    m.sigma_tilde = averaged_prior_sigma(m, cfg.literal_sigma_tilde);
    return m;
}

Eigen::RowVectorXd averaged_prior_mean(const StmModel& model) {
    return model.mu.colwise().mean();
}

Eigen::MatrixXd averaged_prior_sigma(const StmModel& model, bool literal_convention) {
    const Eigen::Index D = model.eta.rows();
    const Eigen::Index Km1 = model.eta.cols();
    Eigen::RowVectorXd mu_bar = model.mu.colwise().mean();
    Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(Km1, Km1);
    Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(Km1, Km1);
    for (Eigen::Index i = 0; i < D; i++) {
        Eigen::VectorXd a = (model.eta.row(i) - model.mu.row(i)).transpose();
        Eigen::VectorXd b = (model.eta.row(i) - mu_bar).transpose();
        fitted += a * a.transpose();
        pooled += b * b.transpose();
    }
    Eigen::MatrixXd st;
    if (literal_convention) {
        // the correction applied verbatim on unnormalized sums
        st = model.Sigma - fitted + pooled;
    } else {
        // Sigma stores (1/D)-scaled second moments, so scale the sums to match
        st = model.Sigma - fitted / (double)D + pooled / (double)D;
    }
    st = clamp_spd(st, 1e-8);
    if (!st.allFinite()) throw NumericalError("averaged prior covariance non-finite");
    return st;
}

ApplyResult fit_new_counts(const StmModel& model,
                           const std::vector<std::vector<std::pair<int, int>>>& rows,
                           const std::vector<std::string>& doc_ids, PriorMode mode,
                           const Eigen::MatrixXd* covariate_design) {
    const int K = model.config.K;
    const int Km1 = K - 1;
    const Eigen::Index D = (Eigen::Index)rows.size();

    Eigen::MatrixXd prior_mu(D, Km1);
    Eigen::MatrixXd Sigma_p;
    switch (mode) {
        case PriorMode::none:
            prior_mu.setZero();
            Sigma_p = kNonePriorVar * Eigen::MatrixXd::Identity(Km1, Km1);
            break;
        case PriorMode::covariate: {
            for (auto& name : model.config.prevalence)
                if (name == "treatment")
                    throw ContractError(
                        "covariate prior refused: the fitted prior design includes the "
                        "treatment, so the same text could map to two different values");
            if (!covariate_design)
                throw ContractError("covariate prior needs a covariate design matrix");
            if (covariate_design->rows() != D || covariate_design->cols() != model.gamma.rows())
                throw ContractError("covariate design shape mismatch");
            prior_mu = *covariate_design * model.gamma;
            Sigma_p = model.Sigma;
            break;
        }
        case PriorMode::average:
            for (Eigen::Index i = 0; i < D; i++) prior_mu.row(i) = model.mu_bar;
            Sigma_p = model.sigma_tilde;
            break;
    }
    Sigma_p = clamp_spd(Sigma_p, 1e-8);
    if (!Sigma_p.allFinite()) throw NumericalError("prior covariance non-finite");

    Eigen::LLT<Eigen::MatrixXd> slt(Sigma_p);
    if (slt.info() != Eigen::Success) throw NumericalError("prior covariance not positive definite");
    Eigen::MatrixXd Sinv = slt.solve(Eigen::MatrixXd::Identity(Km1, Km1));
    double logdet_sigma = 2.0 * slt.matrixL().toDenseMatrix().diagonal().array().log().sum();

    std::vector<DocView> views;
    views.reserve((std::size_t)D);
    for (auto& row : rows) views.push_back(make_view(row));

    ApplyResult out;
    out.doc_ids = doc_ids;
    out.theta.resize(D, K);
    out.oov_rate.assign((std::size_t)D, 0.0);
    out.oov_dropped.assign((std::size_t)D, 0);

    parallel_chunks((std::size_t)D, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; i++) {
            auto r = doc_estep(views[i], model.beta, prior_mu.row((Eigen::Index)i).transpose(),
                               Sinv, logdet_sigma, prior_mu.row((Eigen::Index)i).transpose(),
                               model.config.max_estep_iters, kEstepGradTol, false, false);
            out.theta.row((Eigen::Index)i) = softmax_full(r.eta.transpose()).transpose();
        }
    });
    return out;
}

Eigen::MatrixXd covariate_design_for(const StmModel& model, const Corpus& docs) {
    for (auto& name : model.config.prevalence)
        if (name == "treatment")
            throw ContractError(
                "covariate prior refused: the fitted prior design includes the treatment, so "
                "the same text could map to two different values");
    return design_matrix(docs, model.config.prevalence);
}

ApplyResult fit_new_documents(const StmModel& model, const Corpus& raw_docs, PriorMode mode) {
    std::vector<std::vector<std::pair<int, int>>> rows;
    std::vector<std::string> ids;
    std::vector<double> oov_rate;
    std::vector<long long> oov_dropped;

    // position lookup into the model's (sorted) vocabulary
    auto vix = [&](const std::string& t) -> int {
        auto it = std::lower_bound(model.vocabulary.begin(), model.vocabulary.end(), t);
        if (it == model.vocabulary.end() || *it != t) return -1;
        return (int)(it - model.vocabulary.begin());
    };

    for (auto& d : raw_docs.documents) {
        auto toks = tokenize_text(d.text, model.tok_config);
        std::map<int, int> counts;
        long long dropped = 0;
        for (auto& t : toks) {
            int ix = vix(t);
            if (ix < 0)
                dropped++;
            else
                counts[ix]++;
        }
        std::vector<std::pair<int, int>> row(counts.begin(), counts.end());
        rows.push_back(std::move(row));
        ids.push_back(d.id);
        oov_dropped.push_back(dropped);
        oov_rate.push_back(toks.empty() ? 0.0 : (double)dropped / (double)toks.size());
    }

    const Eigen::MatrixXd* design = nullptr;
    Eigen::MatrixXd X;
    if (mode == PriorMode::covariate) {
        X = covariate_design_for(model, raw_docs);
        design = &X;
    }
    ApplyResult out = fit_new_counts(model, rows, ids, mode, design);
    out.oov_rate = std::move(oov_rate);
    out.oov_dropped = std::move(oov_dropped);
    return out;
}

std::vector<std::pair<std::string, double>> top_words(const StmModel& model, int k, int n) {
    if (k < 0 || k >= model.config.K) throw ContractError("top_words: topic index out of range");
    std::vector<int> ix(model.vocabulary.size());
    for (int i = 0; i < (int)ix.size(); i++) ix[i] = i;
    std::sort(ix.begin(), ix.end(), [&](int a, int b) {
        if (model.beta(k, a) != model.beta(k, b)) return model.beta(k, a) > model.beta(k, b);
        return model.vocabulary[(std::size_t)a] < model.vocabulary[(std::size_t)b];
    });
    std::vector<std::pair<std::string, double>> out;
    for (int i = 0; i < std::min<int>(n, (int)ix.size()); i++)
        out.emplace_back(model.vocabulary[(std::size_t)ix[(std::size_t)i]], model.beta(k, ix[(std::size_t)i]));
    return out;
}

std::vector<std::pair<std::string, double>> representative_docs(const StmModel& model, int k,
                                                                int n) {
    if (k < 0 || k >= model.config.K)
        throw ContractError("representative_docs: topic index out of range");
    Eigen::MatrixXd th = model.theta();
    std::vector<int> ix((std::size_t)th.rows());
    for (int i = 0; i < (int)ix.size(); i++) ix[(std::size_t)i] = i;
    std::sort(ix.begin(), ix.end(), [&](int a, int b) {
        if (th(a, k) != th(b, k)) return th(a, k) > th(b, k);
        return model.doc_ids[(std::size_t)a] < model.doc_ids[(std::size_t)b];
    });
    std::vector<std::pair<std::string, double>> out;
    for (int i = 0; i < std::min<int>(n, (int)ix.size()); i++)
        out.emplace_back(model.doc_ids[(std::size_t)ix[(std::size_t)i]], th(ix[(std::size_t)i], k));
    return out;
}

void save_stm(const std::string& path, const StmModel& m) {
    json j;
    j["format"] = "stm-model";
    j["format_version"] = 1;
    j["config"] = {{"K", m.config.K},
                   {"prevalence", m.config.prevalence},
                   {"max_em_iters", m.config.max_em_iters},
                   {"tol", m.config.tol},
                   {"gamma_ridge", m.config.gamma_ridge},
                   {"seed", m.config.seed},
                   {"literal_sigma_tilde", m.config.literal_sigma_tilde},
                   {"max_estep_iters", m.config.max_estep_iters}};
    j["tokenizer"] = {{"stemmer", m.tok_config.stemmer},
                      {"remove_stopwords", m.tok_config.remove_stopwords},
                      {"extra_stopwords", m.tok_config.extra_stopwords},
                      {"drop_numeric", m.tok_config.drop_numeric},
                      {"min_token_length", m.tok_config.min_token_length},
                      {"min_doc_count", m.tok_config.min_doc_count},
                      {"max_doc_fraction", m.tok_config.max_doc_fraction}};
    j["vocabulary"] = m.vocabulary;
    j["doc_ids"] = m.doc_ids;
    j["beta"] = mat_to_json(m.beta);
    j["gamma"] = mat_to_json(m.gamma);
    j["sigma"] = mat_to_json(m.Sigma);
    j["mu"] = mat_to_json(m.mu);
    j["eta"] = mat_to_json(m.eta);
    j["mu_bar"] = vec_to_json(m.mu_bar.transpose());
    j["sigma_tilde"] = mat_to_json(m.sigma_tilde);
    j["bound_trace"] = m.bound_trace;
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write " + path);
    out << j.dump() << "\n";
}

StmModel load_stm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ContractError(path + ": not a model file (" + e.what() + ")");
    }
    if (j.value("format", "") != "stm-model")
        throw ContractError(path + ": not an stm model file");
    StmModel m;
    auto& jc = j.at("config");
    m.config.K = jc.at("K").get<int>();
    m.config.prevalence = jc.at("prevalence").get<std::vector<std::string>>();
    m.config.max_em_iters = jc.at("max_em_iters").get<int>();
    m.config.tol = jc.at("tol").get<double>();
    m.config.gamma_ridge = jc.at("gamma_ridge").get<double>();
    m.config.seed = jc.at("seed").get<std::uint64_t>();
    m.config.literal_sigma_tilde = jc.at("literal_sigma_tilde").get<bool>();
    m.config.max_estep_iters = jc.at("max_estep_iters").get<int>();
    auto& jt = j.at("tokenizer");
    m.tok_config.stemmer = jt.at("stemmer").get<std::string>();
    m.tok_config.remove_stopwords = jt.at("remove_stopwords").get<bool>();
    m.tok_config.extra_stopwords = jt.at("extra_stopwords").get<std::vector<std::string>>();
    m.tok_config.drop_numeric = jt.at("drop_numeric").get<bool>();
    m.tok_config.min_token_length = jt.at("min_token_length").get<int>();
    m.tok_config.min_doc_count = jt.at("min_doc_count").get<int>();
    m.tok_config.max_doc_fraction = jt.at("max_doc_fraction").get<double>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    m.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    m.beta = mat_from_json(j.at("beta"));
    m.gamma = mat_from_json(j.at("gamma"));
    m.Sigma = mat_from_json(j.at("sigma"));
    m.mu = mat_from_json(j.at("mu"));
    m.eta = mat_from_json(j.at("eta"));
    m.mu_bar = vec_from_json(j.at("mu_bar")).transpose();
    m.sigma_tilde = mat_from_json(j.at("sigma_tilde"));
    m.bound_trace = j.at("bound_trace").get<std::vector<double>>();
    return m;
}

}  // namespace textcausal
