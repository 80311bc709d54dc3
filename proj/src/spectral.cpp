#include "textcausal/spectral.hpp"

#include <cmath>
#include <limits>

#include "textcausal/errors.hpp"

namespace textcausal {

namespace {

// min_{w on simplex} 0.5 w'Gw - h'w  via exponentiated gradient
Eigen::VectorXd simplex_ls(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, int iters,
                           double tol) {
    const int k = (int)G.rows();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / k);
    double step = 50.0;
    for (int it = 0; it < iters; it++) {
        Eigen::VectorXd grad = G * w - h;
        // stationarity on the simplex: gradient equal over the support
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int j = 0; j < k; j++) {
            if (w[j] > 1e-12) {
                lo = std::min(lo, grad[j]);
                hi = std::max(hi, grad[j]);
            }
        }
        if (hi - lo < tol) break;
        Eigen::VectorXd logw = (w.array().max(1e-300)).log().matrix() - step * grad;
        double mx = logw.maxCoeff();
        w = (logw.array() - mx).exp().matrix();
        w /= w.sum();
    }
    return w;
}

}  // namespace

Eigen::MatrixXd spectral_init(const std::vector<std::vector<std::pair<int, int>>>& rows, int V,
                              int K) {
    if (K < 2) throw ContractError("spectral_init: K must be at least 2");
    if (K > V) throw ContractError("spectral_init: K exceeds vocabulary size");

    // co-occurrence moment Q, averaged over docs with >= 2 tokens
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(V, V);
    long long used = 0;
    for (auto& row : rows) {
        double n = 0;
        for (auto& [v, c] : row) n += c;
        if (n < 2) continue;
        const double denom = n * (n - 1.0);
        for (auto& [v1, c1] : row) {
            for (auto& [v2, c2] : row) {
                double x = (double)c1 * (double)c2;
                if (v1 == v2) x -= (double)c1;
                Q(v1, v2) += x / denom;
            }
        }
        used++;
    }
    if (used == 0) throw ContractError("spectral_init: no document has 2 or more tokens");
    Q /= (double)used;

    Eigen::VectorXd p = Q.rowwise().sum();  // word marginals
    Eigen::MatrixXd Qbar = Q;
    std::vector<int> active;
    for (int v = 0; v < V; v++) {
        if (p[v] > 0) {
            Qbar.row(v) /= p[v];
            active.push_back(v);
        }
    }
    if ((int)active.size() < K)
        throw ContractError("spectral_init: only " + std::to_string(active.size()) +
                            " observed terms; need K <= that (try smaller K)");

    // greedy anchors: repeatedly take the row farthest from the span of the
    // chosen ones (stabilized Gram-Schmidt deflation); ties -> smallest index
    Eigen::MatrixXd work(active.size(), V);
    for (int i = 0; i < (int)active.size(); i++) work.row(i) = Qbar.row(active[i]);
    std::vector<int> anchors;
    std::vector<char> taken(active.size(), 0);
    for (int a = 0; a < K; a++) {
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < (int)active.size(); i++) {
            if (taken[i]) continue;
            double d = work.row(i).squaredNorm();
            if (d > best_d + 1e-15) {
                best_d = d;
                best = i;
            }
        }
        if (best < 0 || best_d < 1e-12)
            throw ContractError("spectral_init: co-occurrence rows span only " +
                                std::to_string(a) + " directions; try a smaller K");
        anchors.push_back(active[best]);
        taken[best] = 1;
        Eigen::RowVectorXd basis = work.row(best) / work.row(best).norm();
        for (int i = 0; i < (int)active.size(); i++) {
            if (taken[i]) continue;
            work.row(i) -= (work.row(i).dot(basis)) * basis;
        }
    }

    // RecoverL2: express every word row as a simplex mixture of anchor rows
    Eigen::MatrixXd A(K, V);
    for (int k = 0; k < K; k++) A.row(k) = Qbar.row(anchors[k]);
    Eigen::MatrixXd G = A * A.transpose();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(V, K);  // C_vk = p_v * w_vk
    for (int v : active) {
        Eigen::VectorXd h = A * Qbar.row(v).transpose();
        Eigen::VectorXd w = simplex_ls(G, h, 500, 1e-8);
        C.row(v) = p[v] * w.transpose();
    }

    Eigen::MatrixXd beta(K, V);
    for (int k = 0; k < K; k++) {
        double s = C.col(k).sum();
        if (s <= 0)
            throw NumericalError("spectral_init: topic " + std::to_string(k) +
                                 " received no mass");
        beta.row(k) = C.col(k).transpose() / s;
    }
    return beta;
}

Eigen::MatrixXd spectral_init(const Corpus& c, int K) {
    if (!c.has_dtm()) throw ContractError("spectral_init: corpus has no document-term matrix");
    return spectral_init(c.rows, (int)c.vocabulary.size(), K);
}

}  // namespace textcausal
