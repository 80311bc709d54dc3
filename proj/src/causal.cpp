#include "textcausal/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "textcausal/errors.hpp"
#include "textcausal/parallel.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/stats.hpp"

namespace textcausal {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr int kMaxRedrawsPerReplicate = 1000;

double normal_p(double point, double se) {
    if (se <= 0.0) return point == 0.0 ? 1.0 : 0.0;
    return 2.0 * (1.0 - stats::normal_cdf(std::abs(point / se)));
}

struct OlsFit {
    Eigen::VectorXd coef, se;
};

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n < p) throw ContractError("regression needs at least as many documents as terms");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) throw ContractError("feature design is collinear");
    OlsFit f;
    f.coef = qr.solve(y);
    double rss = (y - X * f.coef).squaredNorm();
    double s2 = n > p ? std::max(0.0, rss) / (double)(n - p) : 0.0;
    Eigen::MatrixXd xtx_inv =
        (X.transpose() * X).llt().solve(Eigen::MatrixXd::Identity(p, p));
    f.se = (s2 * xtx_inv.diagonal().cwiseMax(0.0)).cwiseSqrt();
    return f;
}

void check_binary(const Eigen::MatrixXi& z) {
    for (Eigen::Index i = 0; i < z.rows(); i++)
        for (Eigen::Index k = 0; k < z.cols(); k++)
            if (z(i, k) != 0 && z(i, k) != 1)
                throw ContractError("feature matrix must be binary");
}

std::string pattern_name(const std::vector<int>& others, const std::vector<int>& values) {
    std::string s = "(";
    for (std::size_t j = 0; j < others.size(); j++) {
        if (j) s += ", ";
        s += "Z_" + std::to_string(others[j] + 1) + "=" + std::to_string(values[j]);
    }
    return s + ")";
}

// mean difference on feature k within each pattern of the other columns
struct CellStats {
    std::vector<double> y1, y0;
};

std::map<std::vector<int>, CellStats> stratify(const Eigen::VectorXd& y,
                                               const Eigen::MatrixXi& z, int k,
                                               const std::vector<std::size_t>& idx) {
    std::map<std::vector<int>, CellStats> cells;
    std::vector<int> key((std::size_t)z.cols() - 1);
    for (std::size_t r : idx) {
        std::size_t j = 0;
        for (Eigen::Index c = 0; c < z.cols(); c++)
            if ((int)c != k) key[j++] = z((Eigen::Index)r, c);
        auto& cs = cells[key];
        (z((Eigen::Index)r, k) ? cs.y1 : cs.y0).push_back(y[(Eigen::Index)r]);
    }
    return cells;
}

std::vector<std::size_t> identity_idx(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; i++) idx[i] = i;
    return idx;
}

// estimator cores: nullopt when undefined on this (re)sample

std::optional<double> ate_core(const Eigen::MatrixXd& theta, const std::vector<int>& t, int k,
                               const std::vector<std::size_t>& idx) {
    double s1 = 0, s0 = 0;
    long n1 = 0, n0 = 0;
    for (std::size_t r : idx) {
        if (t[r]) {
            s1 += theta((Eigen::Index)r, k);
            n1++;
        } else {
            s0 += theta((Eigen::Index)r, k);
            n0++;
        }
    }
    if (n1 == 0 || n0 == 0) return std::nullopt;
    return s1 / (double)n1 - s0 / (double)n0;
}

std::optional<double> amce_core(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k,
                                WeightMode m, const std::vector<std::size_t>& idx) {
    if (m == WeightMode::empirical) {
        Eigen::MatrixXd X((Eigen::Index)idx.size(), z.cols() + 1);
        Eigen::VectorXd yy((Eigen::Index)idx.size());
        for (std::size_t i = 0; i < idx.size(); i++) {
            X((Eigen::Index)i, 0) = 1.0;
            for (Eigen::Index c = 0; c < z.cols(); c++)
                X((Eigen::Index)i, c + 1) = z((Eigen::Index)idx[i], c);
            yy[(Eigen::Index)i] = y[(Eigen::Index)idx[i]];
        }
        try {
            return ols(X, yy).coef[k + 1];
        } catch (const ContractError&) {
            return std::nullopt;
        }
    }
    auto cells = stratify(y, z, k, idx);
    double sum = 0;
    int complete = 0;
    for (auto& [key, cs] : cells) {
        if (cs.y1.empty() || cs.y0.empty()) continue;
        sum += stats::mean(cs.y1) - stats::mean(cs.y0);
        complete++;
    }
    if (complete == 0) return std::nullopt;
    return sum / complete;
}

std::optional<double> acie_core(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k,
                                int l, WeightMode m, const std::vector<std::size_t>& idx) {
    if (m == WeightMode::empirical) {
        Eigen::MatrixXd X((Eigen::Index)idx.size(), z.cols() + 2);
        Eigen::VectorXd yy((Eigen::Index)idx.size());
        for (std::size_t i = 0; i < idx.size(); i++) {
            const Eigen::Index r = (Eigen::Index)idx[i];
            X((Eigen::Index)i, 0) = 1.0;
            X((Eigen::Index)i, 1) = z(r, k);
            X((Eigen::Index)i, 2) = z(r, l);
            X((Eigen::Index)i, 3) = z(r, k) * z(r, l);
            Eigen::Index col = 4;
            for (Eigen::Index c = 0; c < z.cols(); c++)
                if ((int)c != k && (int)c != l) X((Eigen::Index)i, col++) = z(r, c);
            yy[(Eigen::Index)i] = y[r];
        }
        try {
            return ols(X, yy).coef[3];
        } catch (const ContractError&) {
            return std::nullopt;
        }
    }
    // equally weighted double differences over patterns of the other features
    std::map<std::vector<int>, std::array<std::vector<double>, 4>> cells;
    std::vector<int> key((std::size_t)z.cols() - 2);
    for (std::size_t r : idx) {
        std::size_t j = 0;
        for (Eigen::Index c = 0; c < z.cols(); c++)
            if ((int)c != k && (int)c != l) key[j++] = z((Eigen::Index)r, c);
        int cell = 2 * z((Eigen::Index)r, k) + z((Eigen::Index)r, l);
        cells[key][(std::size_t)cell].push_back(y[(Eigen::Index)r]);
    }
    double sum = 0;
    int complete = 0;
    for (auto& [pat, quad] : cells) {
        if (quad[0].empty() || quad[1].empty() || quad[2].empty() || quad[3].empty()) continue;
        double m00 = stats::mean(quad[0]), m01 = stats::mean(quad[1]);
        double m10 = stats::mean(quad[2]), m11 = stats::mean(quad[3]);
        sum += (m11 - m01) - (m10 - m00);
        complete++;
    }
    if (complete == 0) return std::nullopt;
    return sum / complete;
}

void attach_interval(CausalEstimate& e,
                     const std::function<std::optional<double>(const std::vector<std::size_t>&)>& stat,
                     std::size_t n, int b, std::uint64_t seed) {
    if (b > 0) {
        BootstrapResult r = bootstrap(stat, n, b, seed);
        e.b = b;
        e.degenerate_redraws = r.degenerate_redraws;
        e.ci_low = std::min(r.ci_low, e.point);
        e.ci_high = std::max(r.ci_high, e.point);
    } else {
        e.ci_low = e.point - kZ975 * e.se;
        e.ci_high = e.point + kZ975 * e.se;
    }
    e.p_value = normal_p(e.point, e.se);
}

}  // namespace

BootstrapResult bootstrap(
    const std::function<std::optional<double>(const std::vector<std::size_t>&)>& statistic,
    std::size_t n, int b, std::uint64_t seed) {
    if (b < 1)
        throw ContractError("bootstrap needs B >= 1; request the analytic interval instead");
    if (n == 0) throw ContractError("bootstrap on empty data");

    std::vector<double> reps((std::size_t)b);
    std::vector<long long> redraws((std::size_t)b, 0);
    parallel_chunks((std::size_t)b, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; r++) {
            auto eng = make_engine(derive_seed(seed, (std::uint64_t)r));
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::vector<std::size_t> idx(n);
            for (int attempt = 0;; attempt++) {
                if (attempt >= kMaxRedrawsPerReplicate)
                    throw NumericalError(
                        "bootstrap: could not draw a non-degenerate resample after " +
                        std::to_string(kMaxRedrawsPerReplicate) + " attempts");
                for (std::size_t i = 0; i < n; i++) idx[i] = pick(eng);
                auto v = statistic(idx);
                if (v) {
                    reps[r] = *v;
                    redraws[r] = attempt;
                    break;
                }
            }
        }
    });

    BootstrapResult out;
    for (long long c : redraws) out.degenerate_redraws += c;
    out.se = stats::sample_sd(reps);
    out.ci_low = stats::quantile(reps, 0.025);
    out.ci_high = stats::quantile(reps, 0.975);
    return out;
}

CausalEstimate estimate_ate(const Eigen::MatrixXd& theta, const std::vector<int>& t, int k,
                            int bootstrap_b, std::uint64_t seed) {
    const std::size_t n = (std::size_t)theta.rows();
    if (t.size() != n) throw ContractError("estimate_ate: theta rows and treatments disagree");
    if (k < 0 || k >= (int)theta.cols())
        throw ContractError("estimate_ate: category index out of range");

    std::vector<double> y1, y0;
    for (std::size_t i = 0; i < n; i++)
        (t[i] ? y1 : y0).push_back(theta((Eigen::Index)i, k));
    if (y1.empty() || y0.empty())
        throw ContractError(
            "estimate_ate: positivity fails — the " + std::string(y1.empty() ? "treated" : "control") +
            " arm is empty (Pr(T=t) must be positive in both arms)");

    CausalEstimate e;
    e.estimand = Estimand::ate;
    e.k = k;
    e.point = stats::mean(y1) - stats::mean(y0);
    e.se = std::sqrt(stats::sample_variance(y1) / (double)y1.size() +
                     stats::sample_variance(y0) / (double)y0.size());
    attach_interval(
        e, [&](const std::vector<std::size_t>& idx) { return ate_core(theta, t, k, idx); }, n,
        bootstrap_b, seed);
    return e;
}

CausalEstimate estimate_amce(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k,
                             WeightMode m, int bootstrap_b, std::uint64_t seed) {
    const std::size_t n = (std::size_t)y.size();
    if ((std::size_t)z.rows() != n)
        throw ContractError("estimate_amce: outcome and feature rows disagree");
    if (k < 0 || k >= (int)z.cols())
        throw ContractError("estimate_amce: feature index out of range");
    check_binary(z);
    const int on = (int)z.col(k).sum();
    if (on == 0 || on == (int)n)
        throw ContractError("estimate_amce: no common support — feature Z_" +
                            std::to_string(k + 1) + " is constant in the test set");

    CausalEstimate e;
    e.estimand = Estimand::amce;
    e.k = k;

    // support audit over patterns of the other features
    std::vector<int> others;
    for (int c = 0; c < (int)z.cols(); c++)
        if (c != k) others.push_back(c);
    auto cells = stratify(y, z, k, identity_idx(n));
    int incomplete = 0;
    for (auto& [pat, cs] : cells) {
        if (!cs.y1.empty() && !cs.y0.empty()) continue;
        incomplete++;
        if (incomplete <= 8)
            e.warnings.push_back("common support gap: pattern " + pattern_name(others, pat) +
                                 " observed only with Z_" + std::to_string(k + 1) + "=" +
                                 (cs.y1.empty() ? "0" : "1"));
    }
    if (incomplete > 8)
        e.warnings.push_back("common support gap: " + std::to_string(incomplete - 8) +
                             " further patterns");

    auto point = amce_core(y, z, k, m, identity_idx(n));
    if (!point)
        throw ContractError(
            "estimate_amce: no common support — no pattern of the other features is observed "
            "with both values of Z_" + std::to_string(k + 1));
    e.point = *point;

    if (m == WeightMode::empirical) {
        Eigen::MatrixXd X((Eigen::Index)n, z.cols() + 1);
        X.col(0).setOnes();
        X.rightCols(z.cols()) = z.cast<double>();
        e.se = ols(X, y).se[k + 1];
    } else {
        double var = 0;
        int complete = 0;
        for (auto& [pat, cs] : cells) {
            if (cs.y1.empty() || cs.y0.empty()) continue;
            var += stats::sample_variance(cs.y1) / (double)cs.y1.size() +
                   stats::sample_variance(cs.y0) / (double)cs.y0.size();
            complete++;
        }
        e.se = std::sqrt(var) / (double)complete;
    }

    attach_interval(
        e, [&](const std::vector<std::size_t>& idx) { return amce_core(y, z, k, m, idx); }, n,
        bootstrap_b, seed);
    return e;
}

CausalEstimate estimate_acie(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k, int l,
                             WeightMode m, int bootstrap_b, std::uint64_t seed) {
    const std::size_t n = (std::size_t)y.size();
    if ((std::size_t)z.rows() != n)
        throw ContractError("estimate_acie: outcome and feature rows disagree");
    if (k < 0 || k >= (int)z.cols() || l < 0 || l >= (int)z.cols() || k == l)
        throw ContractError("estimate_acie: feature indices out of range or equal");
    check_binary(z);

    long cell_n[2][2] = {{0, 0}, {0, 0}};
    for (Eigen::Index i = 0; i < (Eigen::Index)n; i++) cell_n[z(i, k)][z(i, l)]++;
    for (int a = 0; a < 2; a++)
        for (int c = 0; c < 2; c++)
            if (cell_n[a][c] == 0)
                throw ContractError("estimate_acie: interaction cell (Z_" +
                                    std::to_string(k + 1) + "=" + std::to_string(a) + ", Z_" +
                                    std::to_string(l + 1) + "=" + std::to_string(c) +
                                    ") is never observed");

    CausalEstimate e;
    e.estimand = Estimand::acie;
    e.k = k;
    e.l = l;
    auto point = acie_core(y, z, k, l, m, identity_idx(n));
    if (!point)
        throw ContractError(
            "estimate_acie: no pattern of the remaining features has all four interaction "
            "cells observed");
    e.point = *point;

    if (m == WeightMode::empirical) {
        Eigen::MatrixXd X((Eigen::Index)n, z.cols() + 2);
        Eigen::VectorXd yy = y;
        for (Eigen::Index i = 0; i < (Eigen::Index)n; i++) {
            X(i, 0) = 1.0;
            X(i, 1) = z(i, k);
            X(i, 2) = z(i, l);
            X(i, 3) = z(i, k) * z(i, l);
            Eigen::Index col = 4;
            for (Eigen::Index c = 0; c < z.cols(); c++)
                if ((int)c != k && (int)c != l) X(i, col++) = z(i, c);
        }
        e.se = ols(X, yy).se[3];
    } else {
        // per-pattern double-difference variance, equal pattern weights
        std::map<std::vector<int>, std::array<std::vector<double>, 4>> cells;
        std::vector<int> key((std::size_t)z.cols() - 2);
        for (std::size_t r = 0; r < n; r++) {
            std::size_t j = 0;
            for (Eigen::Index c = 0; c < z.cols(); c++)
                if ((int)c != k && (int)c != l) key[j++] = z((Eigen::Index)r, c);
            int cell = 2 * z((Eigen::Index)r, k) + z((Eigen::Index)r, l);
            cells[key][(std::size_t)cell].push_back(y[(Eigen::Index)r]);
        }
        double var = 0;
        int complete = 0;
        for (auto& [pat, quad] : cells) {
            bool full = true;
            for (auto& q : quad) full = full && !q.empty();
            if (!full) continue;
            for (auto& q : quad) var += stats::sample_variance(q) / (double)q.size();
            complete++;
        }
        e.se = std::sqrt(var) / (double)complete;
    }

    attach_interval(
        e, [&](const std::vector<std::size_t>& idx) { return acie_core(y, z, k, l, m, idx); },
        n, bootstrap_b, seed);
    return e;
}

std::string effect_label(const CausalEstimate& e) {
    switch (e.estimand) {
        case Estimand::ate:
            return "ATE_" + std::to_string(e.k + 1);
        case Estimand::amce:
            return "AMCE_" + std::to_string(e.k + 1);
        case Estimand::acie:
            return "ACIE_" + std::to_string(e.k + 1) + "_" + std::to_string(e.l + 1);
    }
    return "?";
}

void apply_bh(std::vector<CausalEstimate>& estimates) {
    std::vector<double> p;
    p.reserve(estimates.size());
    for (auto& e : estimates) p.push_back(e.p_value);
    std::vector<double> adj = stats::benjamini_hochberg(p);
    for (std::size_t i = 0; i < estimates.size(); i++) estimates[i].p_bh = adj[i];
}

void effects_to_csv(const std::vector<CausalEstimate>& estimates, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ContractError("effects_to_csv: cannot write '" + path + "'");
    out << "estimand,k,l,point,se,ci_low,ci_high,p_value,p_bh,b,lock_state\n";
    out.precision(17);
    for (const auto& e : estimates) {
        const char* kind = e.estimand == Estimand::ate    ? "ATE"
                           : e.estimand == Estimand::amce ? "AMCE"
                                                          : "ACIE";
        out << kind << ',' << (e.k + 1) << ',';
        if (e.estimand == Estimand::acie) out << (e.l + 1);
        out << ',' << e.point << ',' << e.se << ',' << e.ci_low << ',' << e.ci_high << ','
            << e.p_value << ',';
        if (e.p_bh) out << *e.p_bh;
        out << ',' << e.b << ',' << e.lock_state << "\n";
    }
}

}  // namespace textcausal
