#include "textcausal/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "textcausal/errors.hpp"
#include "textcausal/parallel.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/spectral.hpp"

namespace textcausal {

namespace {

constexpr double kZ975 = 1.959963984540054;

// row -> column assignment minimizing total cost, rows <= cols
// (potentials + shortest augmenting paths)
std::vector<int> assign_min_cost(const Eigen::MatrixXd& a) {
    const int n = (int)a.rows(), m = (int)a.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; i++) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; j++) {
                if (used[j]) continue;
                double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; j++) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> out(n, -1);
    for (int j = 1; j <= m; j++)
        if (p[j] > 0) out[p[j] - 1] = j - 1;
    return out;
}

struct Slope {
    double b = 0.0, lo = 0.0, hi = 0.0;
};

// OLS slope of y on [1, x] with a normal interval; zero row when x is
// constant in the replication.
Slope slope_ci(const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    const int n = (int)y.size();
    const double mx = x.mean(), my = y.mean();
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; i++) {
        sxx += (x(i) - mx) * (x(i) - mx);
        sxy += (x(i) - mx) * (y(i) - my);
    }
    if (sxx <= 0.0 || n < 3) return {};
    Slope s;
    s.b = sxy / sxx;
    double rss = 0.0;
    for (int i = 0; i < n; i++) {
        double r = y(i) - my - s.b * (x(i) - mx);
        rss += r * r;
    }
    double se = std::sqrt(rss / (n - 2) / sxx);
    s.lo = s.b - kZ975 * se;
    s.hi = s.b + kZ975 * se;
    return s;
}

Eigen::VectorXd covariate_column(const Corpus& c, const std::string& name) {
    Eigen::VectorXd x(c.size());
    for (std::size_t i = 0; i < c.size(); i++) {
        auto it = c.documents[i].covariates.find(name);
        if (it == c.documents[i].covariates.end())
            throw ContractError("covariate '" + name + "' missing on document " +
                                c.documents[i].id);
        x(i) = it->second;
    }
    return x;
}

}  // namespace

std::vector<std::pair<int, double>> match_topics(const Eigen::MatrixXd& full_beta,
                                                 const Eigen::MatrixXd& sub_beta,
                                                 const std::vector<int>& tracked,
                                                 bool hungarian) {
    if (full_beta.cols() != sub_beta.cols())
        throw ContractError("topic matrices live on different vocabularies");
    const int m = (int)tracked.size(), ks = (int)sub_beta.rows();
    if (m == 0) throw ContractError("no topics to match");
    if (m > ks)
        throw ContractError("cannot biject " + std::to_string(m) + " tracked topics onto " +
                            std::to_string(ks));
    for (int t : tracked)
        if (t < 0 || t >= full_beta.rows())
            throw ContractError("tracked topic " + std::to_string(t) + " out of range");

    Eigen::MatrixXd cos(m, ks);
    for (int i = 0; i < m; i++) {
        Eigen::VectorXd f = full_beta.row(tracked[i]);
        double nf = f.norm();
        for (int j = 0; j < ks; j++) {
            Eigen::VectorXd s = sub_beta.row(j);
            double d = nf * s.norm();
            cos(i, j) = d > 0 ? f.dot(s) / d : 0.0;
        }
    }

    std::vector<std::pair<int, double>> out(m, {-1, 0.0});
    if (hungarian) {
        auto cols = assign_min_cost(-cos);
        for (int i = 0; i < m; i++) out[i] = {cols[i], cos(i, cols[i])};
        return out;
    }
    // greedy: best available pair first, ties broken by index for determinism
    struct Cand {
        double c;
        int i, j;
    };
    std::vector<Cand> cands;
    cands.reserve((std::size_t)m * ks);
    for (int i = 0; i < m; i++)
        for (int j = 0; j < ks; j++) cands.push_back({cos(i, j), i, j});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.c != b.c) return a.c > b.c;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    std::vector<char> row_done(m, 0), col_done(ks, 0);
    int placed = 0;
    for (const auto& c : cands) {
        if (placed == m) break;
        if (row_done[c.i] || col_done[c.j]) continue;
        out[c.i] = {c.j, c.c};
        row_done[c.i] = col_done[c.j] = 1;
        placed++;
    }
    return out;
}

StabilityReport run_stability(const Corpus& corpus, const StabilityConfig& cfg) {
    if (!corpus.has_dtm())
        throw ContractError("stability needs a tokenized corpus (document-term matrix missing)");
    const int d = (int)corpus.size();
    if (cfg.sample_sizes.empty()) throw ContractError("no sample sizes requested");
    for (int s : cfg.sample_sizes) {
        if (s < 2) throw ContractError("sample size must be at least 2");
        if (s > d)
            throw ContractError("sample size " + std::to_string(s) + " exceeds the corpus (" +
                                std::to_string(d) + " documents)");
    }
    if (cfg.n_reps < 1) throw ContractError("need at least one replication");
    const int k = cfg.stm.K;

    std::vector<int> tracked = cfg.tracked_topics;
    if (tracked.empty()) {
        tracked.resize(k);
        std::iota(tracked.begin(), tracked.end(), 0);
    }
    for (int t : tracked)
        if (t < 0 || t >= k)
            throw ContractError("tracked topic " + std::to_string(t) + " out of range");
    const int nt = (int)tracked.size();

    StabilityReport rep;
    rep.mode = cfg.mode;
    rep.k = k;
    rep.n_reps = cfg.n_reps;
    rep.sample_sizes = cfg.sample_sizes;
    rep.tracked_topics = tracked;
    rep.note =
        "reference values come from the converged full-data fit, itself one local mode";

    StmModel full = fit_stm(corpus, cfg.stm);
    Eigen::MatrixXd full_theta = full.theta();

    // reference top words per tracked topic, by full-fit mass
    std::vector<std::vector<int>> top_idx(nt);
    for (int t = 0; t < nt; t++) {
        std::vector<int> order(full.beta.cols());
        std::iota(order.begin(), order.end(), 0);
        int take = std::min<int>(cfg.top_words, (int)order.size());
        std::partial_sort(order.begin(), order.begin() + take, order.end(),
                          [&](int a, int b) {
                              double x = full.beta(tracked[t], a), y = full.beta(tracked[t], b);
                              if (x != y) return x > y;
                              return a < b;
                          });
        order.resize(take);
        top_idx[t] = order;
        std::vector<std::string> words;
        for (int w : order) words.push_back(full.vocabulary[w]);
        rep.top_words.push_back(std::move(words));
    }

    Eigen::VectorXd cov;
    if (!cfg.covariate.empty()) cov = covariate_column(corpus, cfg.covariate);
    for (int t = 0; t < nt; t++) {
        rep.full_theta_mean.push_back(full_theta.col(tracked[t]).mean());
        Slope s;
        if (cov.size() > 0) s = slope_ci(full_theta.col(tracked[t]), cov);
        rep.full_effect.push_back(s.b);
        rep.full_effect_lo.push_back(s.lo);
        rep.full_effect_hi.push_back(s.hi);
    }

    Eigen::MatrixXd warm_beta;
    if (cfg.mode == StartMode::warm_spectral) warm_beta = spectral_init(corpus, k);

    const std::size_t jobs = cfg.sample_sizes.size() * (std::size_t)cfg.n_reps;
    rep.records.resize(jobs * nt);

    parallel_chunks(jobs, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t job = lo; job < hi; job++) {
            const int si = (int)(job / cfg.n_reps);
            const int r = (int)(job % cfg.n_reps);
            const int s = cfg.sample_sizes[si];

            auto eng = make_engine(cfg.seed, 1 + job);
            std::vector<int> idx(d);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), eng);
            idx.resize(s);
            std::sort(idx.begin(), idx.end());
            std::vector<std::string> ids;
            ids.reserve(s);
            for (int i : idx) ids.push_back(corpus.documents[i].id);
            Corpus sub = corpus.subset(ids);

            StmConfig sc = cfg.stm;
            if (cfg.rep_max_em_iters > 0) sc.max_em_iters = cfg.rep_max_em_iters;
            sc.seed = derive_seed(cfg.seed, 0x574b1e + job);
            StmInit init;
            const StmInit* ip = nullptr;
            if (cfg.mode == StartMode::warm_spectral) {
                init.beta = warm_beta;
                ip = &init;
            } else if (cfg.mode == StartMode::warm_oracle) {
                init.beta = full.beta;
                init.gamma = full.gamma;
                init.Sigma = full.Sigma;
                Eigen::MatrixXd eta(s, k - 1);
                for (int i = 0; i < s; i++) eta.row(i) = full.eta.row(idx[i]);
                init.eta = eta;
                ip = &init;
            }
            StmModel m = fit_stm(sub, sc, ip);
            Eigen::MatrixXd theta = m.theta();
            Eigen::VectorXd sub_cov;
            if (cov.size() > 0) {
                sub_cov.resize(s);
                for (int i = 0; i < s; i++) sub_cov(i) = cov(idx[i]);
            }

            auto matches = match_topics(full.beta, m.beta, tracked, cfg.hungarian);
            for (int t = 0; t < nt; t++) {
                StabilityRecord rec;
                rec.sample_size = s;
                rec.rep = r;
                rec.tracked = tracked[t];
                rec.matched = matches[t].first;
                rec.cosine = matches[t].second;
                rec.theta_mean = theta.col(rec.matched).mean();
                double mass = 0.0;
                for (int w : top_idx[t]) mass += m.beta(rec.matched, w);
                rec.top_mass = mass;
                if (sub_cov.size() > 0) {
                    Slope sl = slope_ci(theta.col(rec.matched), sub_cov);
                    rec.effect = sl.b;
                    rec.effect_lo = sl.lo;
                    rec.effect_hi = sl.hi;
                }
                rep.records[job * nt + t] = rec;
            }
        }
    });
    return rep;
}

std::string stability_records_csv(const StabilityReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "# reference: full-data fit (one local mode); mode="
        << (report.mode == StartMode::cold_spectral    ? "cold_spectral"
            : report.mode == StartMode::warm_spectral ? "warm_spectral"
                                                       : "warm_oracle")
        << "\n";
    out << "sample_size,rep,tracked,matched,cosine,theta_mean,top_mass,effect,effect_lo,"
           "effect_hi\n";
    for (const auto& r : report.records) {
        out << r.sample_size << ',' << r.rep << ',' << r.tracked << ',' << r.matched << ','
            << r.cosine << ',' << r.theta_mean << ',' << r.top_mass << ',' << r.effect << ','
            << r.effect_lo << ',' << r.effect_hi << "\n";
    }
    return out.str();
}

}  // namespace textcausal
