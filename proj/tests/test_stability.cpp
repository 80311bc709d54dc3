#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "textcausal/errors.hpp"
#include "textcausal/stability.hpp"
#include "textcausal/synth.hpp"

using namespace textcausal;

TEST_SUITE_BEGIN("stability");

namespace {

Eigen::MatrixXd rows_from(std::initializer_list<std::vector<double>> rs) {
    int n = (int)rs.size(), d = (int)rs.begin()->size();
    Eigen::MatrixXd m(n, d);
    int i = 0;
    for (const auto& r : rs) {
        for (int j = 0; j < d; j++) m(i, j) = r[j];
        i++;
    }
    return m;
}

const StmSynth& small_synth() {
    static StmSynth s = [] {
        StmSynthSpec spec;
        spec.K = 3;
        spec.V = 60;
        spec.D = 300;
        spec.doc_len_mean = 45.0;
        spec.seed = 5;
        return sample_stm_corpus(spec);
    }();
    return s;
}

}  // namespace

TEST_CASE("topic matching is a bijection ranked by cosine") {
    SUBCASE("permutation recovered exactly") {
        Eigen::MatrixXd full = rows_from({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
        Eigen::MatrixXd sub = rows_from({{0, 0, 1, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}});
        auto m = match_topics(full, sub, {0, 1, 2}, false);
        CHECK(m[0].first == 1);
        CHECK(m[1].first == 2);
        CHECK(m[2].first == 0);
        for (auto& [j, c] : m) CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("greedy resolves a contested column by similarity") {
        // both tracked rows prefer column 0; the closer one keeps it
        Eigen::MatrixXd sub = rows_from({{1, 0, 0}, {0, 1, 0}});
        Eigen::MatrixXd full = rows_from({{1, 0, 0}, {1, 0.2, 0}});
        auto m = match_topics(full, sub, {0, 1}, false);
        CHECK(m[0].first == 0);
        CHECK(m[1].first == 1);
        CHECK(m[1].second == doctest::Approx(0.2 / std::sqrt(1.04)).epsilon(1e-12));
        std::set<int> cols{m[0].first, m[1].first};
        CHECK(cols.size() == 2);  // bijection even under conflict
    }
    SUBCASE("optimal assignment beats greedy where greedy is myopic") {
        Eigen::MatrixXd sub = rows_from({{1, 0, 0}, {0, 1, 0}});
        // cosines: row0 -> (0.7, 0.6), row1 -> (0.65, 0.1)
        Eigen::MatrixXd full =
            rows_from({{0.7, 0.6, std::sqrt(1 - 0.85)}, {0.65, 0.1, std::sqrt(1 - 0.4325)}});
        auto g = match_topics(full, sub, {0, 1}, false);
        CHECK(g[0].first == 0);  // grabs 0.7 first, leaving 0.1
        CHECK(g[1].first == 1);
        auto h = match_topics(full, sub, {0, 1}, true);
        CHECK(h[0].first == 1);  // 0.6 + 0.65 > 0.7 + 0.1
        CHECK(h[1].first == 0);
        double greedy_total = g[0].second + g[1].second;
        double optimal_total = h[0].second + h[1].second;
        CHECK(optimal_total > greedy_total);
    }
    SUBCASE("more tracked topics than candidates is refused") {
        Eigen::MatrixXd sub = rows_from({{1, 0}});
        Eigen::MatrixXd full = rows_from({{1, 0}, {0, 1}});
        CHECK_THROWS_AS(match_topics(full, sub, {0, 1}, false), ContractError);
    }
}

TEST_CASE("oversized samples are refused up front") {
    const auto& s = small_synth();
    StabilityConfig cfg;
    cfg.stm.K = 3;
    cfg.sample_sizes = {400};
    cfg.n_reps = 1;
    try {
        run_stability(s.corpus, cfg);
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("exceeds") != std::string::npos);
    }
}

TEST_CASE("warm oracle refit of the full corpus reproduces the reference") {
    const auto& s = small_synth();
    StabilityConfig cfg;
    cfg.stm.K = 3;
    cfg.stm.prevalence = {"group"};
    cfg.stm.max_em_iters = 150;
    cfg.stm.seed = 9;
    cfg.sample_sizes = {(int)s.corpus.size()};
    cfg.n_reps = 1;
    cfg.mode = StartMode::warm_oracle;
    // one pass re-derives the modes of the stored parameters and stops, so
    // the refit sits exactly on the reference fixed point
    cfg.rep_max_em_iters = 1;
    cfg.covariate = "group";
    cfg.seed = 3;
    auto rep = run_stability(s.corpus, cfg);

    REQUIRE(rep.records.size() == 3);
    for (int t = 0; t < 3; t++) {
        const auto& r = rep.records[t];
        CHECK(r.sample_size == (int)s.corpus.size());
        CHECK(r.matched == r.tracked);  // identity match at the fixed point
        CHECK(r.cosine > 0.9999);
        CHECK(std::abs(r.theta_mean - rep.full_theta_mean[t]) < 1e-6);
        CHECK(std::abs(r.effect - rep.full_effect[t]) < 1e-4);
    }
}

TEST_CASE("replication bookkeeping and determinism") {
    const auto& s = small_synth();
    StabilityConfig cfg;
    cfg.stm.K = 3;
    cfg.stm.max_em_iters = 40;
    cfg.stm.seed = 2;
    cfg.sample_sizes = {150, 100};
    cfg.n_reps = 3;
    cfg.mode = StartMode::warm_spectral;
    cfg.covariate = "group";
    cfg.seed = 17;
    auto rep = run_stability(s.corpus, cfg);

    CHECK(rep.n_reps == 3);
    CHECK(rep.mode == StartMode::warm_spectral);
    REQUIRE(rep.records.size() == 2 * 3 * 3);  // sizes x reps x topics
    for (const auto& r : rep.records) {
        CHECK(r.theta_mean >= 0.0);
        CHECK(r.theta_mean <= 1.0);
        CHECK(r.top_mass >= 0.0);
        CHECK(r.top_mass <= 1.0);
        CHECK(r.cosine >= -1.0 - 1e-12);
        CHECK(r.cosine <= 1.0 + 1e-12);
        CHECK(std::isfinite(r.effect));
        CHECK(r.effect_lo <= r.effect);
        CHECK(r.effect <= r.effect_hi);
    }
    // matched topics form a bijection within every replication
    for (int block = 0; block < 6; block++) {
        std::set<int> cols;
        for (int t = 0; t < 3; t++) cols.insert(rep.records[block * 3 + t].matched);
        CHECK(cols.size() == 3);
    }

    auto rep2 = run_stability(s.corpus, cfg);
    REQUIRE(rep2.records.size() == rep.records.size());
    for (std::size_t i = 0; i < rep.records.size(); i++) {
        CHECK(rep.records[i].theta_mean == rep2.records[i].theta_mean);
        CHECK(rep.records[i].matched == rep2.records[i].matched);
        CHECK(rep.records[i].effect == rep2.records[i].effect);
    }

    // cold start on the same draw differs somewhere (different local modes)
    StabilityConfig cold = cfg;
    cold.mode = StartMode::cold_spectral;
    auto rep3 = run_stability(s.corpus, cold);
    bool any_diff = false;
    for (std::size_t i = 0; i < rep.records.size(); i++)
        any_diff = any_diff || rep.records[i].theta_mean != rep3.records[i].theta_mean;
    CHECK(any_diff);
}

TEST_CASE("records serialize to csv with the reference header") {
    const auto& s = small_synth();
    StabilityConfig cfg;
    cfg.stm.K = 3;
    cfg.stm.max_em_iters = 25;
    cfg.sample_sizes = {80};
    cfg.n_reps = 2;
    cfg.covariate = "group";
    cfg.seed = 8;
    auto rep = run_stability(s.corpus, cfg);
    std::string csv = stability_records_csv(rep);
    CHECK(csv.find("# reference: full-data fit") != std::string::npos);
    CHECK(csv.find("sample_size,rep,tracked,matched,cosine,theta_mean,top_mass,effect,"
                   "effect_lo,effect_hi") != std::string::npos);
    // one line per record plus comment + header
    int lines = 0;
    for (char c : csv)
        if (c == '\n') lines++;
    CHECK(lines == 2 + (int)rep.records.size());
}

TEST_SUITE_END();
