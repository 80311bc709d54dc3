#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "textcausal/corpus.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/sibp.hpp"
#include "textcausal/synth.hpp"

using namespace textcausal;

TEST_SUITE_BEGIN("sibp");

namespace {

struct Matching {
    int col[2] = {-1, -1};
    int orient[2] = {1, 1};  // +1 keeps the feature, -1 reads it inverted
    double acc[2] = {0, 0};
};

// best assignment of two distinct model features (with orientation) to the
// two planted columns, by exhaustive search
Matching match_planted(const Eigen::MatrixXd& nu, const Eigen::MatrixXd& z, double thresh) {
    const int K = (int)nu.cols();
    const int D = (int)nu.rows();
    auto accuracy = [&](int mcol, int pcol, int orient) {
        int hits = 0;
        for (int i = 0; i < D; i++) {
            int zi = nu(i, mcol) >= thresh ? 1 : 0;
            if (orient < 0) zi = 1 - zi;
            if (zi == (int)z(i, pcol)) hits++;
        }
        return (double)hits / D;
    };
    Matching best;
    double best_total = -1;
    for (int k1 = 0; k1 < K; k1++)
        for (int k2 = 0; k2 < K; k2++) {
            if (k1 == k2) continue;
            for (int o1 : {1, -1})
                for (int o2 : {1, -1}) {
                    double a1 = accuracy(k1, 0, o1), a2 = accuracy(k2, 1, o2);
                    if (a1 + a2 > best_total) {
                        best_total = a1 + a2;
                        best = {{k1, k2}, {o1, o2}, {a1, a2}};
                    }
                }
        }
    return best;
}

struct PlantedFit {
    SibpSynth data;
    StandardizeResult std_x;
    SibpModel model;
};

PlantedFit fit_planted(std::uint64_t data_seed = 42, std::uint64_t fit_seed = 1) {
    PlantedFit out;
    out.data = sample_sibp_data(500, 25, data_seed, 0.5, 0.1);
    out.std_x = standardize(out.data.X);
    SibpConfig cfg;
    cfg.alpha = 3.0;
    cfg.k_max = 4;
    cfg.seed = fit_seed;
    out.model = fit_sibp(out.std_x.x, out.data.Y, cfg);
    return out;
}

}  // namespace

TEST_CASE("stick breaking products") {
    Eigen::VectorXd v(2);
    v << 0.5, 0.5;
    Eigen::VectorXd pi = stick_breaking(v);
    CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(0.25).epsilon(1e-12));

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    Eigen::VectorXd pi1 = stick_breaking(ones);
    for (int k = 0; k < 3; k++) CHECK(pi1[k] == 1.0);

    Eigen::VectorXd bad(1);
    bad << 0.0;
    CHECK_THROWS_AS(stick_breaking(bad), ContractError);
}

TEST_CASE("stick breaking Monte Carlo matches the closed-form mean") {
    // under v_j ~ Beta(alpha, 1), E[pi_k] = (alpha/(alpha+1))^(k+1) for 0-based k
    const double alpha = 2.0;
    const int K = 4, n = 100000;
    auto eng = make_engine(123);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<std::vector<double>> draws((std::size_t)K);
    Eigen::VectorXd v(K);
    for (int r = 0; r < n; r++) {
        for (int j = 0; j < K; j++) v[j] = std::pow(unif(eng), 1.0 / alpha);  // Beta(a,1)
        Eigen::VectorXd pi = stick_breaking(v);
        for (int k = 0; k < K; k++) draws[(std::size_t)k].push_back(pi[k]);
    }
    for (int k = 0; k < K; k++) {
        double want = std::pow(alpha / (alpha + 1.0), k + 1);
        double m = 0, s2 = 0;
        for (double d : draws[(std::size_t)k]) m += d;
        m /= n;
        for (double d : draws[(std::size_t)k]) s2 += (d - m) * (d - m);
        s2 /= (n - 1);
        double se = std::sqrt(s2 / n);
        CHECK(std::abs(m - want) <= 3.0 * se);
    }
}

TEST_CASE("planted two-feature benchmark") {
    PlantedFit pf = fit_planted();
    const SibpModel& m = pf.model;

    // bound climbs, sticks decay, probabilities stay probabilities
    REQUIRE(m.bound_trace.size() >= 2);
    for (std::size_t i = 1; i < m.bound_trace.size(); i++)
        CHECK(m.bound_trace[i] >= m.bound_trace[i - 1] - 1e-6 * std::abs(m.bound_trace[i - 1]));
    for (int k = 1; k < m.K(); k++) CHECK(m.pi[k] <= m.pi[k - 1] + 1e-12);
    for (int i = 0; i < (int)m.nu.rows(); i++)
        for (int k = 0; k < m.K(); k++) {
            CHECK(m.nu(i, k) >= 0.0);
            CHECK(m.nu(i, k) <= 1.0);
        }

    Matching match = match_planted(m.nu, pf.data.Z, 0.5);
    CHECK(match.acc[0] >= 0.9);
    CHECK(match.acc[1] >= 0.9);
    // effect directions, read through the matching orientation
    CHECK(match.orient[0] * m.beta_y[match.col[0]] > 0.0);
    CHECK(match.orient[1] * m.beta_y[match.col[1]] < 0.0);
}

TEST_CASE("constant outcome shrinks the coefficients to zero") {
    SibpSynth s = sample_sibp_data(500, 25, 42, 0.5, 0.1);
    StandardizeResult sx = standardize(s.X);
    SibpConfig cfg;
    cfg.alpha = 3.0;
    cfg.k_max = 4;
    cfg.seed = 1;
    SibpModel m = fit_sibp(sx.x, Eigen::VectorXd::Zero(500), cfg);
    for (int k = 0; k < m.K(); k++) CHECK(std::abs(m.beta_y[k]) < 0.1);
}

TEST_CASE("same seed, same model") {
    SibpSynth s = sample_sibp_data(200, 25, 7, 0.5, 0.1);
    StandardizeResult sx = standardize(s.X);
    SibpConfig cfg;
    cfg.k_max = 3;
    cfg.seed = 99;
    cfg.restarts = 3;
    cfg.max_iters = 60;
    SibpModel m1 = fit_sibp(sx.x, s.Y, cfg);
    SibpModel m2 = fit_sibp(sx.x, s.Y, cfg);
    CHECK((m1.nu - m2.nu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m1.A - m2.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m1.bound_trace.back() == m2.bound_trace.back());
}

TEST_CASE("truncation beyond the data is rejected") {
    SibpSynth s = sample_sibp_data(30, 25, 5, 0.5, 0.1);
    StandardizeResult sx = standardize(s.X);
    SibpConfig cfg;
    cfg.k_max = 26;  // more features than words
    CHECK_THROWS_AS(fit_sibp(sx.x, s.Y, cfg), ContractError);
}

TEST_CASE("treatment inference on held-out text") {
    PlantedFit pf = fit_planted();
    const SibpModel& m = pf.model;
    Matching match = match_planted(m.nu, pf.data.Z, 0.5);

    SUBCASE("a clean feature signature lights up exactly its feature") {
        // raw doc equal to planted feature 0's mean signature, standardized like training
        Eigen::MatrixXd raw = pf.data.A.row(0);
        Eigen::MatrixXd x = apply_standardization(raw, pf.std_x.mean, pf.std_x.scale);
        auto tv = infer_treatments(m, x);
        REQUIRE(tv.size() == 1);
        double p0 = tv[0].probs[match.col[0]];
        double p1 = tv[0].probs[match.col[1]];
        if (match.orient[0] < 0) p0 = 1 - p0;
        if (match.orient[1] < 0) p1 = 1 - p1;
        CHECK(p0 > 0.9);
        CHECK(p1 < 0.1);
        CHECK(tv[0].z[match.col[0]] == (match.orient[0] > 0 ? 1 : 0));
    }

    SUBCASE("a fully average document gets the no-evidence baseline") {
        Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 25);
        auto tv = infer_treatments(m, zero);
        Eigen::VectorXd base = prior_feature_probs(m);
        for (int k = 0; k < m.K(); k++)
            CHECK(tv[0].probs[k] == doctest::Approx(base[k]).epsilon(1e-12));
    }

    SUBCASE("test outcomes cannot move the inference") {
        Eigen::MatrixXd x = pf.std_x.x.topRows(40);
        std::vector<double> fake_y(40);
        for (int i = 0; i < 40; i++) fake_y[(std::size_t)i] = i * 0.37;
        auto before = infer_treatments(m, x);
        std::shuffle(fake_y.begin(), fake_y.end(), make_engine(4));  // outcomes permuted
        auto after = infer_treatments(m, x);
        REQUIRE(before.size() == after.size());
        for (std::size_t i = 0; i < before.size(); i++) {
            CHECK((before[i].probs - after[i].probs).cwiseAbs().maxCoeff() == 0.0);
            CHECK(before[i].z == after[i].z);
        }
    }

    SUBCASE("column misalignment is rejected") {
        Eigen::MatrixXd wide = Eigen::MatrixXd::Zero(2, 26);
        CHECK_THROWS_AS(infer_treatments(m, wide), ContractError);
    }
}

TEST_CASE("model fit score separates signal from noise") {
    PlantedFit pf = fit_planted();
    SibpSynth held = sample_sibp_data(300, 25, 1234, 0.5, 0.1);
    Eigen::MatrixXd hx = apply_standardization(held.X, pf.std_x.mean, pf.std_x.scale);

    double s_fit = model_fit_score(pf.model, hx, held.Y);
    CHECK(model_fit_score(pf.model, hx, held.Y) == s_fit);  // deterministic

    // same posterior but loadings replaced with noise: features no longer track text
    SibpModel junk = pf.model;
    auto eng = make_engine(555);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < junk.A.rows(); k++)
        for (int v = 0; v < junk.A.cols(); v++) junk.A(k, v) = gauss(eng);
    CHECK(s_fit > model_fit_score(junk, hx, held.Y));

    // on training data the aligned outcome beats almost every permutation
    double s_train = model_fit_score(pf.model, pf.std_x.x, pf.data.Y);
    Eigen::VectorXd y = pf.data.Y;
    std::vector<int> idx(y.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto peng = make_engine(31);
    int beaten = 0;
    for (int r = 0; r < 100; r++) {
        std::shuffle(idx.begin(), idx.end(), peng);
        Eigen::VectorXd yp(y.size());
        for (int i = 0; i < (int)idx.size(); i++) yp[i] = y[idx[(std::size_t)i]];
        if (s_train >= model_fit_score(pf.model, pf.std_x.x, yp)) beaten++;
    }
    CHECK(beaten >= 95);
}

TEST_CASE("model round-trips through disk") {
    PlantedFit pf = fit_planted(8, 2);
    pf.model.feat_mean = pf.std_x.mean;
    pf.model.feat_scale = pf.std_x.scale;
    const std::string path = "tc_test_sibp_model.json";
    save_sibp(pf.model, path);
    SibpModel r = load_sibp(path);
    std::remove(path.c_str());

    CHECK((r.nu - pf.model.nu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.A - pf.model.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.beta_y - pf.model.beta_y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.pi - pf.model.pi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.feat_mean - pf.model.feat_mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.tau_shape == pf.model.tau_shape);
    CHECK(r.tau_rate == pf.model.tau_rate);
    CHECK(r.config.alpha == pf.model.config.alpha);
    CHECK(r.config.k_max == pf.model.config.k_max);

    // the reloaded model answers inference queries identically
    Eigen::MatrixXd x = pf.std_x.x.topRows(5);
    auto a = infer_treatments(pf.model, x);
    auto b = infer_treatments(r, x);
    for (std::size_t i = 0; i < a.size(); i++)
        CHECK((a[i].probs - b[i].probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
