#include <algorithm>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "textcausal/errors.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/spectral.hpp"
#include "textcausal/stm.hpp"
#include "textcausal/synth.hpp"

using namespace textcausal;

TEST_SUITE_BEGIN("stm");

namespace {

void check_simplex(const Eigen::MatrixXd& theta, double tol = 1e-8) {
    for (Eigen::Index i = 0; i < theta.rows(); i++) {
        double s = 0;
        for (Eigen::Index k = 0; k < theta.cols(); k++) {
            CHECK(theta(i, k) >= 0.0);
            s += theta(i, k);
        }
        CHECK(std::abs(s - 1.0) < tol);
    }
}

void check_monotone(const std::vector<double>& trace) {
    for (std::size_t t = 1; t < trace.size(); t++) {
        double slack = 1e-6 * std::max(1.0, std::abs(trace[t - 1]));
        CHECK(trace[t] >= trace[t - 1] - slack);
    }
}

// best-permutation mean cosine between topic rows (K small)
double best_cosine(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth, double* worst = nullptr) {
    const int K = (int)truth.rows();
    std::vector<int> perm(K);
    for (int i = 0; i < K; i++) perm[i] = i;
    double best = -1, best_worst = -1;
    do {
        double sum = 0, mn = 2;
        for (int k = 0; k < K; k++) {
            double c = est.row(perm[(std::size_t)k]).dot(truth.row(k)) /
                       (est.row(perm[(std::size_t)k]).norm() * truth.row(k).norm());
            sum += c;
            mn = std::min(mn, c);
        }
        if (sum > best) {
            best = sum;
            best_worst = mn;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (worst) *worst = best_worst;
    return best / K;
}

Corpus block_corpus() {
    // 3 topics on disjoint 4-word blocks, docs purely single-topic
    Corpus c;
    c.vocabulary = {"w00", "w01", "w02", "w03", "w04", "w05",
                    "w06", "w07", "w08", "w09", "w10", "w11"};
    auto eng = make_engine(5);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int topic = 0; topic < 3; topic++) {
        for (int d = 0; d < 50; d++) {
            Document doc;
            doc.id = "t" + std::to_string(topic) + "_" + std::to_string(d);
            c.documents.push_back(doc);
            std::map<int, int> counts;
            for (int t = 0; t < 20; t++) counts[topic * 4 + pick(eng)]++;
            c.rows.emplace_back(counts.begin(), counts.end());
        }
    }
    c.tok_config = TokenizerConfig{};
    return c;
}

}  // namespace

TEST_CASE("spectral init is deterministic and recovers disjoint blocks") {
    Corpus c = block_corpus();
    Eigen::MatrixXd b1 = spectral_init(c, 3);
    Eigen::MatrixXd b2 = spectral_init(c, 3);
    CHECK((b1 - b2).cwiseAbs().maxCoeff() == 0.0);  // bit-exact

    for (int k = 0; k < 3; k++) {
        CHECK(b1.row(k).sum() == doctest::Approx(1.0).epsilon(1e-8));
        // mass concentrated on one 4-word block
        double best_block = 0;
        for (int blk = 0; blk < 3; blk++) {
            double m = b1.row(k).segment(blk * 4, 4).sum();
            best_block = std::max(best_block, m);
        }
        CHECK(best_block >= 0.95);
    }
}

TEST_CASE("spectral init with K equal to V degenerates to point masses") {
    Corpus c;
    c.vocabulary = {"a", "b", "c"};
    for (int v = 0; v < 3; v++) {
        for (int r = 0; r < 5; r++) {
            Document d;
            d.id = "d" + std::to_string(v) + "_" + std::to_string(r);
            c.documents.push_back(d);
            c.rows.push_back({{v, 20}});
        }
    }
    c.tok_config = TokenizerConfig{};
    Eigen::MatrixXd b = spectral_init(c, 3);
    for (int k = 0; k < 3; k++) CHECK(b.row(k).maxCoeff() >= 0.95);
    CHECK_THROWS_AS(spectral_init(c, 4), ContractError);  // K > V
}

TEST_CASE("analytic gradient matches central differences") {
    StmSynthSpec spec;
    spec.seed = 31;
    StmSynth s = sample_stm_corpus(spec);
    StmConfig cfg;
    cfg.K = 3;
    cfg.prevalence = {"group"};
    cfg.max_em_iters = 8;
    StmModel m = fit_stm(s.corpus, cfg);

    auto eng = make_engine(77);
    std::uniform_int_distribution<int> pick(0, (int)s.corpus.size() - 1);
    std::normal_distribution<double> jitter(0.0, 0.5);
    for (int rep = 0; rep < 10; rep++) {
        int i = pick(eng);
        Eigen::VectorXd mu = m.mu.row(i).transpose();
        Eigen::VectorXd eta = m.eta.row(i).transpose();
        for (int k = 0; k < eta.size(); k++) eta[k] += jitter(eng);  // off the mode

        auto [f0, grad] = doc_objective(m.beta, s.corpus.rows[(std::size_t)i], mu, m.Sigma, eta);

        // independent objective evaluation for the differencing
        auto value_at = [&](const Eigen::VectorXd& e) {
            const int K = m.config.K;
            Eigen::VectorXd full(K);
            full.head(K - 1) = e;
            full[K - 1] = 0;
            Eigen::VectorXd th = (full.array() - full.maxCoeff()).exp();
            th /= th.sum();
            Eigen::LLT<Eigen::MatrixXd> llt(m.Sigma);
            double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            Eigen::VectorXd d = e - mu;
            double v = -0.5 * (K - 1) * std::log(2 * M_PI) - 0.5 * logdet -
                       0.5 * d.dot(llt.solve(d));
            for (auto& [w, cnt] : s.corpus.rows[(std::size_t)i])
                v += cnt * std::log(th.dot(m.beta.col(w)));
            return v;
        };
        CHECK(value_at(eta) == doctest::Approx(f0).epsilon(1e-9));

        const double h = 1e-5;
        for (int k = 0; k < eta.size(); k++) {
            Eigen::VectorXd ep = eta, em = eta;
            ep[k] += h;
            em[k] -= h;
            double fd = (value_at(ep) - value_at(em)) / (2 * h);
            double rel = std::abs(fd - grad[k]) / std::max(1.0, std::abs(fd));
            CHECK(rel < 1e-3);
        }
    }

    // at the returned modes the gradient has (nearly) vanished
    for (int i = 0; i < 10; i++) {
        auto [f, g] = doc_objective(m.beta, s.corpus.rows[(std::size_t)i],
                                    m.mu.row(i).transpose(), m.Sigma, m.eta.row(i).transpose());
        CHECK(g.cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("fit recovers synthetic topics and keeps the bound monotone") {
    StmSynthSpec spec;
    spec.seed = 11;
    StmSynth s = sample_stm_corpus(spec);
    StmConfig cfg;
    cfg.K = 3;
    cfg.prevalence = {"group"};
    StmModel m = fit_stm(s.corpus, cfg);

    check_monotone(m.bound_trace);
    check_simplex(m.theta());
    for (int k = 0; k < 3; k++) CHECK(m.beta.row(k).sum() == doctest::Approx(1.0).epsilon(1e-8));

    double worst = 0;
    best_cosine(m.beta, s.beta, &worst);
    CHECK(worst >= 0.90);
}

TEST_CASE("identical documents get identical theta") {
    Corpus c;
    std::vector<std::pair<int, int>> row = {{0, 4}, {2, 3}, {5, 6}};
    for (int i = 0; i < 25; i++) {
        Document d;
        d.id = "dup" + std::to_string(i);
        c.documents.push_back(d);
        c.rows.push_back(row);
    }
    c.vocabulary = {"a", "b", "c", "d", "e", "f"};
    c.tok_config = TokenizerConfig{};

    // spectral needs variation, so hand the fit a fixed start instead
    auto eng = make_engine(9);
    std::gamma_distribution<double> gam(1.0, 1.0);
    Eigen::MatrixXd beta0(2, 6);
    for (int k = 0; k < 2; k++) {
        for (int v = 0; v < 6; v++) beta0(k, v) = gam(eng);
        beta0.row(k) /= beta0.row(k).sum();
    }
    StmInit init;
    init.beta = beta0;
    StmConfig cfg;
    cfg.K = 2;
    StmModel m = fit_stm(c, cfg, &init);
    Eigen::MatrixXd th = m.theta();
    for (Eigen::Index i = 1; i < th.rows(); i++)
        CHECK((th.row(i) - th.row(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rank-deficient design is rejected") {
    StmSynthSpec spec;
    spec.D = 60;
    spec.seed = 3;
    StmSynth s = sample_stm_corpus(spec);
    for (auto& d : s.corpus.documents) d.covariates["group_copy"] = d.covariates["group"];
    StmConfig cfg;
    cfg.K = 3;
    cfg.prevalence = {"group", "group_copy"};
    CHECK_THROWS_AS(fit_stm(s.corpus, cfg), ContractError);
}

TEST_CASE("applying the frozen model: prior modes and purity") {
    StmSynthSpec spec;
    spec.seed = 21;
    StmSynth s = sample_stm_corpus(spec);
    StmConfig cfg;
    cfg.K = 3;
    cfg.prevalence = {"group"};
    StmModel m = fit_stm(s.corpus, cfg);
    Eigen::MatrixXd train_theta = m.theta();

    SUBCASE("empty document under the flat prior is uniform") {
        ApplyResult r = fit_new_counts(m, {{}}, {"empty"}, PriorMode::none);
        for (int k = 0; k < 3; k++) CHECK(r.theta(0, k) == doctest::Approx(1.0 / 3).epsilon(1e-8));
    }

    SUBCASE("refitting training documents lands back on the training theta") {
        int tested = 0;
        for (int i = 0; i < (int)s.corpus.size() && tested < 10; i++) {
            if (s.corpus.row_total((std::size_t)i) < 20) continue;
            const Document& doc = s.corpus.documents[(std::size_t)i];
            // same prior the fit used, so the mode must reproduce
            Eigen::MatrixXd X(1, 2);
            X(0, 0) = 1.0;
            X(0, 1) = doc.covariates.at("group");
            ApplyResult r = fit_new_counts(m, {s.corpus.rows[(std::size_t)i]}, {doc.id},
                                           PriorMode::covariate, &X);
            double l1 = (r.theta.row(0) - train_theta.row(i)).cwiseAbs().sum();
            CHECK(l1 < 1e-6);

            // the flat prior pulls differently but the likelihood still dominates
            ApplyResult rf = fit_new_counts(m, {s.corpus.rows[(std::size_t)i]}, {doc.id},
                                            PriorMode::none);
            CHECK((rf.theta.row(0) - train_theta.row(i)).cwiseAbs().sum() < 0.5);
            tested++;
        }
        CHECK(tested == 10);
    }

    SUBCASE("averaged prior matches an independent recomputation") {
        const Eigen::Index D = m.eta.rows();
        Eigen::RowVectorXd mu_bar = Eigen::RowVectorXd::Zero(2);
        for (Eigen::Index i = 0; i < D; i++) mu_bar += m.mu.row(i);
        mu_bar /= (double)D;
        CHECK((m.mu_bar - mu_bar).cwiseAbs().maxCoeff() < 1e-12);

        Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(2, 2), pooled = Eigen::MatrixXd::Zero(2, 2);
        for (Eigen::Index i = 0; i < D; i++) {
            Eigen::RowVectorXd a = m.eta.row(i) - m.mu.row(i);
            Eigen::RowVectorXd b = m.eta.row(i) - mu_bar;
            fitted += a.transpose() * a;
            pooled += b.transpose() * b;
        }
        Eigen::MatrixXd want = m.Sigma - fitted / (double)D + pooled / (double)D;
        CHECK((averaged_prior_sigma(m, false) - want).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((m.sigma_tilde - want).cwiseAbs().maxCoeff() < 1e-10);

        // the literal-sums convention is a different (still SPD) matrix
        Eigen::MatrixXd lit = averaged_prior_sigma(m, true);
        Eigen::LLT<Eigen::MatrixXd> llt(lit);
        CHECK(llt.info() == Eigen::Success);
        CHECK((lit - want).cwiseAbs().maxCoeff() > 1e-8);
    }

    SUBCASE("average mode yields simplex theta and is deterministic") {
        std::vector<std::vector<std::pair<int, int>>> rows(s.corpus.rows.begin(),
                                                           s.corpus.rows.begin() + 40);
        std::vector<std::string> ids;
        for (int i = 0; i < 40; i++) ids.push_back(s.corpus.documents[(std::size_t)i].id);
        ApplyResult r1 = fit_new_counts(m, rows, ids, PriorMode::average);
        ApplyResult r2 = fit_new_counts(m, rows, ids, PriorMode::average);
        check_simplex(r1.theta);
        CHECK((r1.theta - r2.theta).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("covariate prior refuses a treatment-bearing design") {
    StmSynthSpec spec;
    spec.seed = 41;
    spec.with_treatment = true;
    spec.treatment_effect = 0.8;
    StmSynth s = sample_stm_corpus(spec);
    StmConfig cfg;
    cfg.K = 3;
    cfg.prevalence = {"group", "treatment"};
    StmModel m = fit_stm(s.corpus, cfg);
    CHECK_THROWS_AS(covariate_design_for(m, s.corpus), ContractError);
    CHECK_THROWS_AS(fit_new_counts(m, {s.corpus.rows[0]}, {"x"}, PriorMode::covariate),
                    ContractError);

    // without the treatment in the design, covariate mode works
    StmConfig cfg2;
    cfg2.K = 3;
    cfg2.prevalence = {"group"};
    StmModel m2 = fit_stm(s.corpus, cfg2);
    Eigen::MatrixXd X = covariate_design_for(m2, s.corpus);
    ApplyResult r = fit_new_counts(m2, s.corpus.rows, {}, PriorMode::covariate, &X);
    check_simplex(r.theta);
}

TEST_CASE("raw-text application: bag of words, OOV reporting, round trip") {
    Corpus c;
    const char* texts[] = {
        "border agents patrol the border fence daily",
        "the fence along the border needs more agents",
        "taxes fund the public schools and roads",
        "public roads and schools need tax funding",
        "judges hear the asylum cases in court",
        "the court docket is full of asylum cases",
        "agents inspect cargo at the border crossing",
        "school funding depends on local taxes",
    };
    for (int i = 0; i < 8; i++) {
        Document d;
        d.id = "r" + std::to_string(i);
        d.text = texts[i];
        c.documents.push_back(std::move(d));
    }
    TokenizerConfig tok;
    tok.min_doc_count = 1;
    Corpus t = tokenize(std::move(c), tok);
    StmConfig cfg;
    cfg.K = 2;
    cfg.max_em_iters = 50;
    StmModel m = fit_stm(t, cfg);

    Corpus probe;
    probe.documents.push_back({"p1", "border agents fence patrol", {}, {}, {}});
    probe.documents.push_back({"p2", "patrol fence agents border", {}, {}, {}});
    probe.documents.push_back({"p3", "border unicorns", {}, {}, {}});
    ApplyResult r = fit_new_documents(m, probe, PriorMode::average);
    CHECK((r.theta.row(0) - r.theta.row(1)).cwiseAbs().maxCoeff() == 0.0);  // order-blind
    CHECK(r.oov_dropped[2] == 1);
    CHECK(r.oov_rate[2] == doctest::Approx(0.5));
    ApplyResult r2 = fit_new_documents(m, probe, PriorMode::average);
    CHECK((r.theta - r2.theta).cwiseAbs().maxCoeff() == 0.0);  // pure function

    save_stm("tc_test_stm.json", m);
    StmModel back = load_stm("tc_test_stm.json");
    CHECK((back.beta - m.beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.Sigma - m.Sigma).cwiseAbs().maxCoeff() == 0.0);
    ApplyResult r3 = fit_new_documents(back, probe, PriorMode::average);
    CHECK((r.theta - r3.theta).cwiseAbs().maxCoeff() == 0.0);
    std::remove("tc_test_stm.json");
}

TEST_CASE("top words and representative documents") {
    StmSynthSpec spec;
    spec.seed = 55;
    spec.D = 200;
    StmSynth s = sample_stm_corpus(spec);
    StmConfig cfg;
    cfg.K = 3;
    cfg.max_em_iters = 30;
    StmModel m = fit_stm(s.corpus, cfg);

    auto tw = top_words(m, 0, 5);
    REQUIRE(tw.size() == 5);
    for (std::size_t i = 1; i < tw.size(); i++) CHECK(tw[i - 1].second >= tw[i].second);
    CHECK_THROWS_AS(top_words(m, 3, 5), ContractError);
    CHECK_THROWS_AS(top_words(m, -1, 5), ContractError);

    auto rd = representative_docs(m, 1, 4);
    REQUIRE(rd.size() == 4);
    for (std::size_t i = 1; i < rd.size(); i++) CHECK(rd[i - 1].second >= rd[i].second);
    auto all = representative_docs(m, 1, 10000);  // n > D saturates
    CHECK(all.size() == s.corpus.size());

    // tie-break: equal probabilities order lexicographically
    StmModel tiny;
    tiny.config.K = 2;
    tiny.vocabulary = {"pear", "apple", "plum"};
    tiny.doc_ids = {};
    tiny.beta.resize(2, 3);
    tiny.beta << 0.4, 0.4, 0.2, 0.1, 0.1, 0.8;
    auto tie = top_words(tiny, 0, 2);
    CHECK(tie[0].first == "apple");
    CHECK(tie[1].first == "pear");
}

TEST_SUITE_END();
