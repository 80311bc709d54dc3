#include <Eigen/Dense>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "json.hpp"
#include "textcausal/aisv.hpp"
#include "textcausal/causal.hpp"
#include "textcausal/corpus.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/overfit.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/sibp.hpp"
#include "textcausal/split.hpp"
#include "textcausal/stability.hpp"
#include "textcausal/stm.hpp"
#include "textcausal/synth.hpp"

using namespace textcausal;
using cli::LabelRegistry;
using cli::RunDir;
using nlohmann::json;

namespace {

template <class F>
void guarded(RunDir& rd, F&& body) {
    try {
        body();
        rd.finish();
    } catch (...) {
        rd.discard();
        throw;
    }
}

TextRole parse_role(const std::string& s) {
    if (s == "none") return TextRole::none;
    if (s == "outcome") return TextRole::outcome;
    if (s == "treatment") return TextRole::treatment;
    throw ContractError("text role must be none, outcome or treatment (got '" + s + "')");
}

PriorMode parse_prior_mode(const std::string& s) {
    if (s == "none") return PriorMode::none;
    if (s == "covariate") return PriorMode::covariate;
    if (s == "average") return PriorMode::average;
    throw ContractError("prior mode must be none, covariate or average (got '" + s + "')");
}

StartMode parse_start_mode(const std::string& s) {
    if (s == "cold_spectral") return StartMode::cold_spectral;
    if (s == "warm_spectral") return StartMode::warm_spectral;
    if (s == "warm_oracle") return StartMode::warm_oracle;
    throw ContractError("mode must be cold_spectral, warm_spectral or warm_oracle");
}

std::string sniff_model_format(const std::string& path) {
    json j = json::parse(cli::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ContractError("model file " + path + " is not valid JSON");
    return j.value("format", "");
}

std::vector<int> binary_treatments(const Corpus& c) {
    std::vector<int> t(c.size());
    for (std::size_t i = 0; i < c.size(); i++) {
        const auto& d = c.documents[i];
        if (!d.treatment) throw ContractError("document " + d.id + " has no treatment value");
        if (*d.treatment != 0.0 && *d.treatment != 1.0)
            throw ContractError("document " + d.id + " has non-binary treatment " +
                                std::to_string(*d.treatment));
        t[i] = (int)*d.treatment;
    }
    return t;
}

Eigen::VectorXd numeric_outcomes(const Corpus& c) {
    Eigen::VectorXd y(c.size());
    for (std::size_t i = 0; i < c.size(); i++) {
        const auto& d = c.documents[i];
        if (!d.outcome) throw ContractError("document " + d.id + " has no outcome value");
        y(i) = *d.outcome;
    }
    return y;
}

// Shared by apply-g, infer-treatments and estimate: resolve which rows a
// frozen g touches, and walk the lock protocol for test rows.
struct Target {
    Corpus docs;
    std::string lock_state = "none";   // none | valid | invalidated
    std::string lock_path;             // nonempty when a lock must be spent
    TestLock lock;
};

Target resolve_target(const Corpus& corpus, bool all, const std::string& split_path,
                      const std::string& lock_path, bool force, RunDir& rd) {
    Target t;
    if (all) {
        if (!split_path.empty() || !lock_path.empty())
            throw ContractError("--all cannot be combined with --split/--lock");
        t.docs = corpus;
        return t;
    }
    if (split_path.empty() || lock_path.empty())
        throw ContractError("choose --all for every document, or --split and --lock "
                            "for the held-out test set");
    rd.input("split", split_path);
    rd.input("lock", lock_path);
    SplitAssignment a = load_split(split_path);
    TestLock lock = load_lock(lock_path);
    verify_test_integrity(corpus, a, lock);
    if (lock.consumed) {
        if (!force)
            throw LockError("test set already used — lock consumed at " + lock.consumed_at +
                            " by '" + lock.fingerprint +
                            "' (rerun with --i-know-this-invalidates-inference to proceed "
                            "anyway; results will be stamped invalidated)");
        t.lock_state = "invalidated";
        rd.add_warning("estimating on an already-consumed test set; results stamped "
                       "invalidated");
    } else {
        t.lock_state = "valid";
        t.lock_path = lock_path;  // to be spent after compute
        t.lock = lock;
    }
    t.docs = corpus.subset(a.test_ids);
    return t;
}

// Consume-and-persist, the last act before outputs are written.
void spend_lock(Target& t, const std::string& fingerprint) {
    if (t.lock_path.empty()) return;
    t.lock = consume_lock(t.lock, fingerprint);
    save_lock(t.lock_path, t.lock);
}

Eigen::MatrixXd model_theta(const StmModel& model, const Corpus& docs, PriorMode mode,
                            RunDir& rd) {
    ApplyResult res;
    if (model.vocabulary == docs.vocabulary) {
        std::vector<std::string> ids;
        for (const auto& d : docs.documents) ids.push_back(d.id);
        if (mode == PriorMode::covariate) {
            Eigen::MatrixXd design = covariate_design_for(model, docs);
            res = fit_new_counts(model, docs.rows, ids, mode, &design);
        } else {
            res = fit_new_counts(model, docs.rows, ids, mode, nullptr);
        }
    } else {
        // different vocabulary: re-tokenize raw text with the stored config
        res = fit_new_documents(model, docs, mode);
    }
    double worst = 0.0;
    for (double r : res.oov_rate) worst = std::max(worst, r);
    rd.summary("max_oov_rate", worst);
    return res.theta;
}

// ---------------------------------------------------------------- commands

struct IngestOpts {
    std::string input, format = "jsonl", out;
    std::string id_col = "id", text_col = "text", covariates, treatment_col, outcome_col;
    std::string text_role = "none";
    std::string stemmer = "porter1980", extra_stopwords;
    bool keep_stopwords = false, keep_numeric = false;
    int min_token_length = 2, min_doc_count = 2;
    double max_doc_fraction = 0.99;
};

void cmd_ingest(const IngestOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "ingest");
    guarded(rd, [&] {
        rd.input("input", o.input);
        FileFormat fmt;
        if (o.format == "jsonl")
            fmt = FileFormat::jsonl;
        else if (o.format == "csv")
            fmt = FileFormat::csv;
        else
            throw ContractError("format must be jsonl or csv (got '" + o.format + "')");
        RoleMap roles;
        roles.id_col = o.id_col;
        roles.text_col = o.text_col;
        roles.covariate_cols = cli::parse_name_list(o.covariates);
        roles.treatment_col = o.treatment_col;
        roles.outcome_col = o.outcome_col;
        roles.text_role = parse_role(o.text_role);

        TokenizerConfig tok;
        tok.stemmer = o.stemmer;
        tok.remove_stopwords = !o.keep_stopwords;
        tok.extra_stopwords = cli::parse_name_list(o.extra_stopwords);
        tok.drop_numeric = !o.keep_numeric;
        tok.min_token_length = o.min_token_length;
        tok.min_doc_count = o.min_doc_count;
        tok.max_doc_fraction = o.max_doc_fraction;

        Corpus c = tokenize(ingest(o.input, fmt, roles), tok);
        rd.note_output("corpus.json");
        save_corpus(rd.path("corpus.json"), c);
        rd.config() = {{"input", o.input},       {"format", o.format},
                       {"text_role", o.text_role}, {"stemmer", o.stemmer},
                       {"min_doc_count", o.min_doc_count},
                       {"max_doc_fraction", o.max_doc_fraction}};
        rd.summary("documents", c.size());
        rd.summary("vocabulary", c.vocabulary.size());
        rd.summary("empty_documents", c.empty_doc_ids.size());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("ingested %zu documents, vocabulary %zu -> %s\n", c.size(),
                    c.vocabulary.size(), rd.path("corpus.json").c_str());
    });
}

struct SplitOpts {
    std::string corpus, out, strata;
    double proportion = 0.5;
    std::uint64_t seed = 0;
};

void cmd_split(const SplitOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "split");
    guarded(rd, [&] {
        rd.input("corpus", o.corpus);
        Corpus c = load_corpus(o.corpus);
        SplitAssignment a = split(c, o.proportion, o.strata, o.seed);
        rd.note_output("split.json");
        save_split(rd.path("split.json"), a);
        TestLock lock = make_lock(a);
        rd.note_output("lock.json");
        save_lock(rd.path("lock.json"), lock);
        rd.config() = {{"proportion", o.proportion}, {"strata", o.strata}, {"seed", o.seed}};
        rd.summary("train", a.train_ids.size());
        rd.summary("test", a.test_ids.size());
        rd.summary("test_digest", a.test_digest);
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("split %zu train / %zu test; lock %s\n", a.train_ids.size(),
                    a.test_ids.size(), rd.path("lock.json").c_str());
    });
}

struct FitStmOpts {
    std::string corpus, split, out, prevalence;
    int k = 10, max_em_iters = 200;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    bool literal_sigma_tilde = false;
};

void cmd_fit_stm(const FitStmOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "fit-stm");
    guarded(rd, [&] {
        rd.input("corpus", o.corpus);
        Corpus c = load_corpus(o.corpus);
        Corpus train = c;
        if (!o.split.empty()) {
            rd.input("split", o.split);
            train = c.subset(load_split(o.split).train_ids);
        }
        StmConfig cfg;
        cfg.K = o.k;
        cfg.prevalence = cli::parse_name_list(o.prevalence);
        cfg.max_em_iters = o.max_em_iters;
        cfg.tol = o.tol;
        cfg.seed = o.seed;
        cfg.literal_sigma_tilde = o.literal_sigma_tilde;
        StmModel m = fit_stm(train, cfg);
        rd.note_output("stm.json");
        save_stm(rd.path("stm.json"), m);

        std::ostringstream topics;
        topics << "topic,rank,term,probability\n";
        for (int k = 0; k < m.K(); k++) {
            auto tw = top_words(m, k, 10);
            for (std::size_t r = 0; r < tw.size(); r++)
                topics << (k + 1) << ',' << (r + 1) << ',' << tw[r].first << ','
                       << tw[r].second << "\n";
        }
        rd.write("topics.csv", topics.str());

        rd.config() = {{"k", o.k},
                       {"prevalence", o.prevalence},
                       {"max_em_iters", o.max_em_iters},
                       {"tol", o.tol},
                       {"seed", o.seed}};
        rd.summary("documents", train.size());
        rd.summary("em_iterations", m.bound_trace.size());
        rd.summary("final_bound", m.bound_trace.back());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("fit %d topics on %zu documents (%zu EM iterations) -> %s\n", o.k,
                    train.size(), m.bound_trace.size(), rd.path("stm.json").c_str());
    });
}

struct FitSibpOpts {
    std::string corpus, split, out;
    int k_max = 5, max_iters = 200, restarts = 10;
    double alpha = 3.0, sigma_n2 = 1.0, sigma_a2 = 1.0, sigma_beta2 = 1.0, tol = 1e-6;
    double threshold = 0.5;
    std::uint64_t seed = 0;
};

void cmd_fit_sibp(const FitSibpOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "fit-sibp");
    guarded(rd, [&] {
        rd.input("corpus", o.corpus);
        Corpus c = load_corpus(o.corpus);
        Corpus train = c;
        if (!o.split.empty()) {
            rd.input("split", o.split);
            train = c.subset(load_split(o.split).train_ids);
        }
        StandardizeResult st = standardize(train);
        Eigen::VectorXd y = numeric_outcomes(train);

        SibpConfig cfg;
        cfg.alpha = o.alpha;
        cfg.k_max = o.k_max;
        cfg.sigma_n2 = o.sigma_n2;
        cfg.sigma_a2 = o.sigma_a2;
        cfg.sigma_beta2 = o.sigma_beta2;
        cfg.max_iters = o.max_iters;
        cfg.tol = o.tol;
        cfg.restarts = o.restarts;
        cfg.seed = o.seed;
        cfg.binarize_threshold = o.threshold;
        SibpModel m = fit_sibp(st.x, y, cfg);
        m.feat_mean = st.mean;
        m.feat_scale = st.scale;
        rd.note_output("sibp.json");
        save_sibp(m, rd.path("sibp.json"));

        std::ostringstream feats;
        feats << "feature,pi,top_terms\n";
        for (int k = 0; k < m.K(); k++) {
            std::vector<int> order(m.A.cols());
            // order columns of the loading row by |weight|
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return std::abs(m.A(k, a)) > std::abs(m.A(k, b));
            });
            feats << (k + 1) << ',' << m.pi(k) << ',';
            for (int r = 0; r < std::min<int>(8, (int)order.size()); r++) {
                if (r) feats << ' ';
                feats << train.vocabulary[order[r]];
            }
            feats << "\n";
        }
        rd.write("features.csv", feats.str());

        rd.config() = {{"k_max", o.k_max},   {"alpha", o.alpha},
                       {"restarts", o.restarts}, {"seed", o.seed},
                       {"threshold", o.threshold}};
        rd.summary("documents", train.size());
        rd.summary("final_bound", m.bound_trace.back());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("fit %d latent features on %zu documents -> %s\n", m.K(), train.size(),
                    rd.path("sibp.json").c_str());
    });
}

struct ApplyOpts {
    std::string model, corpus, split, lock, out;
    std::string prior_mode = "average";
    bool all = false, force = false;
};

void cmd_apply_g(const ApplyOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "apply-g");
    guarded(rd, [&] {
        rd.input("model", o.model);
        rd.input("corpus", o.corpus);
        StmModel m = load_stm(o.model);
        Corpus c = load_corpus(o.corpus);
        Target tgt = resolve_target(c, o.all, o.split, o.lock, o.force, rd);
        Eigen::MatrixXd theta = model_theta(m, tgt.docs, parse_prior_mode(o.prior_mode), rd);

        spend_lock(tgt, "apply-g --out " + rd.dir());
        rd.set_lock_state(tgt.lock_state);

        std::ostringstream out;
        out.precision(17);
        out << "id";
        for (int k = 0; k < m.K(); k++) out << ",theta_" << (k + 1);
        out << "\n";
        for (std::size_t i = 0; i < tgt.docs.size(); i++) {
            out << tgt.docs.documents[i].id;
            for (int k = 0; k < m.K(); k++) out << ',' << theta(i, k);
            out << "\n";
        }
        rd.write("theta.csv", out.str());
        rd.config() = {{"prior_mode", o.prior_mode}, {"all", o.all}};
        rd.summary("documents", tgt.docs.size());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("applied g to %zu documents (lock: %s) -> %s\n", tgt.docs.size(),
                    tgt.lock_state.c_str(), rd.path("theta.csv").c_str());
    });
}

struct InferOpts {
    std::string model, corpus, split, lock, out;
    bool all = false, force = false;
};

void cmd_infer_treatments(const InferOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "infer-treatments");
    guarded(rd, [&] {
        rd.input("model", o.model);
        rd.input("corpus", o.corpus);
        SibpModel m = load_sibp(o.model);
        Corpus c = load_corpus(o.corpus);
        Target tgt = resolve_target(c, o.all, o.split, o.lock, o.force, rd);
        Eigen::MatrixXd x = dense_dtm(tgt.docs);
        Eigen::MatrixXd xs = apply_standardization(x, m.feat_mean, m.feat_scale);
        auto tv = infer_treatments(m, xs);

        spend_lock(tgt, "infer-treatments --out " + rd.dir());
        rd.set_lock_state(tgt.lock_state);

        std::ostringstream out;
        out.precision(17);
        out << "id";
        for (int k = 0; k < m.K(); k++) out << ",prob_" << (k + 1);
        for (int k = 0; k < m.K(); k++) out << ",z_" << (k + 1);
        out << "\n";
        for (std::size_t i = 0; i < tv.size(); i++) {
            out << tgt.docs.documents[i].id;
            for (int k = 0; k < m.K(); k++) out << ',' << tv[i].probs(k);
            for (int k = 0; k < m.K(); k++) out << ',' << tv[i].z[k];
            out << "\n";
        }
        rd.write("treatments.csv", out.str());
        rd.config() = {{"all", o.all}};
        rd.summary("documents", tgt.docs.size());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("inferred treatments for %zu documents (lock: %s) -> %s\n",
                    tgt.docs.size(), tgt.lock_state.c_str(),
                    rd.path("treatments.csv").c_str());
    });
}

struct EstimateOpts {
    std::string model, corpus, split, lock, out, labels;
    std::string prior_mode = "average", weights = "empirical";
    std::vector<std::string> acie;
    int bootstrap = 1000;
    std::uint64_t seed = 0;
    bool bh = false, force = false, skip_degenerate = false;
};

void cmd_estimate(const EstimateOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "estimate");
    guarded(rd, [&] {
        rd.input("model", o.model);
        rd.input("corpus", o.corpus);
        Corpus c = load_corpus(o.corpus);
        if (o.split.empty() || o.lock.empty())
            throw ContractError("estimate runs on the held-out test set only: "
                                "--split and --lock are required");
        Target tgt = resolve_target(c, false, o.split, o.lock, o.force, rd);

        const std::string fmt = sniff_model_format(o.model);
        std::vector<CausalEstimate> effects;
        std::string label_prefix;
        json assumptions = json::array(
            {"sutva: each unit's response depends only on its own text",
             "ignorability: treatment assignment independent of potential outcomes",
             "positivity: every arm has positive probability"});
        WeightMode wm =
            o.weights == "uniform" ? WeightMode::uniform : WeightMode::empirical;
        if (o.weights != "uniform" && o.weights != "empirical")
            throw ContractError("weights must be empirical or uniform");

        auto try_estimate = [&](const std::function<CausalEstimate()>& f,
                                const std::string& what) {
            try {
                effects.push_back(f());
            } catch (const ContractError& e) {
                if (!o.skip_degenerate) throw;
                rd.add_warning("skipped " + what + ": " + e.what());
            }
        };

        if (fmt == "stm-model") {
            label_prefix = "Topic";
            StmModel m = load_stm(o.model);
            std::vector<int> t = binary_treatments(tgt.docs);
            Eigen::MatrixXd theta =
                model_theta(m, tgt.docs, parse_prior_mode(o.prior_mode), rd);
            for (int k = 0; k < m.K(); k++)
                try_estimate(
                    [&] {
                        return estimate_ate(theta, t, k, o.bootstrap,
                                            derive_seed(o.seed, (std::uint64_t)k));
                    },
                    "ATE_" + std::to_string(k + 1));
        } else if (fmt == "sibp-model") {
            label_prefix = "Feature";
            // untestable from data; declared rather than checked
            assumptions.push_back(
                "sufficiency: the latent features capture, on average, all "
                "response-relevant information in the text");
            SibpModel m = load_sibp(o.model);
            Eigen::VectorXd y = numeric_outcomes(tgt.docs);
            Eigen::MatrixXd x = dense_dtm(tgt.docs);
            auto tv = infer_treatments(m, apply_standardization(x, m.feat_mean, m.feat_scale));
            Eigen::MatrixXi z((int)tv.size(), m.K());
            for (std::size_t i = 0; i < tv.size(); i++)
                for (int k = 0; k < m.K(); k++) z((int)i, k) = tv[i].z[k];
            for (int k = 0; k < m.K(); k++)
                try_estimate(
                    [&] {
                        return estimate_amce(y, z, k, wm, o.bootstrap,
                                             derive_seed(o.seed, (std::uint64_t)k));
                    },
                    "AMCE_" + std::to_string(k + 1));
            for (const auto& pair : o.acie) {
                auto kl = cli::parse_int_list(pair, "acie pair");
                if (kl.size() != 2)
                    throw ContractError("--acie expects two comma-separated 1-based "
                                        "indices, got '" + pair + "'");
                int k = kl[0] - 1, l = kl[1] - 1;
                try_estimate(
                    [&] {
                        return estimate_acie(
                            y, z, k, l, wm, o.bootstrap,
                            derive_seed(o.seed, 100000ull + 1000ull * kl[0] + kl[1]));
                    },
                    "ACIE_" + pair);
            }
        } else {
            throw ContractError("model file " + o.model +
                                " is neither an stm-model nor a sibp-model");
        }
        if (effects.empty()) throw ContractError("no estimable effects survived");

        for (auto& e : effects) e.lock_state = tgt.lock_state;
        if (o.bh) apply_bh(effects);

        // everything computed; spend the lock, then write outputs
        spend_lock(tgt, "estimate --out " + rd.dir());
        rd.set_lock_state(tgt.lock_state);

        rd.note_output("effects.csv");
        effects_to_csv(effects, rd.path("effects.csv"));
        LabelRegistry labels = LabelRegistry::from_file(o.labels, label_prefix);
        if (!o.labels.empty()) rd.input("labels", o.labels);
        rd.write("effects.svg", cli::svg_effect_plot(effects, labels));

        rd.config() = {{"bootstrap", o.bootstrap}, {"seed", o.seed},
                       {"prior_mode", o.prior_mode}, {"weights", o.weights},
                       {"bh", o.bh}};
        rd.summary("effects", effects.size());
        rd.summary("assumptions", assumptions);
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("estimated %zu effects on %zu test documents (lock: %s) -> %s\n",
                    effects.size(), tgt.docs.size(), tgt.lock_state.c_str(),
                    rd.path("effects.csv").c_str());
    });
}

struct AisvOpts {
    std::string out, table, design = "balanced";
};

void cmd_aisv(const AisvOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "aisv");
    guarded(rd, [&] {
        PotentialOutcomeTable table;
        if (o.table.empty()) {
            table = four_person_demo();
        } else {
            rd.input("table", o.table);
            json j = json::parse(cli::read_file(o.table), nullptr, false);
            if (j.is_discarded() || !j.is_array())
                throw ContractError("table file must be a JSON array of "
                                    "{unit, control, treated}");
            for (const auto& row : j) {
                table.units.push_back(row.at("unit").get<std::string>());
                table.outcomes.push_back({row.at("control").get<std::string>(),
                                          row.at("treated").get<std::string>()});
            }
        }
        AisvDesign design = o.design == "all" ? AisvDesign::all : AisvDesign::balanced;
        if (o.design != "all" && o.design != "balanced")
            throw ContractError("design must be balanced or all");
        AisvReport rep = enumerate_aisv(table, design);

        json j;
        j["design"] = o.design;
        j["n_units"] = rep.n_units;
        j["units"] = table.units;
        j["unstable"] = rep.unstable;
        j["category_sets"] = rep.category_sets;
        j["n_randomizations"] = rep.assignments.size();
        const std::size_t cap = 4096;
        json assigns = json::array();
        for (std::size_t a = 0; a < std::min(cap, rep.assignments.size()); a++) {
            json row;
            row["t"] = rep.assignment((int)a);
            row["categories"] = rep.category_sets[rep.set_index[a]];
            json vals = json::object();
            for (int i = 0; i < rep.n_units; i++)
                vals[table.units[i]] = rep.value_label((int)a, i);
            row["values"] = vals;
            assigns.push_back(std::move(row));
        }
        j["randomizations"] = std::move(assigns);
        j["randomizations_truncated"] = rep.assignments.size() > cap;
        json wits = json::array();
        for (const auto& w : rep.witnesses) {
            wits.push_back({{"unit", table.units[w.unit]},
                            {"t_a", w.t_a},
                            {"t_b", w.t_b},
                            {"categories_a", w.set_a},
                            {"categories_b", w.set_b},
                            {"realized", w.realized}});
        }
        j["witnesses"] = std::move(wits);
        rd.write("aisv.json", j.dump(2) + "\n");
        rd.config() = {{"design", o.design}};
        rd.summary("unstable", rep.unstable);
        rd.summary("category_sets", rep.category_sets.size());
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("%zu randomizations, %zu category sets, unstable: %s -> %s\n",
                    rep.assignments.size(), rep.category_sets.size(),
                    rep.unstable ? "yes" : "no", rd.path("aisv.json").c_str());
    });
}

struct OverfitOpts {
    std::string out;
    int units = 100, noise_gs = 50, reps = 1000;
    std::uint64_t seed = 0;
};

void cmd_overfit(const OverfitOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "overfit");
    guarded(rd, [&] {
        OverfitReport rep = overfit_demo(o.units, o.noise_gs, o.seed, o.reps);
        json j = {{"same_sample_rate", rep.same_sample_rate},
                  {"split_sample_rate", rep.split_sample_rate},
                  {"n_units", rep.n_units},
                  {"n_noise_gs", rep.n_noise_gs},
                  {"n_reps", rep.n_reps},
                  {"locks_consumed", rep.locks_consumed}};
        rd.write("overfit.json", j.dump(2) + "\n");
        rd.config() = {{"units", o.units}, {"noise-gs", o.noise_gs},
                       {"reps", o.reps}, {"seed", o.seed}};
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("false-positive rate at alpha 0.05: same-sample %.3f, split-sample "
                    "%.3f (%d candidate summaries, %d replications)\n",
                    rep.same_sample_rate, rep.split_sample_rate, o.noise_gs, o.reps);
    });
}

struct StabilityOpts {
    std::string corpus, out, sizes = "5000,1000", tracked, covariate, prevalence;
    std::string mode = "cold_spectral";
    int k = 20, reps = 100, top_words = 10, max_em_iters = 200, rep_max_em_iters = 0;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    bool hungarian = false;
};

void cmd_stability(const StabilityOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "stability");
    guarded(rd, [&] {
        rd.input("corpus", o.corpus);
        Corpus c = load_corpus(o.corpus);
        StabilityConfig cfg;
        cfg.sample_sizes = cli::parse_int_list(o.sizes, "sample size");
        cfg.n_reps = o.reps;
        cfg.mode = parse_start_mode(o.mode);
        if (!o.tracked.empty()) cfg.tracked_topics = cli::parse_int_list(o.tracked, "topic");
        cfg.top_words = o.top_words;
        cfg.covariate = o.covariate;
        cfg.hungarian = o.hungarian;
        cfg.seed = o.seed;
        cfg.stm.K = o.k;
        cfg.stm.prevalence = cli::parse_name_list(o.prevalence);
        cfg.stm.max_em_iters = o.max_em_iters;
        cfg.stm.tol = o.tol;
        cfg.stm.seed = derive_seed(o.seed, 0xf11);
        cfg.rep_max_em_iters = o.rep_max_em_iters;
        StabilityReport rep = run_stability(c, cfg);

        rd.write("records.csv", stability_records_csv(rep));
        // plot-data projections: theta dispersion, top-word mass, effect CIs
        std::ostringstream th, bm, ef;
        th.precision(17);
        bm.precision(17);
        ef.precision(17);
        th << "sample_size,rep,tracked,theta_mean\n";
        bm << "sample_size,rep,tracked,top_mass\n";
        ef << "sample_size,rep,tracked,effect,effect_lo,effect_hi\n";
        for (const auto& r : rep.records) {
            th << r.sample_size << ',' << r.rep << ',' << r.tracked << ',' << r.theta_mean
               << "\n";
            bm << r.sample_size << ',' << r.rep << ',' << r.tracked << ',' << r.top_mass
               << "\n";
            ef << r.sample_size << ',' << r.rep << ',' << r.tracked << ',' << r.effect << ','
               << r.effect_lo << ',' << r.effect_hi << "\n";
        }
        rd.write("theta_dispersion.csv", th.str());
        rd.write("beta_mass.csv", bm.str());
        rd.write("effect_ci.csv", ef.str());

        json j;
        j["note"] = rep.note;
        j["mode"] = o.mode;
        j["k"] = rep.k;
        j["n_reps"] = rep.n_reps;
        j["sample_sizes"] = rep.sample_sizes;
        j["tracked_topics"] = rep.tracked_topics;
        j["top_words"] = rep.top_words;
        j["full_theta_mean"] = rep.full_theta_mean;
        j["full_effect"] = rep.full_effect;
        j["full_effect_lo"] = rep.full_effect_lo;
        j["full_effect_hi"] = rep.full_effect_hi;
        rd.write("stability.json", j.dump(2) + "\n");
        rd.config() = {{"k", o.k},       {"sizes", o.sizes}, {"reps", o.reps},
                       {"mode", o.mode}, {"seed", o.seed},   {"covariate", o.covariate}};
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("stability: %zu records (%s) -> %s\n", rep.records.size(),
                    o.mode.c_str(), rd.path("records.csv").c_str());
    });
}

struct DemoOpts {
    std::string out;
    int n = 600;
    std::uint64_t seed = 5;
};

void cmd_make_demo(const DemoOpts& o, const std::string& cfg_text) {
    RunDir rd(o.out, "make-demo");
    guarded(rd, [&] {
        rd.note_output("demo.jsonl");
        write_demo_jsonl(rd.path("demo.jsonl"), o.n, o.seed);
        rd.config() = {{"n", o.n}, {"seed", o.seed}};
        if (!cfg_text.empty()) rd.write("run.cfg", cfg_text);
        std::printf("wrote %d synthetic responses -> %s\n", o.n,
                    rd.path("demo.jsonl").c_str());
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split-sample causal inference with text: discover a codebook on a "
                 "training set, freeze it, estimate once on the held-out test set"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file mirroring the flags");
    std::string cfg_text;
    auto grab_config = [&] { cfg_text = app.config_to_str(false, false); };

    IngestOpts ing;
    auto* c_ing = app.add_subcommand("ingest", "tokenize a jsonl/csv file into a corpus");
    c_ing->add_option("--input", ing.input, "raw corpus file")->required();
    c_ing->add_option("--format", ing.format, "jsonl or csv");
    c_ing->add_option("--out", ing.out, "output directory")->required();
    c_ing->add_option("--id-col", ing.id_col);
    c_ing->add_option("--text-col", ing.text_col);
    c_ing->add_option("--covariates", ing.covariates, "comma-separated covariate columns");
    c_ing->add_option("--treatment-col", ing.treatment_col);
    c_ing->add_option("--outcome-col", ing.outcome_col);
    c_ing->add_option("--text-role", ing.text_role, "none, outcome or treatment");
    c_ing->add_option("--stemmer", ing.stemmer, "porter1980 or none");
    c_ing->add_flag("--keep-stopwords", ing.keep_stopwords);
    c_ing->add_option("--extra-stopwords", ing.extra_stopwords);
    c_ing->add_flag("--keep-numeric", ing.keep_numeric);
    c_ing->add_option("--min-token-length", ing.min_token_length);
    c_ing->add_option("--min-doc-count", ing.min_doc_count);
    c_ing->add_option("--max-doc-fraction", ing.max_doc_fraction);
    c_ing->callback([&] { grab_config(); cmd_ingest(ing, cfg_text); });

    SplitOpts spl;
    auto* c_spl = app.add_subcommand("split", "train/test split with a one-shot test lock");
    c_spl->add_option("--corpus", spl.corpus, "corpus.json artifact")->required();
    c_spl->add_option("--out", spl.out)->required();
    c_spl->add_option("--proportion", spl.proportion, "training share (default 0.5)");
    c_spl->add_option("--strata", spl.strata, "covariate to stratify on");
    c_spl->add_option("--seed", spl.seed);
    c_spl->callback([&] { grab_config(); cmd_split(spl, cfg_text); });

    FitStmOpts fst;
    auto* c_fst = app.add_subcommand("fit-stm", "discover a topic codebook on training text");
    c_fst->add_option("--corpus", fst.corpus)->required();
    c_fst->add_option("--split", fst.split, "restrict fitting to the training half");
    c_fst->add_option("--out", fst.out)->required();
    c_fst->add_option("--k", fst.k, "number of topics")->required();
    c_fst->add_option("--prevalence", fst.prevalence,
                      "comma-separated covariates driving topic prevalence");
    c_fst->add_option("--max-em-iters", fst.max_em_iters);
    c_fst->add_option("--tol", fst.tol);
    c_fst->add_option("--seed", fst.seed);
    c_fst->add_flag("--literal-sigma-tilde", fst.literal_sigma_tilde);
    c_fst->callback([&] { grab_config(); cmd_fit_stm(fst, cfg_text); });

    FitSibpOpts fsb;
    auto* c_fsb = app.add_subcommand("fit-sibp",
                                     "discover latent binary treatments on training text");
    c_fsb->add_option("--corpus", fsb.corpus)->required();
    c_fsb->add_option("--split", fsb.split);
    c_fsb->add_option("--out", fsb.out)->required();
    c_fsb->add_option("--k-max", fsb.k_max, "truncation level")->required();
    c_fsb->add_option("--alpha", fsb.alpha);
    c_fsb->add_option("--sigma-n2", fsb.sigma_n2);
    c_fsb->add_option("--sigma-a2", fsb.sigma_a2);
    c_fsb->add_option("--sigma-beta2", fsb.sigma_beta2);
    c_fsb->add_option("--max-iters", fsb.max_iters);
    c_fsb->add_option("--tol", fsb.tol);
    c_fsb->add_option("--restarts", fsb.restarts);
    c_fsb->add_option("--threshold", fsb.threshold, "binarization threshold");
    c_fsb->add_option("--seed", fsb.seed);
    c_fsb->callback([&] { grab_config(); cmd_fit_sibp(fsb, cfg_text); });

    ApplyOpts apl;
    auto* c_apl = app.add_subcommand("apply-g", "apply a frozen topic codebook to documents");
    c_apl->add_option("--model", apl.model, "stm.json")->required();
    c_apl->add_option("--corpus", apl.corpus)->required();
    c_apl->add_option("--split", apl.split);
    c_apl->add_option("--lock", apl.lock);
    c_apl->add_flag("--all", apl.all, "apply to every document (no lock involved)");
    c_apl->add_option("--prior-mode", apl.prior_mode, "none, covariate or average");
    c_apl->add_flag("--i-know-this-invalidates-inference", apl.force);
    c_apl->add_option("--out", apl.out)->required();
    c_apl->callback([&] { grab_config(); cmd_apply_g(apl, cfg_text); });

    InferOpts inf;
    auto* c_inf = app.add_subcommand("infer-treatments",
                                     "infer latent treatments with a frozen model");
    c_inf->add_option("--model", inf.model, "sibp.json")->required();
    c_inf->add_option("--corpus", inf.corpus)->required();
    c_inf->add_option("--split", inf.split);
    c_inf->add_option("--lock", inf.lock);
    c_inf->add_flag("--all", inf.all);
    c_inf->add_flag("--i-know-this-invalidates-inference", inf.force);
    c_inf->add_option("--out", inf.out)->required();
    c_inf->callback([&] { grab_config(); cmd_infer_treatments(inf, cfg_text); });

    EstimateOpts est;
    auto* c_est = app.add_subcommand(
        "estimate", "apply the frozen g to the test set and estimate effects, consuming "
                    "the lock as one transaction");
    c_est->add_option("--model", est.model, "stm.json or sibp.json")->required();
    c_est->add_option("--corpus", est.corpus)->required();
    c_est->add_option("--split", est.split)->required();
    c_est->add_option("--lock", est.lock)->required();
    c_est->add_option("--out", est.out)->required();
    c_est->add_option("--bootstrap", est.bootstrap,
                      "bootstrap replicates (0 = normal interval)");
    c_est->add_option("--seed", est.seed);
    c_est->add_option("--prior-mode", est.prior_mode, "topic path: none, covariate, average");
    c_est->add_option("--weights", est.weights, "feature path: empirical or uniform");
    c_est->add_option("--acie", est.acie,
                      "interaction pair 'k,l' (1-based), repeatable");
    c_est->add_option("--labels", est.labels, "index=name file for plot labels");
    c_est->add_flag("--bh", est.bh, "Benjamini-Hochberg adjusted p-values");
    c_est->add_flag("--skip-degenerate", est.skip_degenerate,
                    "skip estimands without support instead of failing");
    c_est->add_flag("--i-know-this-invalidates-inference", est.force);
    c_est->callback([&] { grab_config(); cmd_estimate(est, cfg_text); });

    AisvOpts ais;
    auto* c_ais = app.add_subcommand("aisv",
                                     "enumerate randomizations of a potential-outcome table");
    c_ais->add_option("--table", ais.table, "JSON table (default: built-in demo)");
    c_ais->add_option("--design", ais.design, "balanced or all");
    c_ais->add_option("--out", ais.out)->required();
    c_ais->callback([&] { grab_config(); cmd_aisv(ais, cfg_text); });

    OverfitOpts ovf;
    auto* c_ovf = app.add_subcommand("overfit", "min-p selection false-positive demo");
    c_ovf->add_option("--units", ovf.units);
    c_ovf->add_option("--noise-gs", ovf.noise_gs, "candidate summaries per replication");
    c_ovf->add_option("--reps", ovf.reps);
    c_ovf->add_option("--seed", ovf.seed);
    c_ovf->add_option("--out", ovf.out)->required();
    c_ovf->callback([&] { grab_config(); cmd_overfit(ovf, cfg_text); });

    StabilityOpts stb;
    auto* c_stb = app.add_subcommand("stability", "train/test refit stability harness");
    c_stb->add_option("--corpus", stb.corpus)->required();
    c_stb->add_option("--out", stb.out)->required();
    c_stb->add_option("--k", stb.k);
    c_stb->add_option("--sizes", stb.sizes, "comma-separated subsample sizes");
    c_stb->add_option("--reps", stb.reps);
    c_stb->add_option("--mode", stb.mode, "cold_spectral, warm_spectral or warm_oracle");
    c_stb->add_option("--tracked", stb.tracked, "comma-separated topic indices (0-based)");
    c_stb->add_option("--top-words", stb.top_words);
    c_stb->add_option("--covariate", stb.covariate);
    c_stb->add_option("--prevalence", stb.prevalence);
    c_stb->add_flag("--hungarian", stb.hungarian, "optimal topic assignment");
    c_stb->add_option("--max-em-iters", stb.max_em_iters);
    c_stb->add_option("--rep-max-em-iters", stb.rep_max_em_iters,
                      "EM cap for replications (0 = same as --max-em-iters)");
    c_stb->add_option("--tol", stb.tol);
    c_stb->add_option("--seed", stb.seed);
    c_stb->callback([&] { grab_config(); cmd_stability(stb, cfg_text); });

    DemoOpts dem;
    auto* c_dem = app.add_subcommand("make-demo", "write the bundled synthetic corpus");
    c_dem->add_option("--n", dem.n);
    c_dem->add_option("--seed", dem.seed);
    c_dem->add_option("--out", dem.out)->required();
    c_dem->callback([&] { grab_config(); cmd_make_demo(dem, cfg_text); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const LockError& e) {
        std::fprintf(stderr, "lock error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
