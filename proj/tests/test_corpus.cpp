#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "textcausal/corpus.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/porter.hpp"
#include "textcausal/rng.hpp"

using namespace textcausal;

TEST_SUITE_BEGIN("corpus");

namespace {

std::string temp_path(const char* name) {
    return std::string("tc_test_") + name;
}

TokenizerConfig loose_config() {
    TokenizerConfig cfg;
    cfg.min_doc_count = 1;
    cfg.max_doc_fraction = 1.0;  // single-doc fixtures would otherwise prune everything
    return cfg;
}

}  // namespace

TEST_CASE("porter stemmer reference pairs") {
    // pairs worked through by hand against the published algorithm
    const std::pair<const char*, const char*> cases[] = {
        {"caresses", "caress"}, {"flies", "fli"},       {"dies", "di"},
        {"mules", "mule"},      {"denied", "deni"},     {"agreed", "agre"},
        {"owned", "own"},       {"sized", "size"},      {"meetings", "meet"},
        {"stating", "state"},   {"itemization", "item"}, {"traditional", "tradit"},
        {"reference", "refer"}, {"colonizer", "colon"}, {"plotted", "plot"},
        {"happy", "happi"},     {"sky", "sky"},         {"relational", "relat"},
        {"conditional", "condit"}, {"rational", "ration"},
        {"immigration", "immigr"}, {"country", "countri"}, {"illegal", "illeg"},
        {"dangerous", "danger"},   {"people", "peopl"},    {"criminal", "crimin"},
        {"believe", "believ"},     {"already", "alreadi"}, {"serve", "serv"},
        {"time", "time"},          {"sentence", "sentenc"}, {"punishment", "punish"},
        {"deported", "deport"},    {"deports", "deport"},  {"deport", "deport"},
        {"determine", "determin"}, {"individual", "individu"}, {"simply", "simpli"},
        {"prison", "prison"},      {"dont", "dont"},
    };
    for (auto& [in, want] : cases) {
        CAPTURE(in);
        CHECK(porter_stem(in) == want);
    }
}

TEST_CASE("stemming collapses inflections into one count") {
    Corpus c;
    c.documents.push_back({"a", "Deported! deport, DEPORTS", {}, {}, {}});
    c.documents.push_back({"b", "something else entirely", {}, {}, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    int ix = t.vocab_index("deport");
    REQUIRE(ix >= 0);
    int found = 0;
    for (auto& [term, count] : t.rows[0])
        if (term == ix) found = count;
    CHECK(found == 3);
}

TEST_CASE("doc emptied by stopword removal keeps a zero row and is flagged") {
    Corpus c;
    c.documents.push_back({"a", "the and of to", {}, {}, {}});
    c.documents.push_back({"b", "border crossing crossing", {}, {}, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].empty());
    CHECK(t.row_total(0) == 0);
    REQUIRE(t.empty_doc_ids.size() == 1);
    CHECK(t.empty_doc_ids[0] == "a");
}

TEST_CASE("immigration-style text produces the expected stems") {
    Corpus c;
    c.documents.push_back({"a",
                           "They entered the country illegally and should be deported. "
                           "Illegal immigration is a crime against this country.",
                           {}, {}, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    for (const char* stem : {"countri", "illeg", "deport", "immigr", "crime", "enter"}) {
        CAPTURE(stem);
        CHECK(t.vocab_index(stem) >= 0);
    }
    // stopwords and apostrophes are gone before stemming
    CHECK(t.vocab_index("the") < 0);
    CHECK(t.vocab_index("they") < 0);
}

TEST_CASE("apostrophes are deleted, not split") {
    Corpus c;
    c.documents.push_back({"a", "I don't think they're wrong", {}, {}, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    CHECK(t.vocab_index("dont") >= 0);
    CHECK(t.vocab_index("theyr") >= 0);  // "theyre" stems the final e away
    CHECK(t.vocab_index("don") < 0);
}

TEST_CASE("document-frequency pruning") {
    Corpus c;
    c.documents.push_back({"a", "shared rare", {}, {}, {}});
    c.documents.push_back({"b", "shared word everywherex", {}, {}, {}});
    c.documents.push_back({"c", "other word everywherex", {}, {}, {}});
    c.documents.push_back({"d", "everywherex", {}, {}, {}});
    c.documents.push_back({"e", "everywherex", {}, {}, {}});
    TokenizerConfig cfg;  // min_doc_count = 2
    cfg.max_doc_fraction = 0.75;
    Corpus t = tokenize(std::move(c), cfg);
    CHECK(t.vocab_index("share") >= 0);
    CHECK(t.vocab_index("word") >= 0);
    CHECK(t.vocab_index("rare") < 0);          // below min_doc_count
    CHECK(t.vocab_index("everywherex") < 0);   // above max_doc_fraction

    Corpus c2;
    c2.documents.push_back({"a", "unique1x", {}, {}, {}});
    c2.documents.push_back({"b", "unique2x", {}, {}, {}});
    CHECK_THROWS_AS(tokenize(std::move(c2), cfg), ContractError);
}

TEST_CASE("replaying the stored tokenizer config reproduces the dtm") {
    Corpus raw;
    raw.documents.push_back({"a", "Judges decide each asylum case on its merits.", {}, {}, {}});
    raw.documents.push_back({"b", "The hearing process is slow and underfunded!", {}, {}, {}});
    raw.documents.push_back({"c", "Asylum hearings are slow; the process takes years.", {}, {}, {}});
    Corpus t1 = tokenize(raw, loose_config());
    Corpus t2 = tokenize(raw, *t1.tok_config);
    CHECK(t1.vocabulary == t2.vocabulary);
    CHECK(t1.rows == t2.rows);
    // row sums equal post-pipeline token counts
    for (std::size_t i = 0; i < raw.documents.size(); i++) {
        auto toks = tokenize_text(raw.documents[i].text, *t1.tok_config);
        long long kept = 0;
        for (auto& tok : toks)
            if (t1.vocab_index(tok) >= 0) kept++;
        CHECK(t1.row_total(i) == kept);
    }
    CHECK(std::is_sorted(t1.vocabulary.begin(), t1.vocabulary.end()));
}

TEST_CASE("jsonl ingest") {
    auto path = temp_path("ingest.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"a","text":"first text","treatment":1})" << "\n";
        out << R"({"id":"b","text":"second text","treatment":0})" << "\n";
        out << R"({"id":"c","text":"third","treatment":1,"outcome":2.5})" << "\n";
        out << R"({"id":"d","text":"fourth","treatment":0,"covariates":{"age":31}})" << "\n";
    }
    RoleMap roles;
    Corpus c = ingest(path, FileFormat::jsonl, roles);
    REQUIRE(c.size() == 4);
    CHECK(c.documents[0].id == "a");
    CHECK(*c.documents[0].treatment == 1.0);
    CHECK(!c.documents[0].outcome.has_value());
    CHECK(*c.documents[2].outcome == 2.5);
    CHECK(c.documents[3].covariates.at("age") == 31.0);
    std::remove(path.c_str());
}

TEST_CASE("jsonl errors carry line numbers") {
    auto path = temp_path("bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"a","text":"ok"})" << "\n";
        out << "{broken\n";
    }
    try {
        ingest(path, FileFormat::jsonl, RoleMap{});
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::remove(path.c_str());

    auto path2 = temp_path("dup.jsonl");
    {
        std::ofstream out(path2);
        out << R"({"id":"a","text":"x"})" << "\n";
        out << R"({"id":"a","text":"y"})" << "\n";
    }
    CHECK_THROWS_AS(ingest(path2, FileFormat::jsonl, RoleMap{}), ContractError);
    std::remove(path2.c_str());
}

TEST_CASE("csv ingest honors the role map") {
    auto path = temp_path("roles.csv");
    {
        std::ofstream out(path);
        out << "rid,body,arm,score,age\n";
        out << "a,\"hello, quoted world\",1,0.5,30\n";
        out << "b,plain text,0,,41\n";
    }
    RoleMap roles;
    roles.id_col = "rid";
    roles.text_col = "body";
    roles.treatment_col = "arm";
    roles.outcome_col = "score";
    roles.covariate_cols = {"age"};
    Corpus c = ingest(path, FileFormat::csv, roles);
    REQUIRE(c.size() == 2);
    CHECK(c.documents[0].text == "hello, quoted world");
    CHECK(*c.documents[0].treatment == 1.0);
    CHECK(*c.documents[0].outcome == 0.5);
    CHECK(!c.documents[1].outcome.has_value());
    CHECK(c.documents[1].covariates.at("age") == 41.0);

    RoleMap missing = roles;
    missing.outcome_col = "reward";
    try {
        ingest(path, FileFormat::csv, missing);
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("reward") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("large ingest keeps every record") {
    auto path = temp_path("large.jsonl");
    {
        std::ofstream out(path);
        for (int i = 0; i < 113424; i++)
            out << "{\"id\":\"c" << i << "\",\"text\":\"complaint about a loan\"}\n";
    }
    Corpus c = ingest(path, FileFormat::jsonl, RoleMap{});
    CHECK(c.size() == 113424);
    std::remove(path.c_str());
}

TEST_CASE("standardize: two-point column and constant column") {
    Eigen::MatrixXd m(2, 2);
    m << 0, 1,
         2, 1;
    auto r = standardize(m);
    CHECK(r.x(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.x(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.x(0, 1) == 0.0);
    CHECK(r.x(1, 1) == 0.0);
    REQUIRE(r.zero_variance.size() == 1);
    CHECK(r.zero_variance[0] == 1);
}

TEST_CASE("standardize: moments and idempotence on random counts") {
    auto eng = make_engine(42);
    std::poisson_distribution<int> pois(3.0);
    Eigen::MatrixXd m(40, 7);
    for (int i = 0; i < 40; i++)
        for (int j = 0; j < 7; j++) m(i, j) = pois(eng);
    auto r = standardize(m);
    REQUIRE(r.zero_variance.empty());
    for (int j = 0; j < 7; j++) {
        // recompute the moments from scratch
        double mean = 0, var = 0;
        for (int i = 0; i < 40; i++) mean += r.x(i, j);
        mean /= 40;
        for (int i = 0; i < 40; i++) var += (r.x(i, j) - mean) * (r.x(i, j) - mean);
        var /= 40;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-12);
    }
    auto r2 = standardize(r.x);
    CHECK((r2.x - r.x).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("subset preserves order, vocabulary, and metadata") {
    Corpus c;
    c.documents.push_back({"a", "alpha words here", {}, 1.0, {}});
    c.documents.push_back({"b", "beta words here", {}, 0.0, {}});
    c.documents.push_back({"c", "gamma words here", {}, 1.0, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    Corpus s = t.subset({"c", "a"});
    REQUIRE(s.size() == 2);
    CHECK(s.documents[0].id == "a");  // corpus order, not request order
    CHECK(s.documents[1].id == "c");
    CHECK(s.vocabulary == t.vocabulary);
    CHECK(s.rows[0] == t.rows[0]);
    CHECK(s.rows[1] == t.rows[2]);
    CHECK_THROWS_AS(t.subset({"nope"}), ContractError);
}

TEST_CASE("corpus round-trips through its file format") {
    Corpus c;
    c.text_role = TextRole::outcome;
    c.documents.push_back({"a", "alpha words here", {{"age", 30.0}}, 1.0, 0.25});
    c.documents.push_back({"b", "beta words here too", {}, 0.0, {}});
    Corpus t = tokenize(std::move(c), loose_config());
    auto path = temp_path("corpus.json");
    save_corpus(path, t);
    Corpus back = load_corpus(path);
    CHECK(back.size() == t.size());
    CHECK(back.text_role == t.text_role);
    CHECK(back.vocabulary == t.vocabulary);
    CHECK(back.rows == t.rows);
    CHECK(back.documents[0].covariates.at("age") == 30.0);
    CHECK(*back.documents[0].outcome == 0.25);
    CHECK(*back.tok_config == *t.tok_config);
    std::remove(path.c_str());
}

TEST_SUITE_END();
