#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

// End-to-end runs of the installed binary.  TEXTCAUSAL_BIN is injected by the
// build so the tests always drive the executable they were built with.

namespace fs = std::filesystem;

namespace {

const std::string kBin = TEXTCAUSAL_BIN;

fs::path scratch_root() {
    static fs::path p = [] {
        fs::path root = fs::temp_directory_path() / "textcausal_cli_scratch";
        fs::remove_all(root);
        fs::create_directories(root);
        return root;
    }();
    return p;
}

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const fs::path& cwd, const std::string& args) {
    fs::path so = cwd / "_stdout", se = cwd / "_stderr";
    std::string cmd = "cd '" + cwd.string() + "' && '" + kBin + "' " + args + " >'" +
                      so.string() + "' 2>'" + se.string() + "'";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') n++;
    return n;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("demo pipeline, lock discipline and override") {
        fs::path wd = scratch_root() / "pipeline";
        fs::create_directories(wd);

        auto r = run(wd, "make-demo --out demo --n 400 --seed 5");
        REQUIRE(r.code == 0);
        CHECK(fs::exists(wd / "demo/demo.jsonl"));

        r = run(wd, "ingest --input demo/demo.jsonl --format jsonl --out corp "
                    "--treatment-col treatment --outcome-col outcome --text-role outcome");
        REQUIRE(r.code == 0);

        // default proportion is an even split
        r = run(wd, "split --corpus corp/corpus.json --out sp --seed 11");
        REQUIRE(r.code == 0);
        CHECK(r.out.find("200 train / 200 test") != std::string::npos);
        CHECK(fs::exists(wd / "sp/lock.json"));

        r = run(wd, "fit-stm --corpus corp/corpus.json --split sp/split.json --out stm "
                    "--k 4 --seed 3 --max-em-iters 60");
        REQUIRE(r.code == 0);
        CHECK(fs::exists(wd / "stm/topics.csv"));

        r = run(wd, "estimate --model stm/stm.json --corpus corp/corpus.json "
                    "--split sp/split.json --lock sp/lock.json --out est "
                    "--bootstrap 100 --seed 7");
        REQUIRE(r.code == 0);
        std::string effects = slurp(wd / "est/effects.csv");
        CHECK(count_lines(effects) == 5);  // header + one row per topic
        CHECK(effects.find("ATE") != std::string::npos);
        CHECK(effects.find("valid") != std::string::npos);
        std::string svg = slurp(wd / "est/effects.svg");
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("Topic 1") != std::string::npos);
        auto manifest = nlohmann::json::parse(slurp(wd / "est/run.json"));
        CHECK(manifest["lock_state"] == "valid");
        CHECK(manifest["inputs"].contains("lock"));

        // the lock is spent: a second pass must refuse
        r = run(wd, "estimate --model stm/stm.json --corpus corp/corpus.json "
                    "--split sp/split.json --lock sp/lock.json --out est2 "
                    "--bootstrap 100 --seed 7");
        CHECK(r.code == 3);
        CHECK(r.err.find("test set already used") != std::string::npos);
        CHECK(!fs::exists(wd / "est2/effects.csv"));

        // explicit override goes through, but everything is stamped
        r = run(wd, "estimate --model stm/stm.json --corpus corp/corpus.json "
                    "--split sp/split.json --lock sp/lock.json --out est3 "
                    "--bootstrap 100 --seed 7 --i-know-this-invalidates-inference");
        CHECK(r.code == 0);
        CHECK(slurp(wd / "est3/effects.csv").find("invalidated") != std::string::npos);
        auto m3 = nlohmann::json::parse(slurp(wd / "est3/run.json"));
        CHECK(m3["lock_state"] == "invalidated");
        CHECK(!m3["warnings"].empty());
    }

    TEST_CASE("apply-g without a lock and bad arguments") {
        fs::path wd = scratch_root() / "pipeline";  // reuses the fitted model
        REQUIRE(fs::exists(wd / "stm/stm.json"));

        auto r = run(wd, "apply-g --model stm/stm.json --corpus corp/corpus.json "
                         "--all --out th");
        CHECK(r.code == 0);
        std::string theta = slurp(wd / "th/theta.csv");
        CHECK(count_lines(theta) == 401);
        CHECK(theta.rfind("id,theta_1", 0) == 0);

        // --all with a lock is contradictory
        r = run(wd, "apply-g --model stm/stm.json --corpus corp/corpus.json --all "
                    "--split sp/split.json --lock sp/lock.json --out th_bad");
        CHECK(r.code == 2);

        // unknown flag is a usage error
        r = run(wd, "split --corpus corp/corpus.json --out spx --no-such-flag");
        CHECK(r.code == 2);

        // missing model file fails cleanly with no partial outputs
        r = run(wd, "estimate --model nowhere.json --corpus corp/corpus.json "
                    "--split sp/split.json --lock sp/lock.json --out estx");
        CHECK(r.code == 2);
        CHECK(!fs::exists(wd / "estx/effects.csv"));
    }

    TEST_CASE("aisv and overfit commands") {
        fs::path wd = scratch_root() / "demos";
        fs::create_directories(wd);

        auto r = run(wd, "aisv --design balanced --out av");
        REQUIRE(r.code == 0);
        auto j = nlohmann::json::parse(slurp(wd / "av/aisv.json"));
        CHECK(j["unstable"] == true);
        CHECK(j["category_sets"].size() == 3);
        CHECK(j["n_randomizations"] == 6);
        CHECK(!j["witnesses"].empty());

        r = run(wd, "overfit --units 64 --noise-gs 5 --reps 100 --seed 4 --out ov");
        REQUIRE(r.code == 0);
        auto o = nlohmann::json::parse(slurp(wd / "ov/overfit.json"));
        CHECK(o["locks_consumed"] == 100);
        CHECK(o["same_sample_rate"].get<double>() >= o["split_sample_rate"].get<double>());
    }
}
