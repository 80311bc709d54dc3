#include "textcausal/split.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "textcausal/digest.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/rng.hpp"

using nlohmann::json;

namespace textcausal {

namespace {

std::string format_stratum(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

SplitAssignment split(const Corpus& corpus, double proportion, const std::string& strata,
                      std::uint64_t seed) {
    if (!(proportion > 0.0 && proportion < 1.0))
        throw ContractError("split: proportion must lie strictly between 0 and 1");
    if (corpus.size() < 2) throw ContractError("split: need at least 2 documents");

    // group doc indices by stratum value (single group when unstratified)
    std::map<std::string, std::vector<std::size_t>> groups;
    if (strata.empty()) {
        auto& g = groups[""];
        for (std::size_t i = 0; i < corpus.size(); i++) g.push_back(i);
    } else {
        for (std::size_t i = 0; i < corpus.size(); i++) {
            auto it = corpus.documents[i].covariates.find(strata);
            if (it == corpus.documents[i].covariates.end())
                throw ContractError("split: document '" + corpus.documents[i].id +
                                    "' lacks stratum covariate '" + strata + "'");
            groups[format_stratum(it->second)].push_back(i);
        }
    }

    std::vector<char> in_train(corpus.size(), 0);
    for (auto& [key, members] : groups) {
        if (members.size() < 2)
            throw ContractError("split: stratum '" + (key.empty() ? "(all)" : key) +
                                "' has fewer than 2 documents");
        // floor + seeded lottery on the fractional remainder keeps counts
        // exactly reproducible for a given seed
        auto eng = make_engine(seed, splitmix64(std::hash<std::string>{}(key) + 0x9e37));
        double target = proportion * (double)members.size();
        std::size_t n_train = (std::size_t)target;
        double frac = target - (double)n_train;
        if (std::uniform_real_distribution<double>(0.0, 1.0)(eng) < frac) n_train++;
        if (n_train == 0) n_train = 1;  // both sides need at least one doc
        if (n_train == members.size()) n_train--;

        std::vector<std::size_t> shuffled = members;
        std::shuffle(shuffled.begin(), shuffled.end(), eng);
        for (std::size_t i = 0; i < n_train; i++) in_train[shuffled[i]] = 1;
    }

    SplitAssignment a;
    a.proportion = proportion;
    a.strata = strata;
    a.seed = seed;
    for (std::size_t i = 0; i < corpus.size(); i++) {
        if (in_train[i])
            a.train_ids.push_back(corpus.documents[i].id);
        else
            a.test_ids.push_back(corpus.documents[i].id);
    }
    a.test_digest = compute_test_digest(corpus, a.test_ids);
    return a;
}

std::string compute_test_digest(const Corpus& corpus, const std::vector<std::string>& test_ids) {
    std::unordered_map<std::string_view, const Document*> by_id;
    for (auto& d : corpus.documents) by_id[d.id] = &d;
    std::vector<std::string_view> fields;
    fields.reserve(2 * test_ids.size());
    for (auto& id : test_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ContractError("unknown document id: " + id);
        fields.emplace_back(it->second->id);
        fields.emplace_back(it->second->text);
    }
    return sha256_hex_fields(fields);
}

TestLock make_lock(const SplitAssignment& a) {
    TestLock lock;
    lock.digest = a.test_digest;
    return lock;
}

TestLock consume_lock(TestLock lock, const std::string& fingerprint) {
    if (lock.consumed)
        throw LockError("test set already used (consumed " + lock.consumed_at + " by '" +
                        lock.fingerprint + "')");
    lock.consumed = true;
    lock.consumed_at = utc_now();
    lock.fingerprint = fingerprint;
    return lock;
}

void verify_test_integrity(const Corpus& corpus, const SplitAssignment& a, const TestLock& lock) {
    if (lock.digest != a.test_digest)
        throw LockError("lock does not belong to this split (digest mismatch)");
    if (compute_test_digest(corpus, a.test_ids) != a.test_digest)
        throw LockError("test set modified since split (digest mismatch)");
}

void save_split(const std::string& path, const SplitAssignment& a) {
    json j{{"train_ids", a.train_ids}, {"test_ids", a.test_ids}, {"proportion", a.proportion},
           {"strata", a.strata},       {"seed", a.seed},         {"digest", a.test_digest}};
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write " + path);
    out << j.dump(2) << "\n";
}

SplitAssignment load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ContractError(path + ": not a split file (" + e.what() + ")");
    }
    SplitAssignment a;
    a.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    a.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    a.proportion = j.at("proportion").get<double>();
    a.strata = j.value("strata", "");
    a.seed = j.at("seed").get<std::uint64_t>();
    a.test_digest = j.at("digest").get<std::string>();
    return a;
}

void save_lock(const std::string& path, const TestLock& lock) {
    json j{{"digest", lock.digest},
           {"consumed", lock.consumed},
           {"consumed_at", lock.consumed_at},
           {"fingerprint", lock.fingerprint}};
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ContractError("cannot write " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ContractError("cannot replace " + path);
}

TestLock load_lock(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LockError("no test lock at " + path + " (run split first)");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw LockError(path + ": not a lock file (" + e.what() + ")");
    }
    TestLock lock;
    lock.digest = j.at("digest").get<std::string>();
    lock.consumed = j.at("consumed").get<bool>();
    lock.consumed_at = j.value("consumed_at", "");
    lock.fingerprint = j.value("fingerprint", "");
    return lock;
}

}  // namespace textcausal
