#include "textcausal/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/porter.hpp"
#include "textcausal/stopwords.hpp"

using nlohmann::json;

namespace textcausal {

int Corpus::vocab_index(const std::string& term) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
    if (it == vocabulary.end() || *it != term) return -1;
    return (int)(it - vocabulary.begin());
}

long long Corpus::row_total(std::size_t i) const {
    long long s = 0;
    for (auto& [t, c] : rows[i]) s += c;
    return s;
}

std::size_t Corpus::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < documents.size(); i++)
        if (documents[i].id == id) return i;
    throw ContractError("unknown document id: " + id);
}

Corpus Corpus::subset(const std::vector<std::string>& ids) const {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < documents.size(); i++) pos[documents[i].id] = i;
    std::vector<std::size_t> keep;
    keep.reserve(ids.size());
    for (auto& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw ContractError("unknown document id: " + id);
        keep.push_back(it->second);
    }
    std::sort(keep.begin(), keep.end());
    Corpus out;
    out.text_role = text_role;
    out.vocabulary = vocabulary;
    out.tok_config = tok_config;
    for (auto i : keep) {
        out.documents.push_back(documents[i]);
        if (has_dtm()) {
            out.rows.push_back(rows[i]);
            if (rows[i].empty()) out.empty_doc_ids.push_back(documents[i].id);
        }
    }
    return out;
}

// ---- ingestion ----

namespace {

std::optional<double> json_opt_number(const json& j, const char* key, int lineno) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number())
        throw ContractError("line " + std::to_string(lineno) + ": field '" + key +
                            "' is not a number");
    return j[key].get<double>();
}

Corpus ingest_jsonl(const std::string& path, const RoleMap& roles) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open " + path);
    Corpus c;
    c.text_role = roles.text_role;
    std::unordered_set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ContractError("line " + std::to_string(lineno) + ": malformed JSON (" +
                                e.what() + ")");
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("text") || !j["text"].is_string())
            throw ContractError("line " + std::to_string(lineno) +
                                ": record needs string fields 'id' and 'text'");
        Document d;
        d.id = j["id"].get<std::string>();
        d.text = j["text"].get<std::string>();
        if (!seen.insert(d.id).second)
            throw ContractError("line " + std::to_string(lineno) + ": duplicate id '" + d.id + "'");
        if (j.contains("covariates") && !j["covariates"].is_null()) {
            if (!j["covariates"].is_object())
                throw ContractError("line " + std::to_string(lineno) +
                                    ": 'covariates' must be an object");
            for (auto& [k, v] : j["covariates"].items()) {
                if (!v.is_number())
                    throw ContractError("line " + std::to_string(lineno) + ": covariate '" + k +
                                        "' is not a number");
                d.covariates[k] = v.get<double>();
            }
        }
        d.treatment = json_opt_number(j, "treatment", lineno);
        d.outcome = json_opt_number(j, "outcome", lineno);
        c.documents.push_back(std::move(d));
    }
    return c;
}

std::vector<std::string> parse_csv_line(const std::string& line, int lineno) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                quoted = false;
                i++;
            } else {
                field += ch;
                i++;
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
            i++;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
            i++;
        } else {
            field += ch;
            i++;
        }
    }
    if (quoted)
        throw ContractError("line " + std::to_string(lineno) + ": unterminated quote in CSV");
    out.push_back(std::move(field));
    return out;
}

double parse_number(const std::string& s, const std::string& col, int lineno) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ContractError("line " + std::to_string(lineno) + ": column '" + col +
                            "' value '" + s + "' is not a number");
    }
}

Corpus ingest_csv(const std::string& path, const RoleMap& roles) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ContractError(path + ": empty file, no header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = parse_csv_line(line, 1);
    std::unordered_map<std::string, int> col;
    for (int i = 0; i < (int)header.size(); i++) col[header[i]] = i;
    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw ContractError(path + ": missing column '" + name + "'");
        return it->second;
    };
    int id_ix = need(roles.id_col);
    int text_ix = need(roles.text_col);
    std::vector<std::pair<std::string, int>> cov_ix;
    for (auto& name : roles.covariate_cols) cov_ix.emplace_back(name, need(name));
    int treat_ix = roles.treatment_col.empty() ? -1 : need(roles.treatment_col);
    int out_ix = roles.outcome_col.empty() ? -1 : need(roles.outcome_col);

    Corpus c;
    c.text_role = roles.text_role;
    std::unordered_set<std::string> seen;
    int lineno = 1;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = parse_csv_line(line, lineno);
        if (cells.size() != header.size())
            throw ContractError("line " + std::to_string(lineno) + ": expected " +
                                std::to_string(header.size()) + " fields, got " +
                                std::to_string(cells.size()));
        Document d;
        d.id = cells[id_ix];
        d.text = cells[text_ix];
        if (d.id.empty()) throw ContractError("line " + std::to_string(lineno) + ": empty id");
        if (!seen.insert(d.id).second)
            throw ContractError("line " + std::to_string(lineno) + ": duplicate id '" + d.id + "'");
        for (auto& [name, ix] : cov_ix) d.covariates[name] = parse_number(cells[ix], name, lineno);
        if (treat_ix >= 0 && !cells[treat_ix].empty())
            d.treatment = parse_number(cells[treat_ix], roles.treatment_col, lineno);
        if (out_ix >= 0 && !cells[out_ix].empty())
            d.outcome = parse_number(cells[out_ix], roles.outcome_col, lineno);
        c.documents.push_back(std::move(d));
    }
    return c;
}

}  // namespace

Corpus ingest(const std::string& path, FileFormat fmt, const RoleMap& roles) {
    return fmt == FileFormat::jsonl ? ingest_jsonl(path, roles) : ingest_csv(path, roles);
}

// ---- tokenization ----

std::vector<std::string> tokenize_text(const std::string& raw, const TokenizerConfig& cfg) {
    // lowercase + strip: apostrophes deleted (so "don't" -> "dont"), any
    // other char outside [a-z0-9_] becomes a separator.
    std::string norm;
    norm.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); i++) {
        unsigned char ch = (unsigned char)raw[i];
        if (ch == '\'') continue;
        // utf-8 right single quote
        if (ch == 0xE2 && i + 2 < raw.size() && (unsigned char)raw[i + 1] == 0x80 &&
            (unsigned char)raw[i + 2] == 0x99) {
            i += 2;
            continue;
        }
        if (ch >= 'A' && ch <= 'Z')
            norm += (char)(ch - 'A' + 'a');
        else if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_')
            norm += (char)ch;
        else
            norm += ' ';
    }

    const auto& stop = english_stopwords();
    std::unordered_set<std::string> extra(cfg.extra_stopwords.begin(), cfg.extra_stopwords.end());
    std::vector<std::string> out;
    std::istringstream ss(norm);
    std::string tok;
    while (ss >> tok) {
        if (cfg.drop_numeric &&
            std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
            continue;
        if (cfg.remove_stopwords && (stop.count(tok) || extra.count(tok))) continue;
        if (cfg.stemmer == "porter1980" &&
            std::all_of(tok.begin(), tok.end(), [](char c) { return c >= 'a' && c <= 'z'; }))
            tok = porter_stem(tok);
        if ((int)tok.size() < cfg.min_token_length) continue;
        out.push_back(tok);
    }
    return out;
}

Corpus tokenize(Corpus corpus, const TokenizerConfig& cfg) {
    if (corpus.documents.empty()) throw ContractError("tokenize: corpus has no documents");
    const std::size_t d = corpus.documents.size();
    std::vector<std::unordered_map<std::string, int>> counts(d);
    std::unordered_map<std::string, int> doc_freq;
    for (std::size_t i = 0; i < d; i++) {
        for (auto& t : tokenize_text(corpus.documents[i].text, cfg)) counts[i][t]++;
        for (auto& [t, n] : counts[i]) doc_freq[t]++;
    }

    std::vector<std::string> vocab;
    for (auto& [t, df] : doc_freq) {
        if (df < cfg.min_doc_count) continue;
        if ((double)df > cfg.max_doc_fraction * (double)d) continue;
        vocab.push_back(t);
    }
    if (vocab.empty())
        throw ContractError(
            "tokenize: vocabulary empty after pruning; loosen min_doc_count / max_doc_fraction");
    std::sort(vocab.begin(), vocab.end());

    std::unordered_map<std::string, int> vix;
    for (int i = 0; i < (int)vocab.size(); i++) vix[vocab[i]] = i;

    corpus.vocabulary = std::move(vocab);
    corpus.rows.assign(d, {});
    corpus.empty_doc_ids.clear();
    for (std::size_t i = 0; i < d; i++) {
        auto& row = corpus.rows[i];
        for (auto& [t, n] : counts[i]) {
            auto it = vix.find(t);
            if (it != vix.end()) row.emplace_back(it->second, n);
        }
        std::sort(row.begin(), row.end());
        if (row.empty()) corpus.empty_doc_ids.push_back(corpus.documents[i].id);
    }
    corpus.tok_config = cfg;
    return corpus;
}

// ---- standardization ----

StandardizeResult standardize(const Eigen::MatrixXd& m) {
    StandardizeResult r;
    const auto n = m.rows();
    r.mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - r.mean.transpose();
    Eigen::VectorXd var = centered.array().square().colwise().sum() / (double)n;
    r.scale.resize(m.cols());
    for (int j = 0; j < m.cols(); j++) {
        double sd = std::sqrt(var[j]);
        if (sd > 0) {
            r.scale[j] = 1.0 / sd;
        } else {
            r.scale[j] = 0.0;
            r.zero_variance.push_back(j);
        }
    }
    r.x = centered * r.scale.asDiagonal();
    return r;
}

StandardizeResult standardize(const Corpus& c) {
    if (!c.has_dtm()) throw ContractError("standardize: corpus has no document-term matrix");
    return standardize(dense_dtm(c));
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean,
                                      const Eigen::VectorXd& scale) {
    if (m.cols() != mean.size() || m.cols() != scale.size())
        throw ContractError("apply_standardization: column count mismatch");
    return (m.rowwise() - mean.transpose()) * scale.asDiagonal();
}

Eigen::MatrixXd dense_dtm(const Corpus& c) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero((Eigen::Index)c.size(), (Eigen::Index)c.vocabulary.size());
    for (std::size_t i = 0; i < c.rows.size(); i++)
        for (auto& [t, n] : c.rows[i]) m((Eigen::Index)i, t) = (double)n;
    return m;
}

// ---- persistence ----

namespace {

json config_to_json(const TokenizerConfig& cfg) {
    return json{{"stemmer", cfg.stemmer},
                {"remove_stopwords", cfg.remove_stopwords},
                {"extra_stopwords", cfg.extra_stopwords},
                {"drop_numeric", cfg.drop_numeric},
                {"min_token_length", cfg.min_token_length},
                {"min_doc_count", cfg.min_doc_count},
                {"max_doc_fraction", cfg.max_doc_fraction}};
}

TokenizerConfig config_from_json(const json& j) {
    TokenizerConfig cfg;
    cfg.stemmer = j.at("stemmer").get<std::string>();
    cfg.remove_stopwords = j.at("remove_stopwords").get<bool>();
    cfg.extra_stopwords = j.at("extra_stopwords").get<std::vector<std::string>>();
    cfg.drop_numeric = j.at("drop_numeric").get<bool>();
    cfg.min_token_length = j.at("min_token_length").get<int>();
    cfg.min_doc_count = j.at("min_doc_count").get<int>();
    cfg.max_doc_fraction = j.at("max_doc_fraction").get<double>();
    return cfg;
}

const char* role_name(TextRole r) {
    switch (r) {
        case TextRole::outcome: return "outcome";
        case TextRole::treatment: return "treatment";
        default: return "none";
    }
}

TextRole role_from_name(const std::string& s) {
    if (s == "outcome") return TextRole::outcome;
    if (s == "treatment") return TextRole::treatment;
    return TextRole::none;
}

}  // namespace

void save_corpus(const std::string& path, const Corpus& c) {
    json docs = json::array();
    for (auto& d : c.documents) {
        json jd{{"id", d.id}, {"text", d.text}};
        if (!d.covariates.empty()) jd["covariates"] = d.covariates;
        if (d.treatment) jd["treatment"] = *d.treatment;
        if (d.outcome) jd["outcome"] = *d.outcome;
        docs.push_back(std::move(jd));
    }
    json j{{"format_version", 1}, {"text_role", role_name(c.text_role)}, {"documents", std::move(docs)}};
    if (c.has_dtm()) {
        j["tokenizer"] = config_to_json(*c.tok_config);
        j["vocabulary"] = c.vocabulary;
        json rows = json::array();
        for (auto& row : c.rows) {
            json r = json::array();
            for (auto& [t, n] : row) r.push_back(json::array({t, n}));
            rows.push_back(std::move(r));
        }
        j["rows"] = std::move(rows);
    }
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write " + path);
    out << j.dump() << "\n";
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ContractError(path + ": not a corpus file (" + e.what() + ")");
    }
    Corpus c;
    c.text_role = role_from_name(j.value("text_role", "none"));
    for (auto& jd : j.at("documents")) {
        Document d;
        d.id = jd.at("id").get<std::string>();
        d.text = jd.at("text").get<std::string>();
        if (jd.contains("covariates"))
            d.covariates = jd["covariates"].get<std::map<std::string, double>>();
        if (jd.contains("treatment")) d.treatment = jd["treatment"].get<double>();
        if (jd.contains("outcome")) d.outcome = jd["outcome"].get<double>();
        c.documents.push_back(std::move(d));
    }
    if (j.contains("tokenizer")) {
        c.tok_config = config_from_json(j["tokenizer"]);
        c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        for (auto& jr : j.at("rows")) {
            std::vector<std::pair<int, int>> row;
            for (auto& p : jr) row.emplace_back(p[0].get<int>(), p[1].get<int>());
            c.rows.push_back(std::move(row));
        }
        for (std::size_t i = 0; i < c.rows.size(); i++)
            if (c.rows[i].empty()) c.empty_doc_ids.push_back(c.documents[i].id);
    }
    return c;
}

}  // namespace textcausal
