#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace textcausal {

enum class TextRole { none, outcome, treatment };
enum class FileFormat { jsonl, csv };

struct Document {
    std::string id;
    std::string text;
    std::map<std::string, double> covariates;
    std::optional<double> treatment;
    std::optional<double> outcome;
};

struct TokenizerConfig {
    std::string stemmer = "porter1980";  // "porter1980" | "none"
    bool remove_stopwords = true;
    std::vector<std::string> extra_stopwords;
    bool drop_numeric = true;
    int min_token_length = 2;
    int min_doc_count = 2;          // drop terms seen in fewer docs
    double max_doc_fraction = 0.99; // drop terms seen in more than this share

    bool operator==(const TokenizerConfig&) const = default;
};

// Sparse doc-term matrix rides along with the documents.  rows[i] holds
// (term index, count) pairs sorted by term index; empty docs keep a zero
// row so metadata alignment never breaks.
struct Corpus {
    std::vector<Document> documents;
    TextRole text_role = TextRole::none;

    std::vector<std::string> vocabulary;  // sorted, unique
    std::vector<std::vector<std::pair<int, int>>> rows;
    std::optional<TokenizerConfig> tok_config;
    std::vector<std::string> empty_doc_ids;

    std::size_t size() const { return documents.size(); }
    bool has_dtm() const { return tok_config.has_value(); }
    int vocab_index(const std::string& term) const;  // -1 if absent
    long long row_total(std::size_t i) const;
    std::size_t index_of(const std::string& id) const;  // throws ContractError
    // Subset by id, preserving this corpus' document order and the full
    // vocabulary (so models fitted on different subsets stay column-aligned).
    Corpus subset(const std::vector<std::string>& ids) const;
};

struct RoleMap {
    std::string id_col = "id";
    std::string text_col = "text";
    std::vector<std::string> covariate_cols;
    std::string treatment_col;  // empty = not present
    std::string outcome_col;
    TextRole text_role = TextRole::none;
};

Corpus ingest(const std::string& path, FileFormat fmt, const RoleMap& roles);

std::vector<std::string> tokenize_text(const std::string& raw, const TokenizerConfig& cfg);
Corpus tokenize(Corpus corpus, const TokenizerConfig& cfg);

struct StandardizeResult {
    Eigen::MatrixXd x;
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;  // 1/sd (population), 0 for degenerate columns
    std::vector<int> zero_variance;
};

StandardizeResult standardize(const Eigen::MatrixXd& m);
StandardizeResult standardize(const Corpus& c);
Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean,
                                      const Eigen::VectorXd& scale);
Eigen::MatrixXd dense_dtm(const Corpus& c);

void save_corpus(const std::string& path, const Corpus& c);
Corpus load_corpus(const std::string& path);

}  // namespace textcausal
