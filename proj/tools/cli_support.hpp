#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "textcausal/causal.hpp"

namespace textcausal::cli {

std::string now_utc();
std::string read_file(const std::string& path);
std::string file_sha256(const std::string& path);

// Everything a command writes goes through one of these: inputs are
// digested into run.json, outputs are tracked so a failed run can sweep
// its partial files, and run.json lands last.
class RunDir {
  public:
    RunDir(std::string dir, std::string command);
    std::string path(const std::string& name) const;
    void write(const std::string& name, const std::string& content);
    void note_output(const std::string& name);  // for files written by library savers
    void input(const std::string& key, const std::string& file_path);
    nlohmann::json& config() { return run_["config"]; }
    void set_lock_state(const std::string& s) { run_["lock_state"] = s; }
    void add_warning(const std::string& w);
    void summary(const std::string& key, const nlohmann::json& v) { run_["summary"][key] = v; }
    void finish();
    void discard() noexcept;
    const std::string& dir() const { return dir_; }

  private:
    std::string dir_, command_;
    nlohmann::json run_;
    std::vector<std::string> tracked_;
};

// Human names for topic/feature indices, keyed 1-based to match the
// printed labels (ATE_1, AMCE_2, ...).  File format: one `index=name`
// per line, '#' comments.
struct LabelRegistry {
    std::map<int, std::string> names;
    std::string prefix = "Topic";

    static LabelRegistry from_file(const std::string& path, const std::string& prefix);
    std::string label(int one_based) const;
};

// Point + CI segment per estimand against a zero reference line.
std::string svg_effect_plot(const std::vector<CausalEstimate>& effects,
                            const LabelRegistry& labels);

std::vector<int> parse_int_list(const std::string& csv, const std::string& what);
std::vector<std::string> parse_name_list(const std::string& csv);

}  // namespace textcausal::cli
