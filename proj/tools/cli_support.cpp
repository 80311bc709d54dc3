#include "cli_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "textcausal/digest.hpp"
#include "textcausal/errors.hpp"

namespace textcausal::cli {

namespace fs = std::filesystem;

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ContractError("cannot read " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

RunDir::RunDir(std::string dir, std::string command)
    : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ContractError("cannot create output directory " + dir_ + ": " + ec.message());
    run_["command"] = command_;
    run_["created_utc"] = now_utc();
    run_["lock_state"] = "none";
    run_["warnings"] = nlohmann::json::array();
}

std::string RunDir::path(const std::string& name) const {
    return (fs::path(dir_) / name).string();
}

void RunDir::write(const std::string& name, const std::string& content) {
    note_output(name);
    std::ofstream f(path(name), std::ios::binary | std::ios::trunc);
    if (!f) throw ContractError("cannot write " + path(name));
    f << content;
    f.close();
    if (!f) throw ContractError("failed while writing " + path(name));
}

void RunDir::note_output(const std::string& name) {
    if (std::find(tracked_.begin(), tracked_.end(), name) == tracked_.end())
        tracked_.push_back(name);
}

void RunDir::input(const std::string& key, const std::string& file_path) {
    run_["inputs"][key] = {{"path", file_path}, {"sha256", file_sha256(file_path)}};
}

void RunDir::add_warning(const std::string& w) { run_["warnings"].push_back(w); }

void RunDir::finish() {
    run_["outputs"] = tracked_;
    write("run.json", run_.dump(2) + "\n");
}

void RunDir::discard() noexcept {
    for (const auto& n : tracked_) {
        std::error_code ec;
        fs::remove(path(n), ec);
    }
}

LabelRegistry LabelRegistry::from_file(const std::string& path, const std::string& prefix) {
    LabelRegistry r;
    r.prefix = prefix;
    if (path.empty()) return r;
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError("labels file " + path + " line " + std::to_string(lineno) +
                                ": expected index=name");
        int k = 0;
        try {
            std::size_t used = 0;
            k = std::stoi(line.substr(0, eq), &used);
        } catch (const std::exception&) {
            throw ContractError("labels file " + path + " line " + std::to_string(lineno) +
                                ": bad index");
        }
        std::string name = line.substr(eq + 1);
        auto b = name.find_first_not_of(" \t");
        auto e = name.find_last_not_of(" \t\r");
        name = b == std::string::npos ? "" : name.substr(b, e - b + 1);
        if (name.empty())
            throw ContractError("labels file " + path + " line " + std::to_string(lineno) +
                                ": empty name");
        r.names[k] = name;
    }
    return r;
}

std::string LabelRegistry::label(int one_based) const {
    auto it = names.find(one_based);
    if (it != names.end()) return it->second;
    return prefix + " " + std::to_string(one_based);
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// round a raw step to 1/2/5 x 10^m
double nice_step(double span, int target_ticks) {
    double raw = span / std::max(1, target_ticks);
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double r = raw / mag;
    double f = r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0;
    return f * mag;
}

}  // namespace

std::string svg_effect_plot(const std::vector<CausalEstimate>& effects,
                            const LabelRegistry& labels) {
    if (effects.empty()) throw ContractError("nothing to plot");
    const double row_h = 30.0, top = 36.0, bottom = 46.0;
    const double label_w = 190.0, plot_w = 430.0, right = 20.0;
    const double width = label_w + plot_w + right;
    const double height = top + row_h * effects.size() + bottom;

    double lo = 0.0, hi = 0.0;
    for (const auto& e : effects) {
        lo = std::min({lo, e.ci_low, e.point});
        hi = std::max({hi, e.ci_high, e.point});
    }
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto x_of = [&](double v) { return label_w + (v - lo) / (hi - lo) * plot_w; };

    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    s << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << label_w << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
         "fill=\"#222\">Estimated effects with 95% intervals</text>\n";

    // axis ticks
    const double step = nice_step(hi - lo, 6);
    double tick = std::ceil(lo / step) * step;
    const double axis_y = top + row_h * effects.size() + 8;
    for (; tick <= hi + 1e-12; tick += step) {
        double x = x_of(tick);
        s << "<line x1=\"" << x << "\" y1=\"" << top - 6 << "\" x2=\"" << x << "\" y2=\""
          << axis_y - 8 << "\" stroke=\"#eee\"/>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", tick + 0.0);
        s << "<text x=\"" << x << "\" y=\"" << axis_y + 6
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555\" "
             "text-anchor=\"middle\">"
          << buf << "</text>\n";
    }
    // zero reference
    if (lo < 0.0 && hi > 0.0) {
        double x = x_of(0.0);
        s << "<line x1=\"" << x << "\" y1=\"" << top - 6 << "\" x2=\"" << x << "\" y2=\""
          << axis_y - 8 << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    }

    for (std::size_t i = 0; i < effects.size(); i++) {
        const auto& e = effects[i];
        const double y = top + row_h * (i + 0.5);
        int idx = e.k + 1;
        std::string text = effect_label(e) + "  " + labels.label(idx);
        if (e.estimand == Estimand::acie) text = effect_label(e);
        s << "<text x=\"" << label_w - 10 << "\" y=\"" << y + 4
          << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\" "
             "text-anchor=\"end\">"
          << xml_escape(text) << "</text>\n";
        s << "<line x1=\"" << x_of(e.ci_low) << "\" y1=\"" << y << "\" x2=\"" << x_of(e.ci_high)
          << "\" y2=\"" << y << "\" stroke=\"#1f5fa8\" stroke-width=\"2\"/>\n";
        s << "<circle cx=\"" << x_of(e.point) << "\" cy=\"" << y
          << "\" r=\"4\" fill=\"#1f5fa8\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& what) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ContractError("bad " + what + " entry '" + item + "' (expected an integer)");
        }
    }
    if (out.empty()) throw ContractError("empty " + what + " list");
    return out;
}

std::vector<std::string> parse_name_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace textcausal::cli
