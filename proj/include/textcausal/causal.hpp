#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace textcausal {

enum class Estimand { ate, amce, acie };
enum class WeightMode { empirical, uniform };

struct EffectRequest {
    Estimand estimand = Estimand::ate;
    int k = 0;
    int l = -1;  // second index, interactions only
    WeightMode m = WeightMode::empirical;
    int bootstrap_b = 0;
    std::uint64_t seed = 0;
};

struct CausalEstimate {
    Estimand estimand = Estimand::ate;
    int k = -1, l = -1;
    double point = 0.0;
    double se = 0.0;  // analytic (Neyman for ATE, regression otherwise)
    double ci_low = 0.0, ci_high = 0.0;
    double p_value = 1.0;
    std::optional<double> p_bh;
    int b = 0;
    long long degenerate_redraws = 0;
    std::string lock_state = "unrecorded";  // stamped by the pipeline, kept verbatim
    std::vector<std::string> warnings;
};

struct BootstrapResult {
    double se = 0.0, ci_low = 0.0, ci_high = 0.0;
    long long degenerate_redraws = 0;
};

// B document-level resamples with replacement, percentile 2.5/97.5 interval.
// The statistic may refuse a resample (nullopt); the replicate redraws from
// its own derived stream, so results never depend on thread count.
BootstrapResult bootstrap(
    const std::function<std::optional<double>(const std::vector<std::size_t>&)>& statistic,
    std::size_t n, int b, std::uint64_t seed);

CausalEstimate estimate_ate(const Eigen::MatrixXd& theta, const std::vector<int>& t, int k,
                            int bootstrap_b = 0, std::uint64_t seed = 0);

CausalEstimate estimate_amce(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k,
                             WeightMode m = WeightMode::empirical, int bootstrap_b = 0,
                             std::uint64_t seed = 0);

CausalEstimate estimate_acie(const Eigen::VectorXd& y, const Eigen::MatrixXi& z, int k, int l,
                             WeightMode m = WeightMode::empirical, int bootstrap_b = 0,
                             std::uint64_t seed = 0);

// display label with 1-based indices: ATE_1, AMCE_2, ACIE_1_2
std::string effect_label(const CausalEstimate& e);

// Benjamini-Hochberg over the p_value fields, results into p_bh
void apply_bh(std::vector<CausalEstimate>& estimates);

void effects_to_csv(const std::vector<CausalEstimate>& estimates, const std::string& path);

}  // namespace textcausal
