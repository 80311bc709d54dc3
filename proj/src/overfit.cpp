#include "textcausal/overfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "textcausal/corpus.hpp"
#include "textcausal/errors.hpp"
#include "textcausal/parallel.hpp"
#include "textcausal/rng.hpp"
#include "textcausal/split.hpp"
#include "textcausal/stats.hpp"

namespace textcausal {

namespace {

constexpr int kFeatureDim = 8;

// Welch p for one summary over the given units; 1.0 when an arm is too
// thin to test (possible only for tiny unit counts).
double arm_p(const Eigen::VectorXd& score, const std::vector<int>& t,
             const std::vector<int>& keep) {
    std::vector<double> a, b;
    for (int i : keep) (t[i] ? a : b).push_back(score(i));
    if (a.size() < 2 || b.size() < 2) return 1.0;
    return stats::welch_t_test(a, b).p;
}

}  // namespace

OverfitReport overfit_demo(int n_units, int n_noise_gs, std::uint64_t seed, int n_reps) {
    if (n_units < 8) throw ContractError("overfit demo needs at least 8 units");
    if (n_noise_gs < 1) throw ContractError("overfit demo needs at least one candidate summary");
    if (n_reps < 1) throw ContractError("overfit demo needs at least one replication");

    std::vector<char> same(n_reps, 0), held(n_reps, 0), spent(n_reps, 0);

    parallel_chunks((std::size_t)n_reps, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; r++) {
            const std::uint64_t rep_seed = derive_seed(seed, r);
            auto eng = make_engine(rep_seed, 0);
            std::normal_distribution<double> gauss;

            // features and treatment drawn independently: pure noise
            Eigen::MatrixXd x(n_units, kFeatureDim);
            for (int i = 0; i < n_units; i++)
                for (int j = 0; j < kFeatureDim; j++) x(i, j) = gauss(eng);
            std::vector<int> order(n_units);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), eng);
            std::vector<int> t(n_units, 0);
            for (int i = 0; i < n_units / 2; i++) t[order[i]] = 1;

            // candidate summaries: random directions through feature space
            Eigen::MatrixXd w(kFeatureDim, n_noise_gs);
            for (int j = 0; j < kFeatureDim; j++)
                for (int g = 0; g < n_noise_gs; g++) w(j, g) = gauss(eng);
            Eigen::MatrixXd score = x * w;

            std::vector<int> everyone(n_units);
            std::iota(everyone.begin(), everyone.end(), 0);

            // analyst A: selection and test share the whole sample
            double best = 2.0;
            for (int g = 0; g < n_noise_gs; g++)
                best = std::min(best, arm_p(score.col(g), t, everyone));
            same[r] = best < 0.05;

            // analyst B: select on the training half, spend the lock, test once
            Corpus c;
            for (int i = 0; i < n_units; i++) {
                Document d;
                d.id = "u" + std::to_string(i);
                d.text = "respondent " + std::to_string(i);
                c.documents.push_back(std::move(d));
            }
            auto assign = split(c, 0.5, "", derive_seed(rep_seed, 1));
            TestLock lock = make_lock(assign);
            std::vector<int> train, test;
            for (const auto& id : assign.train_ids) train.push_back(std::stoi(id.substr(1)));
            for (const auto& id : assign.test_ids) test.push_back(std::stoi(id.substr(1)));

            int pick = 0;
            double pick_p = 2.0;
            for (int g = 0; g < n_noise_gs; g++) {
                double p = arm_p(score.col(g), t, train);
                if (p < pick_p) {
                    pick_p = p;
                    pick = g;
                }
            }
            lock = consume_lock(lock, "overfit replication " + std::to_string(r));
            spent[r] = lock.consumed;
            held[r] = arm_p(score.col(pick), t, test) < 0.05;
        }
    });

    OverfitReport rep;
    rep.n_units = n_units;
    rep.n_noise_gs = n_noise_gs;
    rep.n_reps = n_reps;
    for (int r = 0; r < n_reps; r++) {
        rep.same_sample_rate += same[r];
        rep.split_sample_rate += held[r];
        rep.locks_consumed += spent[r];
    }
    rep.same_sample_rate /= n_reps;
    rep.split_sample_rate /= n_reps;
    return rep;
}

}  // namespace textcausal
