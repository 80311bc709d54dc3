#include "doctest.h"
#include "textcausal/errors.hpp"
#include "textcausal/overfit.hpp"

using namespace textcausal;

TEST_SUITE_BEGIN("overfit");

TEST_CASE("shopping across fifty noise summaries inflates only the shared-sample rate") {
    auto rep = overfit_demo(100, 50, 7, 1000);
    CHECK(rep.n_reps == 1000);
    CHECK(rep.same_sample_rate > 0.3);
    CHECK(rep.split_sample_rate >= 0.03);
    CHECK(rep.split_sample_rate <= 0.07);
    CHECK(rep.same_sample_rate > rep.split_sample_rate);
    // one lock per replication, spent exactly once
    CHECK(rep.locks_consumed == 1000);
}

TEST_CASE("a single candidate leaves both rates at the nominal level") {
    auto rep = overfit_demo(100, 1, 11, 1000);
    // 0.05 within a generous Monte-Carlo margin (3+ SE at 1000 reps)
    CHECK(rep.same_sample_rate > 0.025);
    CHECK(rep.same_sample_rate < 0.075);
    CHECK(rep.split_sample_rate > 0.025);
    CHECK(rep.split_sample_rate < 0.075);
}

TEST_CASE("rates are a pure function of the seed") {
    auto a = overfit_demo(60, 20, 42, 300);
    auto b = overfit_demo(60, 20, 42, 300);
    CHECK(a.same_sample_rate == b.same_sample_rate);
    CHECK(a.split_sample_rate == b.split_sample_rate);
    CHECK(a.locks_consumed == b.locks_consumed);
    auto c = overfit_demo(60, 20, 43, 300);
    bool moved = c.same_sample_rate != a.same_sample_rate ||
                 c.split_sample_rate != a.split_sample_rate;
    CHECK(moved);
}

TEST_CASE("degenerate arguments are refused") {
    CHECK_THROWS_AS(overfit_demo(4, 10, 1, 10), ContractError);
    CHECK_THROWS_AS(overfit_demo(100, 0, 1, 10), ContractError);
    CHECK_THROWS_AS(overfit_demo(100, 10, 1, 0), ContractError);
}

TEST_SUITE_END();
