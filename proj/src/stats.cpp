#include "textcausal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "textcausal/errors.hpp"

namespace textcausal::stats {

double mean(const std::vector<double>& x) {
    if (x.empty()) throw ContractError("mean of empty vector");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(n - 1);
}

double sample_sd(const std::vector<double>& x) { return std::sqrt(sample_variance(x)); }

double digamma(double x) {
    if (!(x > 0.0)) throw ContractError("digamma needs x > 0");
    double r = 0.0;
    while (x < 10.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    // ln x - 1/2x - B_2n/(2n x^2n) series through x^-10
    r += std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12 -
                 inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))));
    return r;
}

double quantile(std::vector<double> x, double p) {
    if (x.empty()) throw ContractError("quantile of empty vector");
    if (p <= 0.0) return *std::min_element(x.begin(), x.end());
    if (p >= 1.0) return *std::max_element(x.begin(), x.end());
    std::sort(x.begin(), x.end());
    const double h = p * static_cast<double>(x.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const double w = h - static_cast<double>(lo);
    return (1.0 - w) * x[lo] + w * x[hi];
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Lentz continued fraction for the incomplete beta function.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ContractError("t-test needs positive degrees of freedom");
    const double x = df / (df + t * t);
    return reg_inc_beta(0.5 * df, 0.5, x);
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw ContractError("welch_t_test needs >=2 per group");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double va = sample_variance(a) / na, vb = sample_variance(b) / nb;
    WelchResult r;
    const double se2 = va + vb;
    if (se2 <= 0.0) {  // both groups constant
        r.t = (mean(a) == mean(b)) ? 0.0 : std::numeric_limits<double>::infinity();
        r.df = na + nb - 2.0;
        r.p = r.t == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = (mean(a) - mean(b)) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

std::vector<double> benjamini_hochberg(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
    std::vector<double> adj(m, 0.0);
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const double q = p[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
        running = std::min(running, q);
        adj[order[r]] = std::min(1.0, running);
    }
    return adj;
}

}  // namespace textcausal::stats
