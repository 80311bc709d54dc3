#pragma once

#include <cstddef>
#include <vector>

namespace textcausal::stats {

double mean(const std::vector<double>& x);
// Unbiased sample variance (n-1 denominator); 0 for n < 2.
double sample_variance(const std::vector<double>& x);
double sample_sd(const std::vector<double>& x);

// Type-7 quantile (linear interpolation between order statistics), p in [0,1].
double quantile(std::vector<double> x, double p);

double normal_cdf(double z);

// Digamma via upward recurrence into the asymptotic series.
double digamma(double x);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double reg_inc_beta(double a, double b, double x);

// Two-sided p-value for a Student-t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
};

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Benjamini-Hochberg adjusted p-values, clipped to [0, 1].
std::vector<double> benjamini_hochberg(const std::vector<double>& p);

}  // namespace textcausal::stats
