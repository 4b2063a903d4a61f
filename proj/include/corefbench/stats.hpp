#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace corefbench {

/// Seed-wise sample statistics after optional convergence filtering.
/// std_dev uses the sample (n-1) denominator and is absent for n < 2.
struct SampleStats {
    std::size_t n = 0;        // survivors
    std::size_t n_total = 0;  // before filtering
    std::optional<double> mean;
    std::optional<double> std_dev;
    std::optional<double> max;
};

SampleStats aggregate_values(const std::vector<double>& values, std::size_t n_total);

struct TTestResult {
    double t_statistic = 0.0;
    std::size_t degrees_of_freedom = 0;
    double two_tailed_p = 1.0;
    bool degenerate = false;  // both samples constant
};

/// Student's two-sample t-test with pooled variance (similar variances,
/// unequal sample sizes allowed). Identical constant samples give t = 0,
/// p = 1; constant samples with different means give p = 0 with the
/// degenerate flag set. Requires at least two values per sample.
TTestResult t_test_pooled(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta function I_x(a, b) via the continued-fraction
/// expansion (modified Lentz), absolute tolerance 1e-12.
double regularized_incomplete_beta(double x, double a, double b);

/// Two-tailed p-value of the t distribution: I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_tailed_p(double t, std::size_t degrees_of_freedom);

struct SignificanceCell {
    std::optional<TTestResult> test;
    bool significant = false;
    bool untestable = false;  // fewer than two values on either side
};

struct SignificanceTable {
    std::vector<std::string> names;
    std::vector<std::vector<SignificanceCell>> cells;  // symmetric
    double alpha = 0.05;
};

SignificanceTable significance_matrix(
    const std::vector<std::pair<std::string, std::vector<double>>>& groups,
    double alpha = 0.05);

}  // namespace corefbench
