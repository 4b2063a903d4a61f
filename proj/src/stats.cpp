#include "corefbench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace corefbench {

SampleStats aggregate_values(const std::vector<double>& values, std::size_t n_total) {
    SampleStats stats;
    stats.n = values.size();
    stats.n_total = n_total;
    if (values.empty()) return stats;
    double sum = 0.0;
    double mx = values[0];
    for (double v : values) {
        sum += v;
        mx = std::max(mx, v);
    }
    const double mean = sum / static_cast<double>(values.size());
    stats.mean = mean;
    stats.max = mx;
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        stats.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return stats;
}

namespace {

constexpr double kBetaCfTol = 1e-12;
constexpr int kBetaCfMaxIter = 500;

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double x, double a, double b) {
    const double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaCfMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kBetaCfTol) return h;
    }
    throw std::runtime_error("regularized_incomplete_beta: continued fraction did not converge");
}

double sample_variance(const std::vector<double>& xs, double mean) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(xs.size() - 1);
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (a <= 0.0 || b <= 0.0) {
        throw std::invalid_argument("regularized_incomplete_beta: a and b must be positive");
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
        b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(x, a, b) / a;
    }
    return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_two_tailed_p(double t, std::size_t degrees_of_freedom) {
    if (degrees_of_freedom == 0) {
        throw std::invalid_argument("student_t_two_tailed_p: zero degrees of freedom");
    }
    if (t == 0.0) return 1.0;
    const double df = static_cast<double>(degrees_of_freedom);
    const double x = df / (df + t * t);
    return regularized_incomplete_beta(x, df / 2.0, 0.5);
}

TTestResult t_test_pooled(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("t_test_pooled: both samples need at least two values");
    }
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    TTestResult result;
    result.degrees_of_freedom = n1 + n2 - 2;
    const double mean_a = mean_of(a);
    const double mean_b = mean_of(b);
    const double var_a = sample_variance(a, mean_a);
    const double var_b = sample_variance(b, mean_b);
    const double pooled =
        ((static_cast<double>(n1 - 1)) * var_a + (static_cast<double>(n2 - 1)) * var_b) /
        static_cast<double>(result.degrees_of_freedom);

    if (pooled == 0.0) {
        result.degenerate = true;
        if (mean_a == mean_b) {
            result.t_statistic = 0.0;
            result.two_tailed_p = 1.0;
        } else {
            result.t_statistic = mean_a > mean_b ? std::numeric_limits<double>::infinity()
                                                 : -std::numeric_limits<double>::infinity();
            result.two_tailed_p = 0.0;
        }
        return result;
    }

    const double se = std::sqrt(pooled * (1.0 / static_cast<double>(n1) +
                                          1.0 / static_cast<double>(n2)));
    result.t_statistic = (mean_a - mean_b) / se;
    result.two_tailed_p = student_t_two_tailed_p(result.t_statistic, result.degrees_of_freedom);
    return result;
}

SignificanceTable significance_matrix(
    const std::vector<std::pair<std::string, std::vector<double>>>& groups, double alpha) {
    if (groups.size() < 2) {
        throw std::invalid_argument("significance_matrix: need at least two groups");
    }
    SignificanceTable table;
    table.alpha = alpha;
    for (const auto& [name, values] : groups) table.names.push_back(name);
    table.cells.assign(groups.size(), std::vector<SignificanceCell>(groups.size()));
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            SignificanceCell cell;
            if (groups[i].second.size() < 2 || groups[j].second.size() < 2) {
                cell.untestable = true;
            } else {
                cell.test = t_test_pooled(groups[i].second, groups[j].second);
                cell.significant = cell.test->two_tailed_p < alpha;
            }
            table.cells[i][j] = cell;
            if (cell.test) {
                cell.test->t_statistic = -cell.test->t_statistic;  // antisymmetric t
            }
            table.cells[j][i] = cell;
        }
    }
    return table;
}

}  // namespace corefbench
