#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace poinv::normal {

inline double pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Density of N(mean, var) at x. var must be positive.
inline double density(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// P(X < x) for X ~ N(mean, sd^2); a step function when sd == 0.
inline double cdf_at(double x, double mean, double sd) {
    if (sd <= 0) return x > mean ? 1.0 : 0.0;
    return cdf((x - mean) / sd);
}

/// E[X^+] for X ~ N(mean, sd^2).
inline double positive_part_mean(double mean, double sd) {
    if (sd <= 0) return std::max(mean, 0.0);
    const double z = mean / sd;
    return mean * cdf(z) + sd * pdf(z);
}

/// E[h(X)] for X ~ N(mean, sd^2) and h(x) = pos*x^+ + neg*x^-.
inline double expected_piecewise_linear(double mean, double sd, double pos, double neg) {
    return (pos + neg) * positive_part_mean(mean, sd) - neg * mean;
}

}  // namespace poinv::normal
