#pragma once

#include "poinv/config.hpp"
#include "poinv/env.hpp"
#include "poinv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace poinv {

class FilterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Posterior density of the inventory level sampled on a uniform grid.
 *
 * The support is the contiguous index span [lo, hi]; the density is zero
 * outside it. Integrals use the trapezoid rule over the support, except that
 * a single-point support is treated as a box of one grid step.
 */
struct BeliefGrid {
    std::vector<double> grid;
    std::vector<double> density;
    std::size_t lo = 0;
    std::size_t hi = 0;
    /// Mass discarded by the most recent trim, before renormalisation.
    double trimmed_mass = 0;

    std::size_t size() const { return grid.size(); }
    double spacing() const { return grid.size() > 1 ? grid[1] - grid[0] : 1.0; }
    bool in_support(std::size_t i) const { return i >= lo && i <= hi; }

    double weight(std::size_t i) const {
        if (!in_support(i)) return 0.0;
        if (lo == hi) return spacing();
        if (i == lo) return 0.5 * (grid[lo + 1] - grid[lo]);
        if (i == hi) return 0.5 * (grid[hi] - grid[hi - 1]);
        return 0.5 * (grid[i + 1] - grid[i - 1]);
    }

    template <class F>
    double integrate(F&& f) const {
        double sum = 0;
        for (std::size_t i = lo; i <= hi; ++i) sum += weight(i) * density[i] * f(grid[i]);
        return sum;
    }

    double mass() const { return integrate([](double) { return 1.0; }); }
    double mean() const { return integrate([](double x) { return x; }); }
    double variance() const {
        const double m = mean();
        return integrate([m](double x) { return (x - m) * (x - m); });
    }
};

namespace detail {

/// Trapezoid area of `values` over the index span [lo, hi] of `grid`.
inline double span_area(const std::vector<double>& grid, const std::vector<double>& values,
                        std::size_t lo, std::size_t hi) {
    if (lo == hi) return values[lo] * (grid.size() > 1 ? grid[1] - grid[0] : 1.0);
    double area = 0;
    for (std::size_t i = lo; i < hi; ++i) area += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
    return area;
}

/// Normalise an unnormalised posterior, trim points at or below `min_z`, renormalise.
inline BeliefGrid normalise_and_trim(std::vector<double> grid, std::vector<double> values, double min_z) {
    std::size_t first = values.size(), last = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0) || !std::isfinite(values[i]))
            throw FilterError("belief update produced a negative or non-finite density");
        if (values[i] > 0) {
            first = std::min(first, i);
            last = i;
        }
    }
    if (first == values.size()) throw FilterError("posterior is numerically zero on the whole grid");
    const double area = span_area(grid, values, first, last);
    if (!(area > 0) || !std::isfinite(area)) throw FilterError("posterior has no usable mass on the grid");
    for (auto& v : values) v /= area;

    std::size_t keep_lo = values.size(), keep_hi = 0;
    for (std::size_t i = first; i <= last; ++i) {
        if (values[i] > min_z) {
            keep_lo = std::min(keep_lo, i);
            keep_hi = i;
        }
    }
    if (keep_lo == values.size()) {
        keep_lo = keep_hi = static_cast<std::size_t>(
            std::max_element(values.begin(), values.end()) - values.begin());
    }
    BeliefGrid out;
    out.lo = keep_lo;
    out.hi = keep_hi;
    const double kept = span_area(grid, values, keep_lo, keep_hi);
    out.trimmed_mass = 1.0 - kept;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = out.in_support(i) ? values[i] / kept : 0.0;
    out.grid = std::move(grid);
    out.density = std::move(values);
    return out;
}

}  // namespace detail

/// Samples a prior density on the grid and normalises it. No trimming is applied.
inline BeliefGrid init_belief(const std::function<double(double)>& p0, std::vector<double> grid) {
    if (grid.empty()) throw std::invalid_argument("init_belief: empty grid");
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) values[i] = p0(grid[i]);
    if (std::all_of(values.begin(), values.end(), [](double v) { return !(v > 0); }))
        throw FilterError("init_belief: prior has zero mass on the grid");
    return detail::normalise_and_trim(std::move(grid), std::move(values), 0.0);
}

/// The configured N(initial_mean, initial_var) prior on the configured grid.
inline BeliefGrid init_belief(const ProblemConfig& cfg) {
    if (!(cfg.initial_var > 0)) throw std::invalid_argument("init_belief: initial_var must be > 0");
    return init_belief([&](double x) { return normal::density(x, cfg.initial_mean, cfg.initial_var); },
                       build_grid(cfg.x_lower, cfg.x_upper, cfg.delta));
}

namespace detail {

/// Observation likelihood f_eta(y - x) on the grid, scaled so its maximum is 1.
inline std::vector<double> noise_likelihood(const std::vector<double>& grid, double y, double noise_var) {
    if (!(noise_var > 0)) throw std::invalid_argument("grid filter requires sigma_eta_sq > 0");
    std::vector<double> log_lik(grid.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = y - grid[i];
        log_lik[i] = -0.5 * r * r / noise_var;
        best = std::max(best, log_lik[i]);
    }
    for (auto& v : log_lik) v = std::exp(v - best);
    return log_lik;
}

}  // namespace detail

/// Conditions a belief on an observation y = x + eta without a transition.
inline BeliefGrid condition_on_observation(const BeliefGrid& z, double y, const ProblemConfig& cfg) {
    const auto lik = detail::noise_likelihood(z.grid, y, cfg.sigma_eta_sq);
    std::vector<double> values(z.size(), 0.0);
    for (std::size_t i = z.lo; i <= z.hi; ++i) values[i] = z.density[i] * lik[i];
    return detail::normalise_and_trim(z.grid, std::move(values), cfg.min_zvalue);
}

/**
 * One Bayes step: order a, demand, then observe y.
 * z'(x2) ∝ f_eta(y - x2) * ∫ f_D(x1 + a - x2) z(x1) dx1, with the inner integral
 * taken by trapezoid weights over the current support.
 */
inline BeliefGrid next_belief(const BeliefGrid& z, double a, double y, const ProblemConfig& cfg) {
    if (cfg.demand_kind == DemandKind::gaussian && !(cfg.sigma_d_sq > 0))
        throw std::invalid_argument("grid filter requires sigma_d_sq > 0 for Gaussian demand");
    const std::size_t n = z.size();
    const double dx = z.spacing();
    // kernel[k - kmin] = f_D((k)*dx + a) with k = i1 - i2.
    const long kmin = static_cast<long>(z.lo) - static_cast<long>(n - 1);
    const long kmax = static_cast<long>(z.hi);
    std::vector<double> kernel(static_cast<std::size_t>(kmax - kmin + 1));
    for (long k = kmin; k <= kmax; ++k)
        kernel[static_cast<std::size_t>(k - kmin)] = demand_density(static_cast<double>(k) * dx + a, cfg);

    std::vector<double> weighted(n, 0.0);
    for (std::size_t i = z.lo; i <= z.hi; ++i) weighted[i] = z.weight(i) * z.density[i];

    const auto lik = detail::noise_likelihood(z.grid, y, cfg.sigma_eta_sq);
    std::vector<double> values(n, 0.0);
    for (std::size_t i2 = 0; i2 < n; ++i2) {
        if (lik[i2] == 0.0) continue;
        double pred = 0;
        for (std::size_t i1 = z.lo; i1 <= z.hi; ++i1)
            pred += weighted[i1] * kernel[static_cast<std::size_t>(static_cast<long>(i1) - static_cast<long>(i2) - kmin)];
        values[i2] = lik[i2] * pred;
    }
    return detail::normalise_and_trim(z.grid, std::move(values), cfg.min_zvalue);
}

/// Σ_x c(x,a) z(x) over the support, with trapezoid weights.
inline double belief_expected_cost(const BeliefGrid& z, double a, const ProblemConfig& cfg) {
    return z.integrate([&](double x) { return expected_stage_cost(x, a, cfg); });
}

/// Two-column CSV (x,density) over the whole grid.
inline void write_belief_csv(std::ostream& out, const BeliefGrid& z) {
    out << "x,density\n";
    char buf[64];
    for (std::size_t i = 0; i < z.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", z.grid[i], z.density[i]);
        out << buf;
    }
}

}  // namespace poinv
