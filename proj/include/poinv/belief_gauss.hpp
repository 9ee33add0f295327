#pragma once

#include "poinv/config.hpp"
#include "poinv/env.hpp"
#include "poinv/normal.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace poinv {

/// Normal posterior N(mean, var) of the inventory level after the t-th observation.
struct GaussBelief {
    double mean = 0;
    double var = 0;
    int t = 0;
};

/// Equivalent demand D*_t ~ N(mean, var) driving the mean-belief recursion.
struct DStarParams {
    double mean = 0;
    double var = 0;
    int t = 0;
};

/// Conditions the N(prior_mean, prior_var) initial level on y0 = x0 + eta0.
inline GaussBelief posterior_init(double prior_mean, double prior_var, double noise_var, double y0) {
    if (prior_var < 0 || noise_var < 0) throw std::invalid_argument("posterior_init: negative variance");
    const double total = prior_var + noise_var;
    if (total == 0) throw std::invalid_argument("posterior_init: prior and noise variances are both zero");
    return {(noise_var * prior_mean + prior_var * y0) / total, prior_var * noise_var / total, 0};
}

inline GaussBelief posterior_init(const ProblemConfig& cfg, double y0) {
    return posterior_init(cfg.initial_mean, cfg.initial_var, cfg.sigma_eta_sq, y0);
}

/// sigma_{t+1}^2 = (v + sD^2) sEta^2 / (v + sD^2 + sEta^2); independent of actions and observations.
inline double variance_step(double var, double demand_var, double noise_var) {
    const double predictive = var + demand_var;
    const double total = predictive + noise_var;
    return total == 0 ? 0.0 : predictive * noise_var / total;
}

/// Fixed point of variance_step.
inline double sigma_limit(double demand_var, double noise_var) {
    if (demand_var == 0 || noise_var == 0) return 0.0;
    return 0.5 * demand_var * (std::sqrt(1.0 + 4.0 * noise_var / demand_var) - 1.0);
}

inline GaussBelief mean_update(const GaussBelief& b, double a, double y_next, const ProblemConfig& cfg) {
    const double forecast = b.mean + a - cfg.demand_mean;
    const double predictive = b.var + cfg.sigma_d_sq;
    const double total = predictive + cfg.sigma_eta_sq;
    GaussBelief out;
    out.mean = total == 0 ? forecast : (cfg.sigma_eta_sq * forecast + predictive * y_next) / total;
    out.var = variance_step(b.var, cfg.sigma_d_sq, cfg.sigma_eta_sq);
    out.t = b.t + 1;
    return out;
}

inline double dstar_variance(double var, double demand_var, double noise_var) {
    const double predictive = var + demand_var;
    const double total = predictive + noise_var;
    return total == 0 ? 0.0 : predictive * predictive / total;
}

/**
 * Posterior variances sigma_t^2 for t = 0..length-1 together with Var(D*_t).
 * Computed once per configuration.
 */
class VarianceTable {
public:
    VarianceTable() = default;

    VarianceTable(const ProblemConfig& cfg, int length) {
        if (length < 1) throw std::invalid_argument("VarianceTable: length must be >= 1");
        const double total0 = cfg.initial_var + cfg.sigma_eta_sq;
        if (total0 == 0) throw std::invalid_argument("VarianceTable: initial and noise variances both zero");
        double v = cfg.initial_var * cfg.sigma_eta_sq / total0;
        for (int t = 0; t < length; ++t) {
            posterior_.push_back(v);
            dstar_.push_back(dstar_variance(v, cfg.sigma_d_sq, cfg.sigma_eta_sq));
            v = variance_step(v, cfg.sigma_d_sq, cfg.sigma_eta_sq);
        }
        posterior_.push_back(v);
    }

    explicit VarianceTable(const ProblemConfig& cfg) : VarianceTable(cfg, cfg.len_episode + 1) {}

    /// sigma_t^2, defined for t in [0, size()].
    double posterior(int t) const { return posterior_.at(static_cast<std::size_t>(t)); }
    /// Var(D*_t), defined for t in [0, size()).
    double dstar(int t) const { return dstar_.at(static_cast<std::size_t>(t)); }
    int size() const { return static_cast<int>(dstar_.size()); }

private:
    std::vector<double> posterior_;
    std::vector<double> dstar_;
};

inline DStarParams dstar_params(int t, const ProblemConfig& cfg) {
    const VarianceTable table(cfg, t + 1);
    return {cfg.demand_mean, table.dstar(t), t};
}

/// h*_t(x) = E[h(x + Z_t)], Z_t ~ N(0, sigma_{t+1}^2).
inline double effective_holding(double x, double residual_var, const ProblemConfig& cfg) {
    return normal::expected_piecewise_linear(x, std::sqrt(residual_var), cfg.holding_slope_pos,
                                             cfg.backorder_slope);
}

inline double effective_holding(int t, double x, const ProblemConfig& cfg) {
    const VarianceTable table(cfg, t + 1);
    return effective_holding(x, table.posterior(t + 1), cfg);
}

/**
 * Belief-expected one-stage cost for a Gaussian belief N(mean, var):
 * c(a) + E[h(L(X + a - D))] with X ~ N(mean, var) independent of D ~ N(Dbar, sD^2).
 */
inline double gauss_belief_cost(double mean, double var, double a, const ProblemConfig& cfg) {
    if (cfg.demand_kind != DemandKind::gaussian)
        throw std::invalid_argument("gauss_belief_cost: requires Gaussian demand");
    const double w_mean = mean + a - cfg.demand_mean;
    const double sd = std::sqrt(var + cfg.sigma_d_sq);
    double holding = 0;
    if (cfg.dynamics_kind == DynamicsKind::lost_sales)
        holding = cfg.holding_slope_pos * normal::positive_part_mean(w_mean, sd);
    else
        holding = normal::expected_piecewise_linear(w_mean, sd, cfg.holding_slope_pos, cfg.backorder_slope);
    return ordering_cost(a, cfg) + holding;
}

inline double gauss_belief_cost(const GaussBelief& b, double a, const ProblemConfig& cfg) {
    return gauss_belief_cost(b.mean, b.var, a, cfg);
}

struct VeinottWitness {
    bool holds = false;
    double lower = 0;  // z_t
    double upper = 0;  // y_t
    double slope = 0;
};

/// Looks for z < y in [-50, 0] with (h*_t(y) - h*_t(z)) / (y - z) < -unit_cost.
inline VeinottWitness veinott_check(int t, double unit_cost, const ProblemConfig& cfg) {
    const VarianceTable table(cfg, t + 1);
    const double residual = table.posterior(t + 1);
    constexpr double step = 0.5;
    VeinottWitness best;
    best.slope = std::numeric_limits<double>::infinity();
    for (double z = -50.0; z + step <= 0.0 + 1e-12; z += step) {
        const double y = z + step;
        const double slope = (effective_holding(y, residual, cfg) - effective_holding(z, residual, cfg)) / step;
        if (slope < best.slope) best = {false, z, y, slope};
    }
    best.holds = best.slope < -unit_cost;
    return best;
}

}  // namespace poinv
