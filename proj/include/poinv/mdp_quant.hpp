#pragma once

#include "poinv/belief_gauss.hpp"
#include "poinv/config.hpp"
#include "poinv/grid.hpp"
#include "poinv/normal.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace poinv {

/**
 * Finite-horizon MDP with dense per-stage transition rows.
 * Row (t, i, a) lives at transition[t][(i * n_actions + a) * n_states ...].
 */
struct QuantizedMDP {
    std::vector<double> states;
    std::vector<double> actions;
    int horizon = 0;
    double discount = 1.0;
    std::vector<std::vector<double>> transition;
    std::vector<std::vector<double>> cost;

    std::size_t n_states() const { return states.size(); }
    std::size_t n_actions() const { return actions.size(); }

    const double* row(int t, std::size_t i, std::size_t a) const {
        return transition[static_cast<std::size_t>(t)].data() + (i * n_actions() + a) * n_states();
    }
    double stage_cost(int t, std::size_t i, std::size_t a) const {
        return cost[static_cast<std::size_t>(t)][i * n_actions() + a];
    }

    /// Largest |row sum - 1| over all rows; throws on negative or non-finite entries.
    double validate() const {
        if (transition.size() != static_cast<std::size_t>(horizon) || cost.size() != transition.size())
            throw std::logic_error("QuantizedMDP: stage count does not match horizon");
        double worst = 0;
        for (int t = 0; t < horizon; ++t) {
            for (std::size_t i = 0; i < n_states(); ++i) {
                for (std::size_t a = 0; a < n_actions(); ++a) {
                    const double* p = row(t, i, a);
                    double sum = 0;
                    for (std::size_t j = 0; j < n_states(); ++j) {
                        if (!(p[j] >= 0) || !std::isfinite(p[j]))
                            throw std::logic_error("QuantizedMDP: invalid transition probability");
                        sum += p[j];
                    }
                    worst = std::max(worst, std::abs(sum - 1.0));
                    if (!std::isfinite(stage_cost(t, i, a))) throw std::logic_error("QuantizedMDP: non-finite cost");
                }
            }
        }
        return worst;
    }
};

/// Time-indexed action and value tables over the state grid. V_T is identically zero.
class TabularPolicy {
public:
    TabularPolicy() = default;
    TabularPolicy(std::vector<double> states, int horizon)
        : states_(std::move(states)), horizon_(horizon),
          actions_(states_.size() * static_cast<std::size_t>(horizon), 0.0),
          values_(states_.size() * static_cast<std::size_t>(horizon + 1), 0.0) {}

    const std::vector<double>& states() const { return states_; }
    std::size_t n_states() const { return states_.size(); }
    int horizon() const { return horizon_; }

    double& action(int t, std::size_t i) { return actions_[index(t, i)]; }
    double action(int t, std::size_t i) const { return actions_[index(t, i)]; }
    double& value(int t, std::size_t i) { return values_[static_cast<std::size_t>(t) * n_states() + i]; }
    double value(int t, std::size_t i) const { return values_[static_cast<std::size_t>(t) * n_states() + i]; }

    /// Index of the cell [x_i, x_{i+1}) containing x, clamped to the grid.
    std::size_t locate(double x) const {
        if (states_.size() < 2) return 0;
        const double dx = states_[1] - states_[0];
        const double pos = std::floor((x - states_.front()) / dx + 1e-9);
        if (!(pos > 0)) return 0;
        return std::min(static_cast<std::size_t>(pos), states_.size() - 1);
    }

    /// Action at stage t for mean belief x (stages beyond the horizon order nothing).
    double act(int t, double x) const {
        if (t < 0 || t >= horizon_) return 0.0;
        return action(t, locate(x));
    }

private:
    std::size_t index(int t, std::size_t i) const { return static_cast<std::size_t>(t) * n_states() + i; }

    std::vector<double> states_;
    int horizon_ = 0;
    std::vector<double> actions_;
    std::vector<double> values_;
};

/**
 * Discretised mean-belief model for the Gaussian case. State i stands for the
 * cell [x_i, x_{i+1}) with centre (x_i + x_{i+1})/2; the top state is the point x_m.
 */
class QuantModel {
public:
    QuantModel(const ProblemConfig& cfg, double dx)
        : cfg_(cfg), grid_(build_grid(cfg.x_lower, cfg.x_upper, dx)), dx_(dx),
          variances_(cfg, cfg.len_episode + 1) {
        if (cfg.demand_kind != DemandKind::gaussian || cfg.dynamics_kind != DynamicsKind::backorders)
            throw std::invalid_argument("quantized model requires Gaussian demand with backorders");
    }

    const std::vector<double>& grid() const { return grid_; }
    double dx() const { return dx_; }
    const VarianceTable& variances() const { return variances_; }

    double center(std::size_t i) const {
        return i + 1 < grid_.size() ? 0.5 * (grid_[i] + grid_[i + 1]) : grid_.back();
    }

    /// Standard deviation of the mean-belief innovation at stage t.
    double scale(int t) const {
        return std::sqrt(cfg_.quant_scale == QuantScale::dstar ? variances_.dstar(t) : variances_.posterior(t));
    }

    /// P(next state = j | state i, order a) at stage t. Mass below x_2 goes to the
    /// first state and the last state takes the complement.
    std::vector<double> transition_row(std::size_t i, double a, int t) const {
        const std::size_t n = grid_.size();
        std::vector<double> p(n, 0.0);
        if (n == 1) {
            p[0] = 1.0;
            return p;
        }
        const double mu = center(i) + a - cfg_.demand_mean;
        const double s = scale(t);
        double prev = normal::cdf_at(grid_[1], mu, s);
        p[0] = prev;
        double sum = prev;
        for (std::size_t j = 1; j + 1 < n; ++j) {
            p[j] = interval_probability(grid_[j], grid_[j + 1], mu, s);
            sum += p[j];
        }
        p[n - 1] = std::max(0.0, 1.0 - sum);
        return p;
    }

    /// Belief-expected stage cost at mean belief x: c(a) + E h(N(x + a - Dbar, sigma_t^2 + sD^2)).
    double belief_cost(double x, double a, int t) const {
        return gauss_belief_cost(x, variances_.posterior(t), a, cfg_);
    }

    /// Conditional mean of belief_cost(X, a) for X ~ N(centre + a - Dbar, scale^2)
    /// restricted to the cell of state i.
    double stage_cost(std::size_t i, double a, int t) const {
        if (i + 1 >= grid_.size()) return belief_cost(grid_.back(), a, t);
        const double lo = grid_[i], hi = grid_[i + 1];
        const double mu = center(i) + a - cfg_.demand_mean;
        const double s = scale(t);
        if (s <= 0) return belief_cost(std::clamp(mu, lo, hi), a, t);
        const double nearest = std::clamp(mu, lo, hi);
        const double shift = 0.5 * (nearest - mu) * (nearest - mu) / (s * s);
        auto weight = [&](double x) { return std::exp(-0.5 * (x - mu) * (x - mu) / (s * s) + shift); };
        using Rule = boost::math::quadrature::gauss<double, 64>;
        const double mass = Rule::integrate(weight, lo, hi);
        const double moment = Rule::integrate([&](double x) { return weight(x) * belief_cost(x, a, t); }, lo, hi);
        return moment / mass;
    }

    QuantizedMDP build() const {
        QuantizedMDP mdp;
        mdp.states = grid_;
        mdp.actions = build_grid(0.0, cfg_.max_action, cfg_.action_step);
        mdp.horizon = cfg_.len_episode;
        mdp.discount = cfg_.discount;
        const std::size_t n = mdp.n_states(), na = mdp.n_actions();
        for (int t = 0; t < mdp.horizon; ++t) {
            std::vector<double> P(n * na * n);
            std::vector<double> C(n * na);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < na; ++k) {
                    const auto row = transition_row(i, mdp.actions[k], t);
                    std::copy(row.begin(), row.end(), P.begin() + static_cast<std::ptrdiff_t>((i * na + k) * n));
                    C[i * na + k] = stage_cost(i, mdp.actions[k], t);
                }
            }
            mdp.transition.push_back(std::move(P));
            mdp.cost.push_back(std::move(C));
        }
        return mdp;
    }

private:
    static double interval_probability(double a, double b, double mu, double s) {
        if (s <= 0) return (mu >= a && mu < b) ? 1.0 : 0.0;
        const double za = (a - mu) / s, zb = (b - mu) / s;
        // Upper tail via the mirrored CDF to avoid cancellation near 1.
        if (za > 0) return normal::cdf(-za) - normal::cdf(-zb);
        return normal::cdf(zb) - normal::cdf(za);
    }

    ProblemConfig cfg_;
    std::vector<double> grid_;
    double dx_;
    VarianceTable variances_;
};

/// Finite-horizon backward pass; ties go to the smallest action.
inline TabularPolicy backward_induction(const QuantizedMDP& mdp) {
    const std::size_t n = mdp.n_states(), na = mdp.n_actions();
    TabularPolicy policy(mdp.states, mdp.horizon);
    for (int t = mdp.horizon - 1; t >= 0; --t) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < na; ++k) {
                const double* p = mdp.row(t, i, k);
                double future = 0;
                for (std::size_t j = 0; j < n; ++j) future += p[j] * policy.value(t + 1, j);
                const double q = mdp.stage_cost(t, i, k) + mdp.discount * future;
                if (q < best) {
                    best = q;
                    best_k = k;
                }
            }
            policy.value(t, i) = best;
            policy.action(t, i) = mdp.actions[best_k];
        }
    }
    return policy;
}

/// Order-up-to fit of the stage-t table.
struct SSFit {
    std::optional<double> s;   // reorder point, absent when the stage never orders
    double S = 0;              // mean order-up-to level over unsaturated ordering states
    double residual = 0;       // max |x_i + a_t[i] - S| over those states
    std::size_t ordering_states = 0;
};

/// States whose order hits max_action cannot reach S and are left out of the fit.
inline SSFit extract_sS(const TabularPolicy& policy, int t, double max_action) {
    SSFit fit;
    const auto& x = policy.states();
    const double dx = x.size() > 1 ? x[1] - x[0] : 0.0;
    std::vector<double> levels;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = policy.action(t, i);
        if (a <= 0) continue;
        ++fit.ordering_states;
        fit.s = x[i] + 0.5 * dx;
        if (a < max_action - 1e-9) levels.push_back(x[i] + a);
    }
    if (!fit.s) return fit;
    if (levels.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (policy.action(t, i) > 0) levels.push_back(x[i] + policy.action(t, i));
    }
    double sum = 0;
    for (double l : levels) sum += l;
    fit.S = sum / static_cast<double>(levels.size());
    for (double l : levels) fit.residual = std::max(fit.residual, std::abs(l - fit.S));
    return fit;
}

/// CSV with header t,x,action,value; one row per (stage, state).
inline void write_policy_csv(std::ostream& out, const TabularPolicy& policy) {
    out << "t,x,action,value\n";
    char buf[96];
    for (int t = 0; t < policy.horizon(); ++t) {
        for (std::size_t i = 0; i < policy.n_states(); ++i) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", t, policy.states()[i], policy.action(t, i),
                          policy.value(t, i));
            out << buf;
        }
    }
}

inline TabularPolicy read_policy_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "t,x,action,value")
        throw std::runtime_error("policy CSV: missing header 't,x,action,value'");
    struct Row {
        int t;
        double x, a, v;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r{};
        char tail = 0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf%c", &r.t, &r.x, &r.a, &r.v, &tail) != 4)
            throw std::runtime_error("policy CSV: malformed row '" + line + "'");
        rows.push_back(r);
    }
    if (rows.empty()) throw std::runtime_error("policy CSV: no rows");
    int horizon = 0;
    std::vector<double> states;
    for (const auto& r : rows) {
        horizon = std::max(horizon, r.t + 1);
        if (r.t == 0) states.push_back(r.x);
    }
    if (rows.size() != states.size() * static_cast<std::size_t>(horizon))
        throw std::runtime_error("policy CSV: rows do not form a full stage x state table");
    TabularPolicy policy(states, horizon);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        const std::size_t i = k % states.size();
        if (r.t != static_cast<int>(k / states.size()) || r.x != states[i])
            throw std::runtime_error("policy CSV: rows out of order");
        policy.action(r.t, i) = r.a;
        policy.value(r.t, i) = r.v;
    }
    return policy;
}

}  // namespace poinv
