#pragma once

#include "poinv/config.hpp"
#include "poinv/normal.hpp"
#include "poinv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace poinv {

inline double dynamics_step(double x, double a, double d, DynamicsKind kind) {
    const double w = x + a - d;
    return kind == DynamicsKind::lost_sales ? std::max(w, 0.0) : w;
}

inline double observe(double x, double eta) { return x + eta; }

inline double ordering_cost(double a, double fixed_cost, double unit_cost) {
    if (!(a >= 0)) throw std::invalid_argument("ordering_cost: order quantity must be >= 0");
    return (a > 0 ? fixed_cost : 0.0) + unit_cost * a;
}

inline double ordering_cost(double a, const ProblemConfig& cfg) {
    return ordering_cost(a, cfg.fixed_cost, cfg.unit_cost);
}

/// Piecewise-linear holding/backorder cost: pos*x for x > 0, -neg*x otherwise.
struct HoldingCost {
    double pos = 1.0;
    double neg = 5.0;

    double operator()(double x) const { return x > 0 ? pos * x : -neg * x; }
};

inline HoldingCost holding_of(const ProblemConfig& cfg) {
    return {cfg.holding_slope_pos, cfg.backorder_slope};
}

inline double holding_cost(double x, const HoldingCost& h = {}) { return h(x); }

/// E[h(L(w - D))] for a known pre-demand level w.
inline double expected_holding(double w, const ProblemConfig& cfg) {
    const auto h = holding_of(cfg);
    if (cfg.demand_kind == DemandKind::gaussian) {
        const double mean = w - cfg.demand_mean;
        const double sd = std::sqrt(cfg.sigma_d_sq);
        if (cfg.dynamics_kind == DynamicsKind::lost_sales)
            return h.pos * normal::positive_part_mean(mean, sd);
        return normal::expected_piecewise_linear(mean, sd, h.pos, h.neg);
    }
    // Exponential demand with mean b: E[(w-D)^+] = w - b(1 - exp(-w/b)) for w > 0.
    const double b = cfg.demand_mean;
    const double pos_part = w > 0 ? w - b * (-std::expm1(-w / b)) : 0.0;
    if (cfg.dynamics_kind == DynamicsKind::lost_sales) return h.pos * pos_part;
    return (h.pos + h.neg) * pos_part - h.neg * (w - b);
}

/// Expected one-stage cost c(x,a) given the true inventory level x.
inline double expected_stage_cost(double x, double a, const ProblemConfig& cfg) {
    if (!std::isfinite(x) || !std::isfinite(a))
        throw std::invalid_argument("expected_stage_cost: non-finite input");
    return ordering_cost(a, cfg) + expected_holding(x + a, cfg);
}

/// Density of a single period's demand.
inline double demand_density(double d, const ProblemConfig& cfg) {
    if (cfg.demand_kind == DemandKind::exponential) {
        const double b = cfg.demand_mean;
        return d < 0 ? 0.0 : std::exp(-d / b) / b;
    }
    return normal::density(d, cfg.demand_mean, cfg.sigma_d_sq);
}

/// Exogenous randomness of one episode: initial level, observation noises
/// eta_0..eta_T and demands D_0..D_{T-1}. Pre-drawing them gives common random
/// numbers across policies for free.
struct EpisodeDraws {
    double x0 = 0;
    std::vector<double> noise;
    std::vector<double> demand;
};

inline EpisodeDraws draw_episode(const ProblemConfig& cfg, std::uint64_t seed, std::uint64_t episode) {
    const int T = cfg.len_episode;
    EpisodeDraws out;
    std::normal_distribution<double> std_normal(0.0, 1.0);

    auto init = substream(seed, Stream::init, episode);
    out.x0 = cfg.initial_mean + std::sqrt(cfg.initial_var) * std_normal(init);

    auto noise = substream(seed, Stream::noise, episode);
    std_normal.reset();
    out.noise.resize(static_cast<std::size_t>(T) + 1);
    for (auto& e : out.noise) e = std::sqrt(cfg.sigma_eta_sq) * std_normal(noise);

    auto demand = substream(seed, Stream::demand, episode);
    out.demand.resize(static_cast<std::size_t>(T));
    if (cfg.demand_kind == DemandKind::gaussian) {
        std_normal.reset();
        for (auto& d : out.demand) d = cfg.demand_mean + std::sqrt(cfg.sigma_d_sq) * std_normal(demand);
    } else {
        std::exponential_distribution<double> expo(1.0 / cfg.demand_mean);
        for (auto& d : out.demand) d = expo(demand);
    }
    return out;
}

/// What the decision maker has seen before choosing a_t: y_0..y_t and a_0..a_{t-1}.
struct ObservedHistory {
    int t = 0;
    std::span<const double> y;
    std::span<const double> a;
};

struct Trajectory {
    std::vector<double> x;          // x_0..x_T
    std::vector<double> a;          // a_0..a_{T-1}
    std::vector<double> y;          // y_0..y_T
    std::vector<double> d;          // D_0..D_{T-1}
    std::vector<double> cost;       // c(x_t, a_t)
    double discounted_cost = 0;
};

/// Clamps to [0, max_action]; orders below min_order become zero.
inline double clip_action(double a, const ProblemConfig& cfg) {
    if (std::isnan(a) || a < cfg.min_order) return 0.0;
    return std::min(a, cfg.max_action);
}

/// Runs one episode. `policy` maps an ObservedHistory to an order quantity, which
/// is clipped to [0, max_action].
template <class Policy>
Trajectory sample_episode(Policy&& policy, const ProblemConfig& cfg, const EpisodeDraws& draws) {
    const int T = cfg.len_episode;
    Trajectory tr;
    tr.x.reserve(T + 1);
    tr.y.reserve(T + 1);
    tr.x.push_back(draws.x0);
    tr.y.push_back(observe(draws.x0, draws.noise[0]));
    double weight = 1.0;
    for (int t = 0; t < T; ++t) {
        const ObservedHistory seen{t, std::span<const double>(tr.y), std::span<const double>(tr.a)};
        const double a = clip_action(policy(seen), cfg);
        const double x = tr.x.back();
        const double d = draws.demand[t];
        const double c = expected_stage_cost(x, a, cfg);
        tr.a.push_back(a);
        tr.d.push_back(d);
        tr.cost.push_back(c);
        tr.discounted_cost += weight * c;
        weight *= cfg.discount;
        const double next = dynamics_step(x, a, d, cfg.dynamics_kind);
        tr.x.push_back(next);
        tr.y.push_back(observe(next, draws.noise[t + 1]));
    }
    return tr;
}

template <class Policy>
Trajectory sample_episode(Policy&& policy, const ProblemConfig& cfg, std::uint64_t seed,
                          std::uint64_t episode) {
    return sample_episode(std::forward<Policy>(policy), cfg, draw_episode(cfg, seed, episode));
}

}  // namespace poinv
