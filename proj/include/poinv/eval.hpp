#pragma once

#include "poinv/belief_gauss.hpp"
#include "poinv/belief_grid.hpp"
#include "poinv/config.hpp"
#include "poinv/env.hpp"
#include "poinv/mdp_quant.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace poinv {

/// Which representation of the observed past a policy consumes.
enum class PolicyInput { history, mean_belief, none };

/// Everything a policy may look at when choosing a_t.
struct PolicyState {
    int t = 0;
    std::span<const double> history;  // [t, y0, a0, ..., y_t, 0...], length 2T+2
    double mean_belief = 0;
    double belief_var = 0;
};

struct PolicyAdapter {
    std::string label;
    PolicyInput input = PolicyInput::none;
    std::function<double(const PolicyState&)> act;
};

inline PolicyAdapter constant_policy(double a, std::string label = {}) {
    if (label.empty()) label = "constant " + detail::format_double(a);
    return {std::move(label), PolicyInput::none, [a](const PolicyState&) { return a; }};
}

inline PolicyAdapter tabular_policy(std::shared_ptr<const TabularPolicy> policy, std::string label = "tabular") {
    return {std::move(label), PolicyInput::mean_belief,
            [policy](const PolicyState& s) { return policy->act(s.t, s.mean_belief); }};
}

/// Writes y_t (and a_{t-1}) into the padded history vector.
inline void record_history(std::vector<double>& hist, int t, double y, std::optional<double> previous_action) {
    hist[0] = t;
    if (previous_action) hist[static_cast<std::size_t>(2 * t)] = *previous_action;
    hist[static_cast<std::size_t>(1 + 2 * t)] = y;
}

/// Tracks the posterior along an episode: closed form for Gaussian backorder
/// models, grid filter otherwise.
class BeliefTracker {
public:
    explicit BeliefTracker(const ProblemConfig& cfg)
        : cfg_(&cfg),
          gaussian_(cfg.demand_kind == DemandKind::gaussian && cfg.dynamics_kind == DynamicsKind::backorders) {}

    void reset(double y0) {
        if (gaussian_) {
            gauss_ = posterior_init(*cfg_, y0);
        } else {
            if (!prior_) prior_ = init_belief(*cfg_);
            grid_ = condition_on_observation(*prior_, y0, *cfg_);
        }
    }

    void advance(double a, double y_next) {
        if (gaussian_) gauss_ = mean_update(gauss_, a, y_next, *cfg_);
        else grid_ = next_belief(grid_, a, y_next, *cfg_);
    }

    double expected_cost(double a) const {
        return gaussian_ ? gauss_belief_cost(gauss_, a, *cfg_) : belief_expected_cost(grid_, a, *cfg_);
    }

    double mean() const { return gaussian_ ? gauss_.mean : grid_.mean(); }
    double variance() const { return gaussian_ ? gauss_.var : grid_.variance(); }
    bool gaussian() const { return gaussian_; }

private:
    const ProblemConfig* cfg_;
    bool gaussian_;
    GaussBelief gauss_;
    std::optional<BeliefGrid> prior_;
    BeliefGrid grid_;
};

struct EpisodeCost {
    double belief_expected = 0;  // sum_t alpha^t E[c(x_t, a_t) | history]
    double realized = 0;         // sum_t alpha^t c(x_t, a_t) at the true x_t
};

inline EpisodeCost run_policy_episode(const PolicyAdapter& policy, const ProblemConfig& cfg,
                                      const EpisodeDraws& draws) {
    const int T = cfg.len_episode;
    std::vector<double> hist(static_cast<std::size_t>(cfg.history_width()), 0.0);
    BeliefTracker tracker(cfg);
    double x = draws.x0;
    double y = observe(x, draws.noise[0]);
    record_history(hist, 0, y, std::nullopt);
    tracker.reset(y);
    EpisodeCost out;
    double weight = 1.0;
    for (int t = 0; t < T; ++t) {
        PolicyState state{t, std::span<const double>(hist), tracker.mean(), tracker.variance()};
        const double a = clip_action(policy.act(state), cfg);
        out.belief_expected += weight * tracker.expected_cost(a);
        out.realized += weight * expected_stage_cost(x, a, cfg);
        weight *= cfg.discount;
        x = dynamics_step(x, a, draws.demand[static_cast<std::size_t>(t)], cfg.dynamics_kind);
        y = observe(x, draws.noise[static_cast<std::size_t>(t) + 1]);
        if (t + 1 < T) {
            record_history(hist, t + 1, y, a);
            tracker.advance(a, y);
        }
    }
    return out;
}

/// Kahan-compensated running sum.
class KahanSum {
public:
    void add(double v) {
        const double y = v - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0, carry_ = 0;
};

struct SampleStats {
    double mean = 0;
    std::optional<double> stderr_;
};

inline SampleStats summarise(std::span<const double> values) {
    SampleStats s;
    if (values.empty()) return s;
    KahanSum sum;
    for (double v : values) sum.add(v);
    s.mean = sum.value() / static_cast<double>(values.size());
    if (values.size() > 1) {
        KahanSum sq;
        for (double v : values) sq.add((v - s.mean) * (v - s.mean));
        const double var = sq.value() / static_cast<double>(values.size() - 1);
        s.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
    }
    return s;
}

struct EvalReport {
    std::string label;
    std::size_t n_episodes = 0;
    double mean = 0;
    std::optional<double> stderr_;  // absent for a single episode
    double realized_mean = 0;
    std::optional<double> realized_stderr;
    double seconds = 0;
    std::uint64_t seed = 0;
    std::vector<double> episode_costs;  // belief-expected, indexed by episode
    std::vector<double> realized_costs;

    double ci_low() const { return mean - 1.96 * stderr_.value_or(0.0); }
    double ci_high() const { return mean + 1.96 * stderr_.value_or(0.0); }
};

struct EvalOptions {
    unsigned threads = 1;
};

/**
 * Average discounted cost over n episodes. Episode k always uses the draws of
 * (seed, k), so two policies evaluated with one seed see common random numbers.
 */
inline EvalReport evaluate_policy(const PolicyAdapter& policy, const ProblemConfig& cfg, std::size_t n_episodes,
                                  std::uint64_t seed, EvalOptions options = {}) {
    if (n_episodes == 0) throw std::invalid_argument("evaluate_policy: n_episodes must be >= 1");
    const auto start = std::chrono::steady_clock::now();
    EvalReport report;
    report.label = policy.label;
    report.n_episodes = n_episodes;
    report.seed = seed;
    report.episode_costs.resize(n_episodes);
    report.realized_costs.resize(n_episodes);
    const std::uint64_t eval_seed = derive_seed(seed, Stream::eval_episode);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto c = run_policy_episode(policy, cfg, draw_episode(cfg, eval_seed, k));
            report.episode_costs[k] = c.belief_expected;
            report.realized_costs[k] = c.realized;
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n_episodes)));
    if (threads == 1) {
        work(0, n_episodes);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (n_episodes + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t b = w * chunk, e = std::min(n_episodes, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }
    const auto s = summarise(report.episode_costs);
    const auto r = summarise(report.realized_costs);
    report.mean = s.mean;
    report.stderr_ = s.stderr_;
    report.realized_mean = r.mean;
    report.realized_stderr = r.stderr_;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

/// Policy input built from the first observation alone.
inline PolicyState initial_state(const ProblemConfig& cfg, double y0, std::vector<double>& hist) {
    hist.assign(static_cast<std::size_t>(cfg.history_width()), 0.0);
    record_history(hist, 0, y0, std::nullopt);
    BeliefTracker tracker(cfg);
    tracker.reset(y0);
    return {0, std::span<const double>(hist), tracker.mean(), tracker.variance()};
}

struct SlicePoint {
    double y = 0;
    double action = 0;
};

/**
 * Action as a function of the observation. At t = 0 the axis is y0 and the
 * policy sees the state built from y0 alone. For t > 0 only mean-belief
 * policies are supported and the axis is the mean belief itself.
 */
inline std::vector<SlicePoint> policy_slice(const PolicyAdapter& policy, const ProblemConfig& cfg, int t,
                                            double y_lo, double y_hi, double step) {
    if (!(step > 0) || y_hi < y_lo) throw std::invalid_argument("policy_slice: bad range");
    if (t < 0 || t >= cfg.len_episode) throw std::invalid_argument("policy_slice: stage outside horizon");
    if (t > 0 && policy.input == PolicyInput::history)
        throw std::invalid_argument("policy_slice: history policies can only be sliced at t = 0");
    std::vector<SlicePoint> out;
    std::vector<double> hist;
    for (double y : build_grid(y_lo, y_hi, step)) {
        PolicyState state;
        if (t == 0) {
            state = initial_state(cfg, y, hist);
        } else {
            state.t = t;
            state.mean_belief = y;
            state.belief_var = VarianceTable(cfg).posterior(t);
        }
        out.push_back({y, clip_action(policy.act(state), cfg)});
    }
    return out;
}

inline void write_slice_csv(std::ostream& out, const std::vector<SlicePoint>& curve) {
    out << "y0,action\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.y, p.action);
        out << buf;
    }
}

struct ComparisonRow {
    EvalReport report;
    std::optional<double> paired_diff;  // mean(method - first method) per episode
    std::optional<double> paired_stderr;
};

inline std::vector<ComparisonRow> compare_methods(const ProblemConfig& cfg, const std::vector<PolicyAdapter>& methods,
                                                  std::size_t n_episodes, std::uint64_t seed,
                                                  EvalOptions options = {}) {
    std::vector<ComparisonRow> rows;
    for (const auto& m : methods) rows.push_back({evaluate_policy(m, cfg, n_episodes, seed, options), {}, {}});
    if (rows.empty()) return rows;
    const auto& base = rows.front().report.episode_costs;
    for (auto& row : rows) {
        std::vector<double> diff(base.size());
        for (std::size_t k = 0; k < base.size(); ++k) diff[k] = row.report.episode_costs[k] - base[k];
        const auto s = summarise(diff);
        row.paired_diff = s.mean;
        row.paired_stderr = s.stderr_;
    }
    return rows;
}

/// One row per method. Wall-clock times are left out so the file is reproducible.
inline void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "method,n_episodes,value,stderr,ci_low,ci_high,realized_value,realized_stderr,paired_diff,"
           "paired_diff_stderr\n";
    auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
    for (const auto& row : rows) {
        const auto& r = row.report;
        out << r.label << ',' << r.n_episodes << ',' << detail::format_double(r.mean) << ',' << opt(r.stderr_) << ','
            << detail::format_double(r.ci_low()) << ',' << detail::format_double(r.ci_high()) << ','
            << detail::format_double(r.realized_mean) << ',' << opt(r.realized_stderr) << ','
            << opt(row.paired_diff) << ',' << opt(row.paired_stderr) << '\n';
    }
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
    write_comparison_csv(out, {ComparisonRow{r, {}, {}}});
}

}  // namespace poinv
