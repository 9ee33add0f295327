#pragma once

#include "poinv/belief_gauss.hpp"
#include "poinv/belief_grid.hpp"
#include "poinv/config.hpp"
#include "poinv/env.hpp"
#include "poinv/eval.hpp"
#include "poinv/nn.hpp"
#include "poinv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace poinv::ddpg {

using Scalar = float;
using Net = nn::Mlp<Scalar>;
using Adam = nn::AdamState<Scalar>;
using Mat = nn::Matrix<Scalar>;

/// histories: padded action/observation history; beliefs: (mean belief, t).
enum class StateMode { histories, beliefs };

inline const char* mode_name(StateMode m) { return m == StateMode::histories ? "histories" : "beliefs"; }

inline StateMode parse_mode(const std::string& s) {
    if (s == "histories") return StateMode::histories;
    if (s == "beliefs") return StateMode::beliefs;
    throw std::invalid_argument("unknown DDPG mode '" + s + "' (expected histories|beliefs)");
}

inline int state_width(StateMode mode, const ProblemConfig& cfg) {
    return mode == StateMode::histories ? cfg.history_width() : 2;
}

/// [t, y0, a0, y1, ..., a_{t-1}, y_t, 0, ..., 0] of length 2T+2.
inline std::vector<double> encode_history(std::span<const double> y, std::span<const double> a, int t, int T) {
    if (t < 0 || t > T) throw std::invalid_argument("encode_history: t outside [0, T]");
    if (y.size() < static_cast<std::size_t>(t) + 1 || a.size() < static_cast<std::size_t>(t))
        throw std::invalid_argument("encode_history: prefix shorter than t");
    std::vector<double> h(static_cast<std::size_t>(2 * T + 2), 0.0);
    h[0] = t;
    for (int k = 0; k <= t; ++k) h[static_cast<std::size_t>(1 + 2 * k)] = y[static_cast<std::size_t>(k)];
    for (int k = 0; k < t; ++k) h[static_cast<std::size_t>(2 + 2 * k)] = a[static_cast<std::size_t>(k)];
    return h;
}

inline double epsilon(long steps_done, double eps_start, double eps_end, double decay) {
    return eps_end + (eps_start - eps_end) * std::exp(-static_cast<double>(steps_done) / decay);
}

/// Transition stored for training. For histories the next state embeds state and action.
struct ReplayRecord {
    std::vector<Scalar> state;
    Scalar action = 0;
    std::vector<Scalar> next_state;
    double cost = 0;
    bool done = false;
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
        records_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void push(ReplayRecord r) {
        if (!std::isfinite(r.cost)) throw std::invalid_argument("ReplayBuffer: non-finite cost");
        if (records_.size() < capacity_) {
            records_.push_back(std::move(r));
        } else {
            records_[head_] = std::move(r);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return records_.size(); }
    std::size_t capacity() const { return capacity_; }
    /// i = 0 is the oldest record still held.
    const ReplayRecord& at(std::size_t i) const { return records_[(head_ + i) % records_.size()]; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<ReplayRecord> records_;
};

/// Uniform sample of `batch` distinct indices (Floyd's algorithm), in draw order.
inline std::vector<std::size_t> replay_sample(const ReplayBuffer& buffer, std::size_t batch, Engine& rng) {
    const std::size_t n = buffer.size();
    if (batch > n) throw std::invalid_argument("replay_sample: batch larger than buffer");
    std::vector<std::size_t> out;
    out.reserve(batch);
    std::unordered_set<std::size_t> taken;
    taken.reserve(batch * 2);
    for (std::size_t j = n - batch; j < n; ++j) {
        std::uniform_int_distribution<std::size_t> pick(0, j);
        const std::size_t k = pick(rng);
        const std::size_t chosen = taken.insert(k).second ? k : j;
        if (chosen == j) taken.insert(j);
        out.push_back(chosen);
    }
    return out;
}

/// Online and target actor/critic with their optimisers.
struct Agent {
    StateMode mode = StateMode::beliefs;
    Net actor, critic, target_actor, target_critic;
    Adam actor_opt, critic_opt;

    int state_width() const { return actor.input_width(); }
};

inline Agent make_agent(const ProblemConfig& cfg, StateMode mode, std::uint64_t seed) {
    auto rng = substream(seed, Stream::weights);
    const int w = ddpg::state_width(mode, cfg), h = cfg.hidden_units;
    using nn::Activation;
    Agent agent;
    agent.mode = mode;
    agent.actor = Net::make({w, h, h, 1}, {Activation::relu, Activation::relu, Activation::scaled_logistic},
                            static_cast<Scalar>(cfg.max_action), rng);
    agent.critic = Net::make({w + 1, h, h, 1}, {Activation::relu, Activation::relu, Activation::identity}, 1, rng);
    agent.target_actor = agent.actor;
    agent.target_critic = agent.critic;
    agent.actor_opt = Adam(agent.actor, cfg.lr_actor, cfg.beta1, cfg.beta2);
    agent.critic_opt = Adam(agent.critic, cfg.lr_critic, cfg.beta1, cfg.beta2);
    return agent;
}

inline double actor_action(const Net& actor, std::span<const double> state) {
    nn::Vector<Scalar> x(static_cast<Eigen::Index>(state.size()));
    for (std::size_t i = 0; i < state.size(); ++i) x(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(state[i]);
    return static_cast<double>(actor.forward_one(x)(0));
}

/// With probability eps draw N(0, exploration_noise) instead of the actor's action; clip either.
inline double select_action(std::span<const double> state, const Net& actor, double eps, const ProblemConfig& cfg,
                            Engine& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = 0;
    if (u(rng) < eps) {
        std::normal_distribution<double> noise(0.0, std::sqrt(cfg.exploration_noise));
        a = noise(rng);
    } else {
        a = actor_action(actor, state);
    }
    return clip_action(a, cfg);
}

struct TrainStats {
    bool trained = false;
    double critic_loss = 0;  // first critic iteration
    double actor_loss = 0;   // last actor iteration
};

/**
 * One training step: cti critic steps on a single minibatch against frozen
 * targets, ati actor steps descending E[Q(s, mu(s))], then soft target updates.
 */
inline TrainStats train_step(const ReplayBuffer& buffer, Agent& agent, const ProblemConfig& cfg, Engine& rng) {
    TrainStats stats;
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    if (buffer.size() < B) return stats;
    stats.trained = true;
    const auto idx = replay_sample(buffer, B, rng);
    const int w = agent.state_width();
    const auto Bi = static_cast<Eigen::Index>(B);

    Mat SA(w + 1, Bi), S2(w, Bi), S(w, Bi);
    nn::Vector<Scalar> cost(Bi), live(Bi);
    for (std::size_t k = 0; k < B; ++k) {
        const auto& r = buffer.at(idx[k]);
        const auto c = static_cast<Eigen::Index>(k);
        for (int i = 0; i < w; ++i) {
            SA(i, c) = r.state[static_cast<std::size_t>(i)];
            S2(i, c) = r.next_state[static_cast<std::size_t>(i)];
        }
        SA(w, c) = r.action;
        cost(c) = static_cast<Scalar>(r.cost);
        live(c) = r.done ? Scalar(0) : Scalar(1);
    }
    S = SA.topRows(w);

    // Bellman targets from the frozen target networks.
    Mat S2A(w + 1, Bi);
    S2A.topRows(w) = S2;
    S2A.row(w) = agent.target_actor.forward(S2);
    const Mat q_next = agent.target_critic.forward(S2A);
    const nn::Vector<Scalar> target =
        cost + static_cast<Scalar>(cfg.discount) * live.cwiseProduct(q_next.row(0).transpose());

    Net::Tape tape;
    nn::Gradients<Scalar> grads;
    for (int k = 0; k < cfg.cti; ++k) {
        const Mat q = agent.critic.forward(SA, tape);
        const Mat diff = q - target.transpose();
        if (k == 0) stats.critic_loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B);
        agent.critic.backward(tape, diff * (Scalar(2) / static_cast<Scalar>(B)), &grads);
        nn::adam_step(agent.critic, grads, agent.critic_opt);
    }

    Net::Tape actor_tape;
    Mat SMu(w + 1, Bi);
    SMu.topRows(w) = S;
    const Mat d_q = Mat::Constant(1, Bi, Scalar(1) / static_cast<Scalar>(B));
    for (int k = 0; k < cfg.ati; ++k) {
        SMu.row(w) = agent.actor.forward(S, actor_tape);
        const Mat q = agent.critic.forward(SMu, tape);
        stats.actor_loss = static_cast<double>(q.mean());
        Mat d_input;
        agent.critic.backward(tape, d_q, nullptr, &d_input);
        agent.actor.backward(actor_tape, d_input.row(w), &grads);
        nn::adam_step(agent.actor, grads, agent.actor_opt);
    }

    nn::soft_update(agent.target_actor, agent.actor, cfg.tau);
    nn::soft_update(agent.target_critic, agent.critic, cfg.tau);
    return stats;
}

/// Greedy policy of a trained actor, fed the representation its mode expects.
inline PolicyAdapter actor_policy(std::shared_ptr<const Net> actor, StateMode mode, std::string label = {}) {
    if (label.empty()) label = std::string("DDPG ") + mode_name(mode);
    if (mode == StateMode::histories) {
        return {std::move(label), PolicyInput::history,
                [actor](const PolicyState& s) { return actor_action(*actor, s.history); }};
    }
    return {std::move(label), PolicyInput::mean_belief, [actor](const PolicyState& s) {
                const double state[2] = {s.mean_belief, static_cast<double>(s.t)};
                return actor_action(*actor, state);
            }};
}

/// Infers the state mode of a persisted actor from its input width.
inline StateMode mode_from_width(int width, const ProblemConfig& cfg) {
    if (width == cfg.history_width()) return StateMode::histories;
    if (width == 2) return StateMode::beliefs;
    throw std::invalid_argument("actor input width " + std::to_string(width) + " matches neither mode");
}

struct LogRow {
    long episode = 0;
    double eval_mean = 0;
    std::optional<double> eval_stderr;
    double critic_loss = 0;
    double actor_loss = 0;
    double epsilon = 0;
};

struct TrainingOptions {
    long checkpoint_every = 1000;        // episodes between checkpoint evaluations; 0 disables
    std::size_t checkpoint_episodes = 200;
    std::function<void(const LogRow&)> on_checkpoint;
};

struct TrainingResult {
    Agent agent;
    std::vector<LogRow> log;
    std::vector<float> critic_losses;  // one per train step that ran
    long steps_done = 0;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Episodic training loop. Histories mode filters on the belief grid and stores
 * grid-expected costs; beliefs mode uses the closed-form Gaussian filter and
 * feeds (mean belief, t) to the networks.
 */
inline TrainingResult run_training(const ProblemConfig& cfg, StateMode mode, long episodes, std::uint64_t seed,
                                   const TrainingOptions& options = {}) {
    const bool gaussian = cfg.demand_kind == DemandKind::gaussian && cfg.dynamics_kind == DynamicsKind::backorders;
    if (mode == StateMode::beliefs && !gaussian)
        throw std::invalid_argument("beliefs mode requires Gaussian demand with backorders");
    const int T = cfg.len_episode;
    TrainingResult result;
    result.agent = make_agent(cfg, mode, seed);
    Agent& agent = result.agent;
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));
    auto explore_rng = substream(seed, Stream::exploration);
    auto replay_rng = substream(seed, Stream::replay);
    const std::uint64_t episode_seed = derive_seed(seed, Stream::train_episode);

    std::optional<BeliefGrid> prior;
    if (mode == StateMode::histories) prior = init_belief(cfg);

    double critic_sum = 0, actor_sum = 0;
    long loss_count = 0;
    long steps_done = 0;

    for (long e = 0; e < episodes; ++e) {
        const auto draws = draw_episode(cfg, episode_seed, static_cast<std::uint64_t>(e));
        double x = draws.x0;
        std::vector<double> ys{observe(x, draws.noise[0])}, as;
        BeliefGrid grid;
        GaussBelief gauss;
        if (mode == StateMode::histories) grid = condition_on_observation(*prior, ys[0], cfg);
        else gauss = posterior_init(cfg, ys[0]);

        auto state_at = [&](int t) {
            if (mode == StateMode::histories) return encode_history(ys, as, t, T);
            return std::vector<double>{gauss.mean, static_cast<double>(t)};
        };
        std::vector<double> state = state_at(0);
        for (int t = 0; t < T; ++t) {
            const double eps = epsilon(steps_done, cfg.eps_start, cfg.eps_end, cfg.eps_decay);
            const double a = select_action(state, agent.actor, eps, cfg, explore_rng);
            double cost = 0;
            if (cfg.stored_cost == CostAccounting::realized) cost = expected_stage_cost(x, a, cfg);
            else if (mode == StateMode::histories) cost = belief_expected_cost(grid, a, cfg);
            else cost = gauss_belief_cost(gauss, a, cfg);

            x = dynamics_step(x, a, draws.demand[static_cast<std::size_t>(t)], cfg.dynamics_kind);
            const double y = observe(x, draws.noise[static_cast<std::size_t>(t) + 1]);
            ys.push_back(y);
            as.push_back(a);
            const bool done = t == T - 1;
            if (mode == StateMode::histories) {
                if (!done) grid = next_belief(grid, a, y, cfg);
            } else {
                gauss = mean_update(gauss, a, y, cfg);
            }
            std::vector<double> next = state_at(t + 1);

            ReplayRecord rec;
            rec.state.assign(state.begin(), state.end());
            rec.action = static_cast<Scalar>(a);
            rec.next_state.assign(next.begin(), next.end());
            rec.cost = cost;
            rec.done = done;
            buffer.push(std::move(rec));

            const auto stats = train_step(buffer, agent, cfg, replay_rng);
            if (stats.trained) {
                if (!agent.actor.all_finite() || !agent.critic.all_finite())
                    throw DivergenceError("DDPG diverged: non-finite network parameters at step " +
                                          std::to_string(steps_done));
                result.critic_losses.push_back(static_cast<float>(stats.critic_loss));
                critic_sum += stats.critic_loss;
                actor_sum += stats.actor_loss;
                ++loss_count;
            }
            ++steps_done;
            state = std::move(next);
        }

        const bool last = e + 1 == episodes;
        if (options.checkpoint_every > 0 && ((e + 1) % options.checkpoint_every == 0 || last) &&
            options.checkpoint_episodes > 0) {
            auto snapshot = std::make_shared<const Net>(agent.actor);
            const auto report = evaluate_policy(actor_policy(snapshot, mode), cfg, options.checkpoint_episodes, seed);
            LogRow row;
            row.episode = e + 1;
            row.eval_mean = report.mean;
            row.eval_stderr = report.stderr_;
            row.critic_loss = loss_count ? critic_sum / static_cast<double>(loss_count) : 0.0;
            row.actor_loss = loss_count ? actor_sum / static_cast<double>(loss_count) : 0.0;
            row.epsilon = epsilon(steps_done, cfg.eps_start, cfg.eps_end, cfg.eps_decay);
            result.log.push_back(row);
            if (options.on_checkpoint) options.on_checkpoint(row);
            critic_sum = actor_sum = 0;
            loss_count = 0;
        }
    }
    result.steps_done = steps_done;
    return result;
}

inline void write_training_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
    out << "episode,eval_mean,eval_stderr,critic_loss,actor_loss,epsilon\n";
    for (const auto& r : log) {
        out << r.episode << ',' << detail::format_double(r.eval_mean) << ','
            << (r.eval_stderr ? detail::format_double(*r.eval_stderr) : std::string()) << ','
            << detail::format_double(r.critic_loss) << ',' << detail::format_double(r.actor_loss) << ','
            << detail::format_double(r.epsilon) << '\n';
    }
}

}  // namespace poinv::ddpg
