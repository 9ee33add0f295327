#pragma once

// Command-line front end. Needs CLI11 and nlohmann/json on the include path.

#include "poinv/belief_gauss.hpp"
#include "poinv/belief_grid.hpp"
#include "poinv/config.hpp"
#include "poinv/ddpg.hpp"
#include "poinv/eval.hpp"
#include "poinv/mdp_quant.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace poinv::cli {

inline constexpr const char* tool_version = "0.1.0";

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Options shared by every subcommand plus the union of per-command options.
struct Options {
    std::string command;
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir = "out";
    bool force = false;
    unsigned threads = 1;
    bool verbose = false;

    double dx = 0.5;
    std::string mode = "beliefs";
    long episodes = 3000;
    long train_episodes = 15000;
    long checkpoint_every = 1000;
    long checkpoint_episodes = 200;
    std::string policy_path;
    std::vector<std::string> policy_paths;
    int t = 0;
    double y_lo = -6;
    double y_hi = 10;
    double step = 0.25;
    double action = 1.0;
    std::vector<double> dxs{1.0, 0.5, 0.3};
    long ddpg_episodes = 0;
    std::string manifest_path;
};

/// Files written by a command, relative to the output directory.
struct RunRecord {
    std::vector<std::string> artifacts;
    json summary = json::object();
};

namespace detail {

inline std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::ofstream open_out(const fs::path& dir, const std::string& name, RunRecord& rec) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    rec.artifacts.push_back(name);
    return out;
}

inline void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw std::runtime_error("output path " + dir.string() + " is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw std::runtime_error("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir);
}

inline json report_json(const EvalReport& r) {
    json j{{"label", r.label}, {"n_episodes", r.n_episodes}, {"mean", r.mean},
           {"realized_mean", r.realized_mean}, {"seconds", r.seconds}, {"seed", r.seed}};
    j["stderr"] = r.stderr_ ? json(*r.stderr_) : json(nullptr);
    return j;
}

inline void print_report(std::ostream& log, const EvalReport& r, bool verbose) {
    log << r.label << ": value " << r.mean;
    if (r.stderr_) log << " (stderr " << *r.stderr_ << ")";
    if (verbose) log << ", realized " << r.realized_mean;
    log << ", " << r.n_episodes << " episodes, " << r.seconds << " s\n";
}

inline bool is_network_file(const std::string& path) {
    std::ifstream in(path);
    std::string magic;
    in >> magic;
    return magic == "poinv-mlp";
}

/// Loads a persisted tabular policy (CSV) or actor network.
inline PolicyAdapter load_policy(const std::string& path, const ProblemConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open policy file '" + path + "'");
    const std::string label = fs::path(path).filename().string();
    if (is_network_file(path)) {
        auto net = std::make_shared<const ddpg::Net>(nn::load<ddpg::Scalar>(in));
        return ddpg::actor_policy(net, ddpg::mode_from_width(net->input_width(), cfg), label);
    }
    auto table = std::make_shared<const TabularPolicy>(read_policy_csv(in));
    if (table->horizon() != cfg.len_episode)
        throw std::runtime_error("policy horizon " + std::to_string(table->horizon()) + " does not match len_episode " +
                                 std::to_string(cfg.len_episode));
    return tabular_policy(table, label);
}

inline std::string dx_label(double dx) {
    std::ostringstream s;
    s << "Quantized dx=" << dx;
    return s.str();
}

struct QuantResult {
    std::shared_ptr<const TabularPolicy> policy;
    double seconds = 0;
};

inline QuantResult solve_quantized(const ProblemConfig& cfg, double dx) {
    const auto start = std::chrono::steady_clock::now();
    const QuantModel model(cfg, dx);
    auto policy = std::make_shared<const TabularPolicy>(backward_induction(model.build()));
    return {policy, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
}

}  // namespace detail

inline RunRecord cmd_solve_quant(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream& log) {
    RunRecord rec;
    const auto solved = detail::solve_quantized(cfg, o.dx);
    {
        auto out = detail::open_out(dir, "policy.csv", rec);
        write_policy_csv(out, *solved.policy);
    }
    {
        auto out = detail::open_out(dir, "sS.csv", rec);
        out << "t,s,S,residual,ordering_states\n";
        for (int t = 0; t < cfg.len_episode; ++t) {
            const auto fit = extract_sS(*solved.policy, t, cfg.max_action);
            out << t << ',' << (fit.s ? poinv::detail::format_double(*fit.s) : std::string()) << ','
                << poinv::detail::format_double(fit.S) << ',' << poinv::detail::format_double(fit.residual) << ','
                << fit.ordering_states << '\n';
        }
    }
    const auto report = evaluate_policy(tabular_policy(solved.policy, detail::dx_label(o.dx)), cfg,
                                        static_cast<std::size_t>(o.episodes), *o.seed, {o.threads});
    {
        auto out = detail::open_out(dir, "report.csv", rec);
        write_report_csv(out, report);
    }
    log << "solved in " << solved.seconds << " s\n";
    detail::print_report(log, report, o.verbose);
    rec.summary["report"] = detail::report_json(report);
    rec.summary["solve_seconds"] = solved.seconds;
    return rec;
}

inline RunRecord cmd_train_ddpg(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream& log) {
    RunRecord rec;
    const auto mode = ddpg::parse_mode(o.mode);
    ddpg::TrainingOptions topt;
    topt.checkpoint_every = o.checkpoint_every;
    topt.checkpoint_episodes = static_cast<std::size_t>(o.checkpoint_episodes);
    topt.on_checkpoint = [&](const ddpg::LogRow& r) {
        log << "episode " << r.episode << ": eval " << r.eval_mean << ", critic loss " << r.critic_loss
            << ", epsilon " << r.epsilon << "\n";
    };
    const auto start = std::chrono::steady_clock::now();
    const auto result = ddpg::run_training(cfg, mode, o.train_episodes, *o.seed, topt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    {
        auto out = detail::open_out(dir, "actor.net", rec);
        nn::save(out, result.agent.actor);
    }
    {
        auto out = detail::open_out(dir, "critic.net", rec);
        nn::save(out, result.agent.critic);
    }
    {
        auto out = detail::open_out(dir, "training_log.csv", rec);
        ddpg::write_training_log_csv(out, result.log);
    }
    auto actor = std::make_shared<const ddpg::Net>(result.agent.actor);
    const auto report = evaluate_policy(ddpg::actor_policy(actor, mode), cfg, static_cast<std::size_t>(o.episodes),
                                        *o.seed, {o.threads});
    {
        auto out = detail::open_out(dir, "report.csv", rec);
        write_report_csv(out, report);
    }
    log << "trained " << o.train_episodes << " episodes in " << seconds << " s\n";
    detail::print_report(log, report, o.verbose);
    rec.summary["report"] = detail::report_json(report);
    rec.summary["train_seconds"] = seconds;
    return rec;
}

inline RunRecord cmd_eval(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream& log) {
    RunRecord rec;
    const auto policy = detail::load_policy(o.policy_path, cfg);
    const auto report = evaluate_policy(policy, cfg, static_cast<std::size_t>(o.episodes), *o.seed, {o.threads});
    {
        auto out = detail::open_out(dir, "report.csv", rec);
        write_report_csv(out, report);
    }
    if (o.verbose) {
        auto out = detail::open_out(dir, "episodes.csv", rec);
        out << "episode,belief_expected,realized\n";
        for (std::size_t k = 0; k < report.n_episodes; ++k)
            out << k << ',' << poinv::detail::format_double(report.episode_costs[k]) << ','
                << poinv::detail::format_double(report.realized_costs[k]) << '\n';
    }
    detail::print_report(log, report, o.verbose);
    rec.summary["report"] = detail::report_json(report);
    return rec;
}

inline RunRecord cmd_slice(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream&) {
    RunRecord rec;
    const auto policy = detail::load_policy(o.policy_path, cfg);
    const auto curve = policy_slice(policy, cfg, o.t, o.y_lo, o.y_hi, o.step);
    auto out = detail::open_out(dir, "slice.csv", rec);
    write_slice_csv(out, curve);
    return rec;
}

/// One simulated episode under a constant order, filtered by both the grid and the closed form.
inline RunRecord cmd_filter_demo(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream& log) {
    RunRecord rec;
    const bool gaussian = cfg.demand_kind == DemandKind::gaussian && cfg.dynamics_kind == DynamicsKind::backorders;
    const auto draws = draw_episode(cfg, derive_seed(*o.seed, Stream::eval_episode), 0);
    const double a = clip_action(o.action, cfg);
    double x = draws.x0;
    double y = observe(x, draws.noise[0]);
    BeliefGrid grid = condition_on_observation(init_belief(cfg), y, cfg);
    std::optional<GaussBelief> gauss;
    if (gaussian) gauss = posterior_init(cfg, y);

    auto out = detail::open_out(dir, "filter_demo.csv", rec);
    auto beliefs = detail::open_out(dir, "beliefs.csv", rec);
    out << "t,x,y,action,grid_mean,grid_var,gauss_mean,gauss_var\n";
    beliefs << "t,x,density\n";
    using poinv::detail::format_double;
    auto emit = [&](int t) {
        out << t << ',' << format_double(x) << ',' << format_double(y) << ',' << format_double(t < cfg.len_episode ? a : 0)
            << ',' << format_double(grid.mean()) << ',' << format_double(grid.variance()) << ','
            << (gauss ? format_double(gauss->mean) : std::string()) << ','
            << (gauss ? format_double(gauss->var) : std::string()) << '\n';
        for (std::size_t i = grid.lo; i <= grid.hi; ++i)
            beliefs << t << ',' << format_double(grid.grid[i]) << ',' << format_double(grid.density[i]) << '\n';
    };
    emit(0);
    for (int t = 0; t < cfg.len_episode; ++t) {
        x = dynamics_step(x, a, draws.demand[static_cast<std::size_t>(t)], cfg.dynamics_kind);
        y = observe(x, draws.noise[static_cast<std::size_t>(t) + 1]);
        grid = next_belief(grid, a, y, cfg);
        if (gauss) *gauss = mean_update(*gauss, a, y, cfg);
        emit(t + 1);
    }
    log << "filtered " << cfg.len_episode << " steps on " << grid.size() << " grid points\n";
    return rec;
}

/// Quantized solutions for each dx, optional DDPG runs and persisted policies, on common random numbers.
inline RunRecord cmd_compare(const Options& o, const ProblemConfig& cfg, const fs::path& dir, std::ostream& log) {
    RunRecord rec;
    std::vector<PolicyAdapter> methods;
    json timings = json::object();
    const bool gaussian = cfg.demand_kind == DemandKind::gaussian && cfg.dynamics_kind == DynamicsKind::backorders;
    if (gaussian) {
        for (double dx : o.dxs) {
            const auto solved = detail::solve_quantized(cfg, dx);
            methods.push_back(tabular_policy(solved.policy, detail::dx_label(dx)));
            timings[methods.back().label] = solved.seconds;
            log << methods.back().label << " solved in " << solved.seconds << " s\n";
        }
    }
    if (o.ddpg_episodes > 0) {
        std::vector<ddpg::StateMode> modes{ddpg::StateMode::histories};
        if (gaussian) modes.push_back(ddpg::StateMode::beliefs);
        for (auto mode : modes) {
            const auto start = std::chrono::steady_clock::now();
            ddpg::TrainingOptions topt;
            topt.checkpoint_every = 0;
            const auto result = ddpg::run_training(cfg, mode, o.ddpg_episodes, *o.seed, topt);
            auto actor = std::make_shared<const ddpg::Net>(result.agent.actor);
            const std::string label = std::string("DDPG ") + ddpg::mode_name(mode) + " " +
                                      std::to_string(o.ddpg_episodes) + " episodes";
            methods.push_back(ddpg::actor_policy(actor, mode, label));
            timings[label] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            auto out = detail::open_out(dir, std::string("actor_") + ddpg::mode_name(mode) + ".net", rec);
            nn::save(out, result.agent.actor);
            log << label << " trained in " << timings[label].get<double>() << " s\n";
        }
    }
    for (const auto& path : o.policy_paths) methods.push_back(detail::load_policy(path, cfg));
    const auto rows = compare_methods(cfg, methods, static_cast<std::size_t>(o.episodes), *o.seed, {o.threads});
    {
        auto out = detail::open_out(dir, "comparison.csv", rec);
        write_comparison_csv(out, rows);
    }
    json reports = json::array();
    for (const auto& row : rows) {
        detail::print_report(log, row.report, o.verbose);
        reports.push_back(detail::report_json(row.report));
    }
    rec.summary["reports"] = reports;
    rec.summary["method_seconds"] = timings;
    return rec;
}

namespace detail {

inline void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed, "Random seed (default: rng_seed from the config)");
    sub->add_option("--config", o.config_path, "Config file of key=value lines")->check(CLI::ExistingFile);
    sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
    sub->add_flag("--force", o.force, "Write into a non-empty output directory");
    sub->add_option("--threads", o.threads, "Worker threads for evaluation")->check(CLI::Range(1u, 256u));
    sub->add_flag("--verbose", o.verbose, "Also report realized costs");
}

struct Parser {
    CLI::App app{"Partially observed inventory control: filters, quantized MDP and DDPG", "poinv"};
    Options o;

    Parser() {
        app.require_subcommand(1);
        app.set_version_flag("--version", tool_version);

        auto* solve = app.add_subcommand("solve-quant", "Solve the quantized mean-belief MDP");
        solve->add_option("--dx", o.dx, "Grid step")->capture_default_str();
        solve->add_option("--episodes", o.episodes, "Evaluation episodes")->capture_default_str();

        auto* train = app.add_subcommand("train-ddpg", "Train a DDPG actor and critic");
        train->add_option("--mode", o.mode, "State representation")
            ->check(CLI::IsMember({"histories", "beliefs"}))
            ->capture_default_str();
        train->add_option("--episodes", o.train_episodes, "Training episodes")->capture_default_str();
        train->add_option("--eval-episodes", o.episodes, "Final evaluation episodes")->capture_default_str();
        train->add_option("--checkpoint-every", o.checkpoint_every, "Episodes between checkpoints (0 = off)")
            ->capture_default_str();
        train->add_option("--checkpoint-episodes", o.checkpoint_episodes, "Episodes per checkpoint evaluation")
            ->capture_default_str();

        auto* eval = app.add_subcommand("eval", "Evaluate a persisted policy");
        eval->add_option("--policy", o.policy_path, "Policy CSV or actor network")->required()->check(CLI::ExistingFile);
        eval->add_option("--episodes", o.episodes, "Episodes")->capture_default_str();

        auto* slice = app.add_subcommand("slice", "Action as a function of the observation");
        slice->add_option("--policy", o.policy_path, "Policy CSV or actor network")->required()->check(CLI::ExistingFile);
        slice->add_option("--t", o.t, "Stage")->capture_default_str();
        slice->add_option("--y-lo", o.y_lo, "Lower end of the axis")->capture_default_str();
        slice->add_option("--y-hi", o.y_hi, "Upper end of the axis")->capture_default_str();
        slice->add_option("--step", o.step, "Axis resolution")->capture_default_str();

        auto* demo = app.add_subcommand("filter-demo", "Grid filter against the Gaussian closed form on one episode");
        demo->add_option("--action", o.action, "Constant order quantity")->capture_default_str();

        auto* compare = app.add_subcommand("compare", "Method comparison table");
        compare->add_option("--episodes", o.episodes, "Evaluation episodes")->capture_default_str();
        compare->add_option("--dx", o.dxs, "Quantization steps")->capture_default_str();
        compare->add_option("--ddpg-episodes", o.ddpg_episodes, "Also train DDPG for this many episodes")
            ->capture_default_str();
        compare->add_option("--policy", o.policy_paths, "Extra persisted policies")->check(CLI::ExistingFile);

        auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
        replay->add_option("--manifest", o.manifest_path, "manifest.json of an earlier run")
            ->required()
            ->check(CLI::ExistingFile);

        for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) add_common(sub, o);
    }
};

}  // namespace detail

/// The argument list of a run with the output location and config source removed.
inline std::vector<std::string> reproducible_args(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--force") continue;
        if (a == "--out-dir" || a == "--config" || a == "--seed" || a == "--threads") {
            ++i;
            continue;
        }
        if (a.rfind("--out-dir=", 0) == 0 || a.rfind("--config=", 0) == 0 || a.rfind("--seed=", 0) == 0 ||
            a.rfind("--threads=", 0) == 0)
            continue;
        out.push_back(a);
    }
    return out;
}

namespace detail {

inline int execute(std::vector<std::string> args, const std::optional<ProblemConfig>& config_override,
                   std::ostream& log, std::ostream& err);

inline int dispatch(const Options& o, const std::vector<std::string>& args, ProblemConfig cfg, std::ostream& log) {
    if (o.command == "replay") {
        std::ifstream in(o.manifest_path);
        const json m = json::parse(in);
        std::vector<std::string> replay_args = m.at("args").get<std::vector<std::string>>();
        replay_args.push_back("--seed");
        replay_args.push_back(std::to_string(m.at("seed").get<std::uint64_t>()));
        replay_args.push_back("--out-dir");
        replay_args.push_back(o.out_dir);
        if (o.force) replay_args.push_back("--force");
        if (o.threads != 1) {
            replay_args.push_back("--threads");
            replay_args.push_back(std::to_string(o.threads));
        }
        log << "replaying " << m.at("command").get<std::string>() << " from " << o.manifest_path << "\n";
        return execute(replay_args, parse_config_string(m.at("config").get<std::string>()), log, std::cerr);
    }

    const std::uint64_t seed = o.seed.value_or(cfg.rng_seed);
    cfg.rng_seed = seed;
    Options resolved = o;
    resolved.seed = seed;
    log << "seed: " << seed << "\n";

    const fs::path dir(o.out_dir);
    prepare_out_dir(dir, o.force);
    const std::string started = iso_now();
    const auto start = std::chrono::steady_clock::now();

    RunRecord rec;
    if (o.command == "solve-quant") rec = cmd_solve_quant(resolved, cfg, dir, log);
    else if (o.command == "train-ddpg") rec = cmd_train_ddpg(resolved, cfg, dir, log);
    else if (o.command == "eval") rec = cmd_eval(resolved, cfg, dir, log);
    else if (o.command == "slice") rec = cmd_slice(resolved, cfg, dir, log);
    else if (o.command == "filter-demo") rec = cmd_filter_demo(resolved, cfg, dir, log);
    else if (o.command == "compare") rec = cmd_compare(resolved, cfg, dir, log);
    else throw UsageError("unknown command " + o.command);

    json manifest{{"tool", "poinv"},
                  {"version", tool_version},
                  {"command", o.command},
                  {"args", reproducible_args(args)},
                  {"seed", seed},
                  {"config", to_config_string(cfg)},
                  {"artifacts", rec.artifacts},
                  {"started", started},
                  {"finished", iso_now()},
                  {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                  {"summary", rec.summary}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest");
    log << "wrote " << rec.artifacts.size() + 1 << " files to " << dir.string() << "\n";
    return 0;
}

inline int execute(std::vector<std::string> args, const std::optional<ProblemConfig>& config_override,
                   std::ostream& log, std::ostream& err) {
    Parser p;
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        p.app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        log << p.app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        log << tool_version << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << p.app.help();
        return 2;
    }
    const auto chosen = p.app.get_subcommands();
    p.o.command = chosen.front()->get_name();
    try {
        ProblemConfig cfg;
        if (config_override) cfg = *config_override;
        else if (!p.o.config_path.empty()) cfg = load_config(p.o.config_path);
        return dispatch(p.o, args, cfg, log);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace detail

/// Parses argv (without the program name), runs the subcommand and returns the exit status.
inline int run_command(const std::vector<std::string>& args, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr) {
    return detail::execute(args, std::nullopt, log, err);
}

inline int run_command(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_command(args);
}

}  // namespace poinv::cli
