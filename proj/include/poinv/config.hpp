#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace poinv {

enum class DemandKind { gaussian, exponential };
enum class DynamicsKind { backorders, lost_sales };
/// Which standard deviation drives the quantized mean-belief transitions.
enum class QuantScale { dstar, posterior };
/// Cost stored in replay records and accumulated during evaluation.
enum class CostAccounting { belief_expected, realized };

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Every model and algorithm parameter. Defaults reproduce the reference
 * Gaussian instance: N(2,4) initial inventory, N(1,1) demand, N(0,1) noise,
 * K=1, unit cost 0.1, holding x / -5x, four periods, orders up to 12.
 */
struct ProblemConfig {
    // model
    double initial_mean = 2.0;
    double initial_var = 4.0;
    DemandKind demand_kind = DemandKind::gaussian;
    double demand_mean = 1.0;
    double sigma_d_sq = 1.0;
    double sigma_eta_sq = 1.0;
    double fixed_cost = 1.0;
    double unit_cost = 0.1;
    double holding_slope_pos = 1.0;
    double backorder_slope = 5.0;
    double discount = 0.99;
    int len_episode = 4;
    DynamicsKind dynamics_kind = DynamicsKind::backorders;
    double max_action = 12.0;
    double min_order = 1e-3;  // smaller orders are placed as zero

    // belief grid
    double x_lower = -20.0;
    double x_upper = 30.0;
    double delta = 0.5;
    double min_zvalue = 1e-4;

    // quantized MDP
    double action_step = 0.1;
    QuantScale quant_scale = QuantScale::dstar;

    // DDPG
    int batch_size = 512;
    double exploration_noise = 8.0;
    double tau = 0.005;
    double eps_start = 0.9;
    double eps_end = 0.05;
    double eps_decay = 200.0;
    int cti = 3;
    int ati = 1;
    double lr_actor = 1e-5;
    double lr_target_actor = 1e-5;   // stored, unused: targets move by soft updates only
    double lr_critic = 1e-3;
    double lr_target_critic = 1e-3;  // stored, unused
    double beta1 = 0.999;
    double beta2 = 0.999;
    int hidden_units = 64;
    int replay_capacity = 100000;
    CostAccounting stored_cost = CostAccounting::belief_expected;

    std::uint64_t rng_seed = 0;

    int history_width() const { return 2 * len_episode + 2; }

    /// Throws ConfigError naming the first violated invariant.
    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("invalid config: ") + what);
        };
        auto finite = [](double v) { return std::isfinite(v); };
        require(finite(initial_mean), "initial_mean must be finite");
        require(finite(initial_var) && initial_var >= 0, "initial_var must be >= 0");
        require(finite(demand_mean), "demand_mean must be finite");
        require(demand_kind != DemandKind::exponential || demand_mean > 0,
                "demand_mean must be > 0 for exponential demand");
        require(finite(sigma_d_sq) && sigma_d_sq >= 0, "sigma_d_sq must be >= 0");
        require(finite(sigma_eta_sq) && sigma_eta_sq >= 0, "sigma_eta_sq must be >= 0");
        require(finite(fixed_cost) && fixed_cost >= 0, "fixed_cost must be >= 0");
        require(finite(unit_cost) && unit_cost >= 0, "unit_cost must be >= 0");
        require(finite(holding_slope_pos) && holding_slope_pos >= 0,
                "holding_slope_pos must be >= 0");
        require(finite(backorder_slope) && backorder_slope >= 0, "backorder_slope must be >= 0");
        require(discount >= 0 && discount <= 1, "discount must lie in [0,1]");
        require(len_episode >= 1, "len_episode must be >= 1");
        require(finite(max_action) && max_action >= 0, "max_action must be >= 0");
        require(finite(min_order) && min_order >= 0 && min_order <= max_action, "min_order must lie in [0, max_action]");
        require(finite(x_lower) && finite(x_upper) && x_lower < x_upper,
                "x_lower must be < x_upper");
        require(finite(delta) && delta > 0, "delta must be > 0");
        require(finite(min_zvalue) && min_zvalue >= 0, "min_zvalue must be >= 0");
        require(finite(action_step) && action_step > 0, "action_step must be > 0");
        require(batch_size >= 1, "batch_size must be >= 1");
        require(finite(exploration_noise) && exploration_noise >= 0,
                "exploration_noise must be >= 0");
        require(tau >= 0 && tau <= 1, "tau must lie in [0,1]");
        require(eps_end >= 0 && eps_end <= eps_start && eps_start <= 1,
                "require 0 <= eps_end <= eps_start <= 1");
        require(eps_decay > 0, "eps_decay must be > 0");
        require(cti >= 0 && ati >= 0, "cti and ati must be >= 0");
        require(lr_actor >= 0 && lr_critic >= 0, "learning rates must be >= 0");
        require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "beta1, beta2 must lie in [0,1)");
        require(hidden_units >= 1, "hidden_units must be >= 1");
        require(replay_capacity >= batch_size, "replay_capacity must be >= batch_size");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        throw ConfigError("non-numeric value for '" + key + "': " + value);
    }
    if (used != value.size()) throw ConfigError("non-numeric value for '" + key + "': " + value);
    return out;
}

inline long long parse_integer(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw ConfigError("non-integer value for '" + key + "': " + value);
    }
    if (used != value.size()) throw ConfigError("non-integer value for '" + key + "': " + value);
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct FieldBinding {
    std::function<void(ProblemConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ProblemConfig&)> get;
};

template <class T>
FieldBinding real_field(T ProblemConfig::*member) {
    return {[member](ProblemConfig& c, const std::string& k, const std::string& v) {
                c.*member = parse_double(k, v);
            },
            [member](const ProblemConfig& c) { return format_double(c.*member); }};
}

template <class T>
FieldBinding int_field(T ProblemConfig::*member) {
    return {[member](ProblemConfig& c, const std::string& k, const std::string& v) {
                c.*member = static_cast<T>(parse_integer(k, v));
            },
            [member](const ProblemConfig& c) { return std::to_string(c.*member); }};
}

template <class E>
FieldBinding enum_field(E ProblemConfig::*member, std::vector<std::pair<std::string, E>> names) {
    return {[member, names](ProblemConfig& c, const std::string& k, const std::string& v) {
                for (const auto& [name, value] : names) {
                    if (name == v) {
                        c.*member = value;
                        return;
                    }
                }
                throw ConfigError("unrecognised value for '" + k + "': " + v);
            },
            [member, names](const ProblemConfig& c) {
                for (const auto& [name, value] : names)
                    if (value == c.*member) return name;
                return std::string("?");
            }};
}

inline const std::map<std::string, FieldBinding>& bindings() {
    static const std::map<std::string, FieldBinding> table = {
        {"initial_mean", real_field(&ProblemConfig::initial_mean)},
        {"initial_var", real_field(&ProblemConfig::initial_var)},
        {"demand_kind", enum_field(&ProblemConfig::demand_kind,
                                   {{"gaussian", DemandKind::gaussian},
                                    {"exponential", DemandKind::exponential}})},
        {"demand_mean", real_field(&ProblemConfig::demand_mean)},
        {"sigma_d_sq", real_field(&ProblemConfig::sigma_d_sq)},
        {"sigma_eta_sq", real_field(&ProblemConfig::sigma_eta_sq)},
        {"fixed_cost", real_field(&ProblemConfig::fixed_cost)},
        {"unit_cost", real_field(&ProblemConfig::unit_cost)},
        {"holding_slope_pos", real_field(&ProblemConfig::holding_slope_pos)},
        {"backorder_slope", real_field(&ProblemConfig::backorder_slope)},
        {"discount", real_field(&ProblemConfig::discount)},
        {"len_episode", int_field(&ProblemConfig::len_episode)},
        {"dynamics_kind", enum_field(&ProblemConfig::dynamics_kind,
                                     {{"backorders", DynamicsKind::backorders},
                                      {"lost_sales", DynamicsKind::lost_sales}})},
        {"max_action", real_field(&ProblemConfig::max_action)},
        {"min_order", real_field(&ProblemConfig::min_order)},
        {"x_lower", real_field(&ProblemConfig::x_lower)},
        {"x_upper", real_field(&ProblemConfig::x_upper)},
        {"delta", real_field(&ProblemConfig::delta)},
        {"min_zvalue", real_field(&ProblemConfig::min_zvalue)},
        {"action_step", real_field(&ProblemConfig::action_step)},
        {"quant_scale", enum_field(&ProblemConfig::quant_scale,
                                   {{"dstar", QuantScale::dstar},
                                    {"posterior", QuantScale::posterior}})},
        {"batch_size", int_field(&ProblemConfig::batch_size)},
        {"exploration_noise", real_field(&ProblemConfig::exploration_noise)},
        {"tau", real_field(&ProblemConfig::tau)},
        {"eps_start", real_field(&ProblemConfig::eps_start)},
        {"eps_end", real_field(&ProblemConfig::eps_end)},
        {"eps_decay", real_field(&ProblemConfig::eps_decay)},
        {"cti", int_field(&ProblemConfig::cti)},
        {"ati", int_field(&ProblemConfig::ati)},
        {"lr_actor", real_field(&ProblemConfig::lr_actor)},
        {"lr_target_actor", real_field(&ProblemConfig::lr_target_actor)},
        {"lr_critic", real_field(&ProblemConfig::lr_critic)},
        {"lr_target_critic", real_field(&ProblemConfig::lr_target_critic)},
        {"beta1", real_field(&ProblemConfig::beta1)},
        {"beta2", real_field(&ProblemConfig::beta2)},
        {"hidden_units", int_field(&ProblemConfig::hidden_units)},
        {"replay_capacity", int_field(&ProblemConfig::replay_capacity)},
        {"stored_cost", enum_field(&ProblemConfig::stored_cost,
                                   {{"belief_expected", CostAccounting::belief_expected},
                                    {"realized", CostAccounting::realized}})},
        {"rng_seed", int_field(&ProblemConfig::rng_seed)},
    };
    return table;
}

}  // namespace detail

/// Applies one `key=value` override. Unknown keys are errors.
inline void set_config_value(ProblemConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = detail::bindings();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, key, value);
}

/// Parses flat `key = value` text; `#` starts a comment. Starts from defaults.
inline ProblemConfig parse_config(std::istream& in) {
    ProblemConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        set_config_value(cfg, detail::trim(std::string_view(body).substr(0, eq)),
                         detail::trim(std::string_view(body).substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

inline ProblemConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ProblemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Serialises every key; parse_config_string(to_config_string(c)) reproduces c exactly.
inline std::string to_config_string(const ProblemConfig& cfg) {
    std::string out;
    for (const auto& [key, binding] : detail::bindings()) out += key + "=" + binding.get(cfg) + "\n";
    return out;
}

/// The exponential-demand variant used for the non-Gaussian experiments.
inline ProblemConfig exponential_demand_config(ProblemConfig cfg = {}) {
    cfg.demand_kind = DemandKind::exponential;
    cfg.demand_mean = 1.0;
    return cfg;
}

}  // namespace poinv
