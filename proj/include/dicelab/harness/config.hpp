#pragma once

// Flat key=value experiment configuration.
//
//   # comments and blank lines are ignored
//   n_states = 50
//   gamma_hat_grid = 0.99, 0.9, 0.5
//   seeds = 0-499            (inclusive range, or a comma list, or both: 0-9, 20)
//
// `serialize` writes every key back in canonical order, so any output file
// can carry the exact configuration that produced it.

#include "dicelab/data.hpp"
#include "dicelab/dice.hpp"
#include "dicelab/mdp.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class IgiSource { expert, total };

struct SweepConfig {
    RandomMdpConfig mdp_config;
    double gamma_eval = 0.99;
    std::vector<double> gamma_hat_grid = {0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
    int n_expert_traj = 1;
    std::vector<int> n_suboptimal_traj_grid = {5, 20, 60, 100};
    double omega = 0.5;
    int horizon = 100;
    std::vector<std::uint64_t> seeds = {0};
    RewardMode reward_mode = RewardMode::discounted_ratio;
    bool igi_enabled = false;
    IgiSource igi_source = IgiSource::total;
    MleFallback mle_fallback = MleFallback::uniform;
    double expert_temperature = 0.2;
    double reward_clamp = kDefaultRewardClamp;
    SolverOptions solver;
};

inline std::string to_string(RewardMode m) {
    return m == RewardMode::empirical_ratio ? "empirical_ratio" : "discounted_ratio";
}
inline std::string to_string(IgiSource s) { return s == IgiSource::expert ? "expert" : "total"; }
inline std::string to_string(MleFallback f) { return f == MleFallback::uniform ? "uniform" : "self_loop"; }
inline std::string to_string(SolverMethod m) {
    return m == SolverMethod::newton ? "newton" : "gradient_descent";
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(v, ',')) {
        const auto dash = item.find('-', 1);
        if (dash == std::string::npos) {
            const auto x = parse_int(key, item);
            if (x < 0) throw ConfigError("config: seeds must be nonnegative");
            out.push_back(std::uint64_t(x));
        } else {
            const auto lo = parse_int(key, trim(item.substr(0, dash)));
            const auto hi = parse_int(key, trim(item.substr(dash + 1)));
            if (lo < 0 || hi < lo) throw ConfigError("config: bad seed range '" + item + "'");
            for (auto x = lo; x <= hi; ++x) out.push_back(std::uint64_t(x));
        }
    }
    return out;
}

inline std::string fmt_double(double x) {
    std::ostringstream s;
    s.precision(17);
    s << x;
    return s.str();
}

template <typename T> std::string join(const std::vector<T>& xs) {
    std::ostringstream s;
    s.precision(17);
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
    return s.str();
}

// Seeds are written back as ranges when contiguous.
inline std::string format_seeds(const std::vector<std::uint64_t>& seeds) {
    std::ostringstream s;
    for (std::size_t i = 0; i < seeds.size();) {
        std::size_t j = i;
        while (j + 1 < seeds.size() && seeds[j + 1] == seeds[j] + 1) ++j;
        s << (i ? "," : "") << seeds[i];
        if (j > i) s << '-' << seeds[j];
        i = j + 1;
    }
    return s.str();
}

} // namespace detail

/// Applies one key=value pair.
inline void set_option(SweepConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    const std::string v = trim(value);
    if (key == "n_states") c.mdp_config.n_states = int(parse_int(key, v));
    else if (key == "n_actions") c.mdp_config.n_actions = int(parse_int(key, v));
    else if (key == "branching") c.mdp_config.branching = int(parse_int(key, v));
    else if (key == "reward_sparsity") c.mdp_config.reward_sparsity = parse_double(key, v);
    else if (key == "r_max") c.mdp_config.r_max = parse_double(key, v);
    else if (key == "gamma_eval") c.gamma_eval = parse_double(key, v);
    else if (key == "gamma_hat_grid") {
        c.gamma_hat_grid.clear();
        for (const auto& x : split(v, ',')) c.gamma_hat_grid.push_back(parse_double(key, x));
    } else if (key == "n_expert_traj") c.n_expert_traj = int(parse_int(key, v));
    else if (key == "n_suboptimal_traj_grid") {
        c.n_suboptimal_traj_grid.clear();
        for (const auto& x : split(v, ',')) c.n_suboptimal_traj_grid.push_back(int(parse_int(key, x)));
    } else if (key == "omega") c.omega = parse_double(key, v);
    else if (key == "horizon") c.horizon = int(parse_int(key, v));
    else if (key == "seeds") c.seeds = parse_seeds(key, v);
    else if (key == "reward_mode") {
        if (v == "empirical_ratio") c.reward_mode = RewardMode::empirical_ratio;
        else if (v == "discounted_ratio") c.reward_mode = RewardMode::discounted_ratio;
        else throw ConfigError("config: reward_mode must be empirical_ratio or discounted_ratio");
    } else if (key == "igi_enabled") c.igi_enabled = parse_bool(key, v);
    else if (key == "igi_source") {
        if (v == "expert") c.igi_source = IgiSource::expert;
        else if (v == "total") c.igi_source = IgiSource::total;
        else throw ConfigError("config: igi_source must be expert or total");
    } else if (key == "mle_fallback") {
        if (v == "uniform") c.mle_fallback = MleFallback::uniform;
        else if (v == "self_loop") c.mle_fallback = MleFallback::self_loop;
        else throw ConfigError("config: mle_fallback must be uniform or self_loop");
    } else if (key == "expert_temperature") c.expert_temperature = parse_double(key, v);
    else if (key == "reward_clamp") c.reward_clamp = parse_double(key, v);
    else if (key == "solver_method") {
        if (v == "newton") c.solver.method = SolverMethod::newton;
        else if (v == "gradient_descent") c.solver.method = SolverMethod::gradient_descent;
        else throw ConfigError("config: solver_method must be newton or gradient_descent");
    } else if (key == "solver_lr") c.solver.lr = parse_double(key, v);
    else if (key == "solver_tol") c.solver.tol = parse_double(key, v);
    else if (key == "solver_max_iters") c.solver.max_iters = int(parse_int(key, v));
    else throw ConfigError("config: unknown key '" + key + "'");
}

/// Throws ConfigError on any violated constraint.
inline void validate(const SweepConfig& c) {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    const auto& m = c.mdp_config;
    check(m.n_states > 0 && m.n_actions > 0, "n_states and n_actions must be positive");
    check(m.branching > 0 && m.branching <= m.n_states, "branching must lie in [1, n_states]");
    check(m.reward_sparsity > 0.0 && m.reward_sparsity <= 1.0, "reward_sparsity must lie in (0, 1]");
    check(m.r_max > 0.0, "r_max must be > 0");
    check(c.gamma_eval > 0.0 && c.gamma_eval < 1.0, "gamma_eval must lie in (0, 1)");
    check(!c.gamma_hat_grid.empty(), "gamma_hat_grid is empty");
    for (double g : c.gamma_hat_grid)
        check(g > 0.0 && g <= c.gamma_eval, "every gamma_hat must satisfy 0 < gamma_hat <= gamma_eval");
    check(c.n_expert_traj >= 1, "n_expert_traj must be >= 1");
    check(!c.n_suboptimal_traj_grid.empty(), "n_suboptimal_traj_grid is empty");
    for (int n : c.n_suboptimal_traj_grid) check(n >= 0, "n_suboptimal values must be >= 0");
    check(c.omega >= 0.0 && c.omega <= 1.0, "omega must lie in [0, 1]");
    check(c.horizon >= 1, "horizon must be >= 1");
    check(!c.seeds.empty(), "seeds is empty");
    check(c.expert_temperature > 0.0, "expert_temperature must be > 0");
    check(c.reward_clamp > 0.0, "reward_clamp must be > 0");
    check(c.solver.tol > 0.0 && c.solver.lr > 0.0 && c.solver.max_iters > 0, "solver options must be positive");
}

inline SweepConfig parse_config(std::istream& in) {
    SweepConfig c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value");
        set_option(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    validate(c);
    return c;
}

/// Every key, one per line, in canonical order.
inline std::map<std::string, std::string> to_map(const SweepConfig& c) {
    using detail::fmt_double;
    return {
        {"n_states", std::to_string(c.mdp_config.n_states)},
        {"n_actions", std::to_string(c.mdp_config.n_actions)},
        {"branching", std::to_string(c.mdp_config.branching)},
        {"reward_sparsity", fmt_double(c.mdp_config.reward_sparsity)},
        {"r_max", fmt_double(c.mdp_config.r_max)},
        {"gamma_eval", fmt_double(c.gamma_eval)},
        {"gamma_hat_grid", detail::join(c.gamma_hat_grid)},
        {"n_expert_traj", std::to_string(c.n_expert_traj)},
        {"n_suboptimal_traj_grid", detail::join(c.n_suboptimal_traj_grid)},
        {"omega", fmt_double(c.omega)},
        {"horizon", std::to_string(c.horizon)},
        {"seeds", detail::format_seeds(c.seeds)},
        {"reward_mode", to_string(c.reward_mode)},
        {"igi_enabled", c.igi_enabled ? "true" : "false"},
        {"igi_source", to_string(c.igi_source)},
        {"mle_fallback", to_string(c.mle_fallback)},
        {"expert_temperature", fmt_double(c.expert_temperature)},
        {"reward_clamp", fmt_double(c.reward_clamp)},
        {"solver_method", to_string(c.solver.method)},
        {"solver_lr", fmt_double(c.solver.lr)},
        {"solver_tol", fmt_double(c.solver.tol)},
        {"solver_max_iters", std::to_string(c.solver.max_iters)},
    };
}

/// Writes the config as key=value lines, each prefixed with `prefix`.
inline std::string serialize(const SweepConfig& c, const std::string& prefix = "") {
    std::ostringstream out;
    for (const auto& [k, v] : to_map(c)) out << prefix << k << '=' << v << '\n';
    return out.str();
}

} // namespace dicelab::harness
