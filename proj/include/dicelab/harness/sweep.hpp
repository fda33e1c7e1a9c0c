#pragma once

// Tabular experiment loop.
//
// Per seed: draw a random MDP, build the expert (softmax over optimal Q) and a
// value-calibrated suboptimal policy, and roll out the expert and suboptimal
// datasets once. Per cell (training discount, number of suboptimal
// trajectories): pool the data, fit MLE dynamics, build the reward table,
// solve the dual, extract the policy, and evaluate it exactly under the true
// model at the evaluation discount. Suboptimal datasets for smaller counts
// are prefixes of the largest one, so cells of one seed share their samples.

#include "dicelab/bounds.hpp"
#include "dicelab/data.hpp"
#include "dicelab/dice.hpp"
#include "dicelab/harness/config.hpp"
#include "dicelab/harness/csv.hpp"
#include "dicelab/igi.hpp"
#include "dicelab/mdp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace dicelab::harness {

/// 0 at the random anchor, 100 at the expert anchor.
inline double normalize_score(double raw, double random_avg, double expert_avg) {
    if (!(std::abs(expert_avg - random_avg) > 1e-12))
        throw std::invalid_argument("normalize_score: degenerate anchors (expert " + format_float(expert_avg) +
                                    ", random " + format_float(random_avg) + ")");
    return 100.0 * (raw - random_avg) / (expert_avg - random_avg);
}

/// Mean per-step reward over timesteps 0..horizon, computed exactly.
inline double undiscounted_average_return(const TabularMdp& mdp, const TabularPolicy& policy, int horizon) {
    const Matrix PpiT = policy_transition(mdp, policy).transpose();
    const Vector r = policy_reward(mdp, policy);
    Vector mu = mdp.initial();
    double total = 0.0;
    for (int t = 0; t <= horizon; ++t) {
        total += mu.dot(r);
        mu = PpiT * mu;
    }
    return total / double(horizon + 1);
}

struct SeedContext {
    std::uint64_t seed;
    TabularMdp mdp;
    TabularPolicy expert;
    TabularPolicy suboptimal;
    double expert_anchor;              ///< expected reward of the expert at gamma_eval
    double random_anchor;              ///< same for the uniform policy
    double expert_undiscounted_anchor; ///< mean per-step reward over the horizon
    double random_undiscounted_anchor;
    Dataset expert_data;
    std::vector<Trajectory> suboptimal_trajectories;
};

inline SeedContext make_seed_context(const SweepConfig& config, std::uint64_t seed) {
    RandomMdpConfig mc = config.mdp_config;
    mc.seed = seed;
    TabularMdp mdp = random_mdp(mc);
    const Matrix q = optimal_q(mdp, config.gamma_eval);
    TabularPolicy expert = softmax_policy(q, config.expert_temperature);
    TabularPolicy sub = suboptimal_policy(mdp, config.gamma_eval, config.omega).policy;
    const auto unif = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());

    const double ea = expected_reward(visitation(mdp, expert, config.gamma_eval), mdp);
    const double ra = expected_reward(visitation(mdp, unif, config.gamma_eval), mdp);
    const double eu = undiscounted_average_return(mdp, expert, config.horizon);
    const double ru = undiscounted_average_return(mdp, unif, config.horizon);

    Rng expert_rng{seed, 1};
    Dataset expert_data = sample_trajectories(mdp, expert, config.n_expert_traj, config.horizon, expert_rng);
    const int n_sub = *std::max_element(config.n_suboptimal_traj_grid.begin(), config.n_suboptimal_traj_grid.end());
    std::vector<Trajectory> sub_trajs;
    if (n_sub > 0) {
        Rng sub_rng{seed, 2};
        sub_trajs = sample_trajectories(mdp, sub, n_sub, config.horizon, sub_rng).trajectories();
    }
    return {seed, std::move(mdp), std::move(expert), std::move(sub), ea, ra, eu, ru,
            std::move(expert_data), std::move(sub_trajs)};
}

struct CellOptions {
    /// Evaluate the expert itself instead of the imitated policy.
    bool inject_expert_policy = false;
};

struct CellResult {
    std::uint64_t seed = 0;
    double gamma_hat = 0.0;
    int n_suboptimal = 0;
    double raw_value = 0.0;
    double normalized_score = 0.0;
    double undiscounted_return = 0.0;
    double normalized_undiscounted = 0.0;
    double expert_anchor = 0.0;
    double random_anchor = 0.0;
    double expert_undiscounted_anchor = 0.0;
    double random_undiscounted_anchor = 0.0;
    double bc_normalized_score = 0.0;
    BoundReport bound;
    bool solver_converged = false;
    int solver_iterations = 0;
    std::string error; ///< empty on success

    bool ok() const { return error.empty(); }
};

/// Everything a cell computes, including the policies, for callers that need more than the CSV row.
struct CellArtifacts {
    CellResult result;
    std::optional<SolveReport> solve;
    std::optional<TabularPolicy> bc_policy;
};

inline CellArtifacts run_cell_detailed(const SweepConfig& config, const SeedContext& ctx, double gamma_hat,
                                       int n_suboptimal, const CellOptions& opts = {}) {
    CellArtifacts out;
    CellResult& res = out.result;
    res.seed = ctx.seed;
    res.gamma_hat = gamma_hat;
    res.n_suboptimal = n_suboptimal;
    res.expert_anchor = ctx.expert_anchor;
    res.random_anchor = ctx.random_anchor;
    res.expert_undiscounted_anchor = ctx.expert_undiscounted_anchor;
    res.random_undiscounted_anchor = ctx.random_undiscounted_anchor;
    try {
        dicelab::detail::require(n_suboptimal >= 0 && std::size_t(n_suboptimal) <= ctx.suboptimal_trajectories.size(),
                        "run_cell: n_suboptimal exceeds the sampled suboptimal trajectories");
        const TabularMdp& mdp = ctx.mdp;
        const std::vector<Trajectory> sub(ctx.suboptimal_trajectories.begin(),
                                          ctx.suboptimal_trajectories.begin() + n_suboptimal);
        const Dataset total = merge(ctx.expert_data, Dataset(mdp.n_states(), mdp.n_actions(), config.horizon, sub));
        const StateActionDist E = empirical_distribution(ctx.expert_data);
        const StateActionDist D = empirical_distribution(total);
        const TabularMdp est = mdp.with_transitions(mle_transitions(total, config.mle_fallback));

        Vector p0 = initial_state_distribution(total);
        if (config.igi_enabled) {
            const Dataset& source = config.igi_source == IgiSource::expert ? ctx.expert_data : total;
            const IgiWeights w = solve_igi(timestep_histogram(source), gamma_hat);
            p0 = igi_initial_state_dist(source, w);
        }

        const RewardTable reward =
            config.reward_mode == RewardMode::empirical_ratio
                ? reward_table(E, D, RewardMode::empirical_ratio, config.reward_clamp)
                : reward_table(visitation(mdp, ctx.expert, gamma_hat), D, RewardMode::discounted_ratio,
                               config.reward_clamp);

        SolveReport rep = solve_nu(p0, D, reward, est, gamma_hat, config.solver);
        res.solver_converged = rep.converged;
        res.solver_iterations = rep.iterations;
        const TabularPolicy& pi = opts.inject_expert_policy ? ctx.expert : rep.policy;

        res.raw_value = expected_reward(visitation(mdp, pi, config.gamma_eval), mdp);
        res.normalized_score = normalize_score(res.raw_value, ctx.random_anchor, ctx.expert_anchor);
        res.undiscounted_return = undiscounted_average_return(mdp, pi, config.horizon);
        res.normalized_undiscounted =
            normalize_score(res.undiscounted_return, ctx.random_undiscounted_anchor, ctx.expert_undiscounted_anchor);

        TabularPolicy bc = behavior_cloning(E);
        res.bc_normalized_score = normalize_score(expected_reward(visitation(mdp, bc, config.gamma_eval), mdp),
                                                  ctx.random_anchor, ctx.expert_anchor);
        res.bound = theorem1_report(pi, ctx.expert, mdp, est, config.gamma_eval, gamma_hat, mdp.r_max());
        out.solve = std::move(rep);
        out.bc_policy = std::move(bc);
    } catch (const std::exception& e) {
        res.error = e.what();
    }
    return out;
}

inline CellResult run_cell(const SweepConfig& config, const SeedContext& ctx, double gamma_hat, int n_suboptimal,
                           const CellOptions& opts = {}) {
    return run_cell_detailed(config, ctx, gamma_hat, n_suboptimal, opts).result;
}

inline CellResult run_cell(const SweepConfig& config, std::uint64_t seed, double gamma_hat, int n_suboptimal,
                           const CellOptions& opts = {}) {
    validate(config);
    return run_cell(config, make_seed_context(config, seed), gamma_hat, n_suboptimal, opts);
}

/// Canonical order: seed, then n_suboptimal ascending, then gamma_hat descending.
inline bool canonical_less(const CellResult& a, const CellResult& b) {
    return std::make_tuple(a.seed, a.n_suboptimal, -a.gamma_hat) < std::make_tuple(b.seed, b.n_suboptimal, -b.gamma_hat);
}

/// Runs every (seed, gamma_hat, n_suboptimal) cell on `jobs` worker threads.
/// Seeds are the unit of work; the result is sorted canonically.
inline std::vector<CellResult> run_cells(const SweepConfig& config, unsigned jobs = 1, const CellOptions& opts = {}) {
    validate(config);
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(config.seeds.size())));
    std::vector<CellResult> results;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        std::vector<CellResult> local;
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
            const auto seed = config.seeds[i];
            try {
                const SeedContext ctx = make_seed_context(config, seed);
                for (int n : config.n_suboptimal_traj_grid)
                    for (double g : config.gamma_hat_grid) local.push_back(run_cell(config, ctx, g, n, opts));
            } catch (const std::exception& e) {
                for (int n : config.n_suboptimal_traj_grid)
                    for (double g : config.gamma_hat_grid) {
                        CellResult r;
                        r.seed = seed;
                        r.gamma_hat = g;
                        r.n_suboptimal = n;
                        r.error = e.what();
                        local.push_back(std::move(r));
                    }
            }
        }
        std::lock_guard lock(mu);
        results.insert(results.end(), local.begin(), local.end());
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::sort(results.begin(), results.end(), canonical_less);
    return results;
}

inline const char* kSweepColumns =
    "seed,gamma_hat,n_suboptimal,raw_value,normalized_score,undiscounted_return,normalized_undiscounted,"
    "expert_anchor,random_anchor,expert_undiscounted_anchor,random_undiscounted_anchor,bc_normalized_score,"
    "lhs,term1,term2,term3,eps_p,eps_pi,solver_converged,solver_iterations,status";

inline const char* kBoundColumns = "seed,gamma,gamma_hat,lhs,term1,term2,term3,eps_p,eps_pi,n_suboptimal";

namespace detail {
inline std::string status_field(const CellResult& r) {
    if (r.ok()) return "ok";
    std::string msg = r.error;
    for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
    return "error: " + msg;
}
} // namespace detail

inline void write_sweep_csv(std::ostream& out, const SweepConfig& config, const std::vector<CellResult>& cells) {
    out << "# dicelab sweep\n";
    out << serialize(config, "# ");
    out << "# anchors: exact expected reward at gamma_eval of the expert (100) and uniform (0) policies\n";
    out << "# undiscounted: mean per-step reward over timesteps 0..horizon, same anchors recomputed\n";
    out << kSweepColumns << '\n';
    for (const auto& r : cells) {
        CsvRow row;
        row << r.seed << r.gamma_hat << r.n_suboptimal << r.raw_value << r.normalized_score << r.undiscounted_return
            << r.normalized_undiscounted << r.expert_anchor << r.random_anchor << r.expert_undiscounted_anchor
            << r.random_undiscounted_anchor << r.bc_normalized_score << r.bound.lhs << r.bound.term_discrepancy
            << r.bound.term_dynamics << r.bound.term_policy << r.bound.eps_p << r.bound.eps_pi
            << (r.solver_converged ? 1 : 0) << r.solver_iterations << detail::status_field(r);
        out << row.str() << '\n';
    }
}

/// One BoundReport as a CSV row (seed, gamma, gamma_hat, lhs, term1, term2, term3, eps_p, eps_pi).
inline std::string bound_row(std::uint64_t seed, const BoundReport& b) {
    CsvRow row;
    row << seed << b.gamma << b.gamma_hat << b.lhs << b.term_discrepancy << b.term_dynamics << b.term_policy << b.eps_p
        << b.eps_pi;
    return row.str();
}

inline void write_bounds_csv(std::ostream& out, const SweepConfig& config, const std::vector<CellResult>& cells) {
    out << "# dicelab bounds\n";
    out << serialize(config, "# ");
    out << kBoundColumns << '\n';
    for (const auto& r : cells) {
        if (!r.ok()) continue;
        out << bound_row(r.seed, r.bound) << ',' << r.n_suboptimal << '\n';
    }
}

inline std::size_t failed_cells(const std::vector<CellResult>& cells) {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& r) { return !r.ok(); }));
}

inline std::vector<CellResult> run_sweep(const SweepConfig& config, std::ostream& out, unsigned jobs = 1) {
    auto cells = run_cells(config, jobs);
    write_sweep_csv(out, config, cells);
    return cells;
}

inline std::vector<CellResult> run_bound_terms(const SweepConfig& config, std::ostream& out, unsigned jobs = 1,
                                               const CellOptions& opts = {}) {
    auto cells = run_cells(config, jobs, opts);
    write_bounds_csv(out, config, cells);
    return cells;
}

} // namespace dicelab::harness
