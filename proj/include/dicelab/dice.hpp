#pragma once

// KL visitation-distribution matching in its dual form.
//
// With importance weights zeta = d / D over the data distribution D and the
// normalization multiplier eliminated in closed form, the problem reduces to
//
//   min_nu  (1 - gamma) E_{p0}[nu(s)] + log E_{(s,a)~D}[exp A_nu(s,a)],
//   A_nu(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) nu(s') - nu(s),
//
// a smooth convex function of nu. Its gradient is the Bellman flow residual of
// d = zeta* D with zeta* = softmax_D(A_nu), so a stationary point yields a
// valid visitation distribution, and the policy follows from the weighted
// maximum-likelihood problem max_pi E_D[zeta* log pi(a|s)].

#include "dicelab/mdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab {

enum class RewardMode {
    empirical_ratio,  ///< r = log E / D, what a discriminator on raw datasets learns
    discounted_ratio, ///< r = log d^E / D, what visitation matching asks for
};

struct RewardTable {
    Matrix values;
    RewardMode mode;
    double clamp;
};

/// Default clamp log(1e6) for empty cells.
inline const double kDefaultRewardClamp = std::log(1e6);

/// Exact log-ratio reward log(expert / total), clamped to [-clamp, clamp].
///
/// Cells where either side has no mass get -clamp; cells outside the support
/// of `total` are never read by the solver.
inline RewardTable reward_table(const StateActionDist& expert, const StateActionDist& total,
                                RewardMode mode, double clamp = kDefaultRewardClamp) {
    detail::require(clamp > 0.0 && std::isfinite(clamp), "reward_table: clamp must be > 0");
    detail::require(expert.mass().rows() == total.mass().rows() &&
                        expert.mass().cols() == total.mass().cols(),
                    "reward_table: shape mismatch");
    Matrix r(total.mass().rows(), total.mass().cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double e = expert.mass().data()[i], d = total.mass().data()[i];
        r.data()[i] = (e > 0.0 && d > 0.0) ? std::clamp(std::log(e / d), -clamp, clamp) : -clamp;
    }
    return {std::move(r), mode, clamp};
}

/// A_nu(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) nu(s') - nu(s).
inline Matrix advantage(const Vector& nu, const RewardTable& reward, const TabularMdp& dynamics,
                        double gamma) {
    const int S = dynamics.n_states(), A = dynamics.n_actions();
    detail::require(nu.size() == S && reward.values.rows() == S && reward.values.cols() == A,
                    "advantage: shape mismatch");
    const Vector next = dynamics.transition() * nu;
    Matrix adv(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) adv(s, a) = reward.values(s, a) + gamma * next[dynamics.row(s, a)] - nu[s];
    return adv;
}

namespace detail {

/// log sum_i D_i exp(x_i) over the support of D.
inline double log_mean_exp(const Matrix& total, const Matrix& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (total.data()[i] > 0.0) m = std::max(m, x.data()[i]);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (total.data()[i] > 0.0) acc += total.data()[i] * std::exp(x.data()[i] - m);
    return m + std::log(acc);
}

} // namespace detail

/// (1 - gamma) p0 . nu + log E_D[exp A].
inline double nu_objective(const Vector& nu, const Vector& p0, const StateActionDist& total,
                           const Matrix& advantage_table, double gamma) {
    detail::require(p0.size() == nu.size(), "nu_objective: shape mismatch");
    return (1.0 - gamma) * p0.dot(nu) + detail::log_mean_exp(total.mass(), advantage_table);
}

/// zeta*(s,a) = exp(A) / E_D[exp A] on the support of D, 0 elsewhere.
/// Equal to softmax_D(A - 1); the shift cancels in the normalization.
inline Matrix zeta_weights(const StateActionDist& total, const Matrix& advantage_table) {
    const double lme = detail::log_mean_exp(total.mass(), advantage_table);
    Matrix zeta = Matrix::Zero(advantage_table.rows(), advantage_table.cols());
    for (Eigen::Index i = 0; i < zeta.size(); ++i)
        if (total.mass().data()[i] > 0.0) zeta.data()[i] = std::exp(advantage_table.data()[i] - lme);
    return zeta;
}

/// Gradient of nu_objective: (1 - gamma) p0 + sum_{s,a} w(s,a) (gamma P(.|s,a) - e_s)
/// with w = D zeta*.
inline Vector nu_gradient(const Vector& nu, const Vector& p0, const StateActionDist& total,
                          const RewardTable& reward, const TabularMdp& dynamics, double gamma) {
    const Matrix w = zeta_weights(total, advantage(nu, reward, dynamics, gamma)).cwiseProduct(total.mass());
    const int S = dynamics.n_states(), A = dynamics.n_actions();
    Vector g = (1.0 - gamma) * p0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            if (w(s, a) == 0.0) continue;
            g += gamma * w(s, a) * dynamics.transition().row(dynamics.row(s, a)).transpose();
            g[s] -= w(s, a);
        }
    return g;
}

/// Closed-form weighted MLE: pi(a|s) proportional to zeta(s,a) D(s,a); states
/// without weight get uniform rows.
inline TabularPolicy extract_policy(const Matrix& zeta, const StateActionDist& total) {
    detail::require(zeta.rows() == total.mass().rows() && zeta.cols() == total.mass().cols(),
                    "extract_policy: shape mismatch");
    return conditional_policy(zeta.cwiseProduct(total.mass()));
}

/// Behavior cloning: the conditional of the expert distribution.
inline TabularPolicy behavior_cloning(const StateActionDist& expert) {
    return conditional_policy(expert.mass());
}

enum class SolverMethod { newton, gradient_descent };

struct SolverOptions {
    SolverMethod method = SolverMethod::newton;
    double lr = 0.05;        ///< initial step size for gradient descent
    double tol = 1e-8;       ///< stop when ||grad||_inf < tol
    int max_iters = 200'000;
};

struct SolveReport {
    Vector nu;
    Matrix zeta;
    TabularPolicy policy;
    std::vector<double> objective_trace;
    double lambda_star = 0.0; ///< -log E_D[exp(A_nu - 1)]
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

namespace detail {

// The problem restricted to the support of D: one row per supported (s,a).
struct DualProblem {
    Matrix M;         // K x S, rows gamma P(.|s,a) - e_s
    Vector r;         // K
    Vector log_d;     // K
    Vector linear;    // (1 - gamma) p0
    std::vector<Eigen::Index> cells; // column-major index into the S x A table

    double value(const Vector& nu, Vector* w = nullptr) const {
        const Vector z = log_d + r + M * nu;
        const double m = z.maxCoeff();
        const Vector e = (z.array() - m).exp().matrix();
        const double sum = e.sum();
        if (w) *w = e / sum;
        return linear.dot(nu) + m + std::log(sum);
    }
};

inline DualProblem make_problem(const Vector& p0, const StateActionDist& total,
                                const RewardTable& reward, const TabularMdp& dynamics, double gamma) {
    const int S = dynamics.n_states(), A = dynamics.n_actions();
    DualProblem pb;
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s)
            if (total(s, a) > 0.0) pb.cells.push_back(Eigen::Index(a) * S + s);
    const auto K = static_cast<Eigen::Index>(pb.cells.size());
    pb.M = Matrix::Zero(K, S);
    pb.r.resize(K);
    pb.log_d.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const int s = int(pb.cells[k] % S), a = int(pb.cells[k] / S);
        pb.M.row(k) = gamma * dynamics.transition().row(dynamics.row(s, a));
        pb.M(k, s) -= 1.0;
        pb.r[k] = reward.values(s, a);
        pb.log_d[k] = std::log(total(s, a));
    }
    pb.linear = (1.0 - gamma) * p0;
    return pb;
}

} // namespace detail

/// Minimizes the nu objective from nu = 0 and extracts zeta*, lambda* and the policy.
///
/// Newton's method with a ridge and Armijo backtracking is the default.
/// Plain gradient descent is kept as an option: its step halves on objective
/// increase and grows by 10% after each accepted step. Both record the
/// objective of every accepted iterate.
inline SolveReport solve_nu(const Vector& p0, const StateActionDist& total, const RewardTable& reward,
                            const TabularMdp& dynamics, double gamma, const SolverOptions& opts = {}) {
    detail::check_discount(gamma, "solve_nu");
    const int S = dynamics.n_states();
    detail::require(p0.size() == S && total.n_states() == S && total.n_actions() == dynamics.n_actions(),
                    "solve_nu: shape mismatch");
    detail::require(opts.tol > 0.0 && opts.max_iters > 0 && opts.lr > 0.0, "solve_nu: bad options");

    const auto pb = detail::make_problem(p0, total, reward, dynamics, gamma);
    Vector nu = Vector::Zero(S);
    Vector w;
    double f = pb.value(nu, &w);
    Vector g = pb.linear + pb.M.transpose() * w;

    SolveReport rep{Vector(), Matrix(), TabularPolicy::uniform(S, dynamics.n_actions()), {}, 0.0, 0.0, 0, false, {}};
    rep.objective_trace.push_back(f);

    double lr = opts.lr;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
        if (g.cwiseAbs().maxCoeff() < opts.tol) {
            rep.converged = true;
            break;
        }
        if (!std::isfinite(f) || f < -1e8) {
            rep.message = "objective unbounded below: the flow constraints are infeasible on the support of D";
            break;
        }
        if (opts.method == SolverMethod::newton) {
            // H = M^T (diag(w) - w w^T) M
            const Matrix WM = w.asDiagonal() * pb.M;
            const Vector mw = pb.M.transpose() * w;
            Matrix H = pb.M.transpose() * WM - mw * mw.transpose();
            const double ridge = 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
            H.diagonal().array() += ridge;
            Vector step = H.ldlt().solve(-g);
            double slope = g.dot(step);
            if (!step.allFinite() || slope >= 0.0) {
                step = -g;
                slope = -g.squaredNorm();
            }
            double t = 1.0;
            Vector w_new;
            double f_new = pb.value(nu + step, &w_new);
            int halvings = 0;
            while (!(f_new <= f + 1e-4 * t * slope) && halvings < 60) {
                t *= 0.5;
                ++halvings;
                f_new = pb.value(nu + t * step, &w_new);
            }
            if (!(f_new <= f)) {
                rep.message = "line search failed to decrease the objective";
                break;
            }
            nu += t * step;
            f = f_new;
            w = std::move(w_new);
        } else {
            Vector w_new;
            const Vector cand = nu - lr * g;
            const double f_new = pb.value(cand, &w_new);
            // near the optimum the decrease drops below round-off in f
            if (!(f_new <= f + 1e-14 * std::max(1.0, std::abs(f)))) {
                lr *= 0.5;
                if (lr < 1e-300) {
                    rep.message = "step size underflow";
                    break;
                }
                continue;
            }
            nu = cand;
            f = f_new;
            w = std::move(w_new);
            lr *= 1.1;
        }
        g = pb.linear + pb.M.transpose() * w;
        rep.objective_trace.push_back(f);
    }
    if (!rep.converged && rep.message.empty()) rep.message = "iteration limit reached";

    rep.iterations = it;
    rep.grad_norm = g.cwiseAbs().maxCoeff();
    rep.nu = nu;
    const Matrix adv = advantage(nu, reward, dynamics, gamma);
    rep.zeta = zeta_weights(total, adv);
    rep.lambda_star = 1.0 - detail::log_mean_exp(total.mass(), adv);
    rep.policy = extract_policy(rep.zeta, total);
    return rep;
}

/// Axis of a brute-force parameter grid: `points` values evenly spaced on [lower, upper].
struct GridAxis {
    double lower;
    double upper;
    int points;
};

struct BruteForceResult {
    std::vector<double> params;
    double kl;
};

using PolicyFamily = std::function<TabularPolicy(std::span<const double>)>;

/// Grid search for the policy parameters minimizing KL(d^pi || target), with
/// one 10x finer refinement pass around the best coarse cell.
inline BruteForceResult brute_force_kl_minimizer(const TabularMdp& mdp, const StateActionDist& target,
                                                 double gamma, const PolicyFamily& family,
                                                 const std::vector<GridAxis>& grid) {
    detail::require(!grid.empty() && grid.size() <= 2, "brute_force_kl_minimizer: need 1 or 2 free parameters");
    for (const auto& ax : grid)
        detail::require(ax.points >= 2 && ax.upper > ax.lower, "brute_force_kl_minimizer: bad grid axis");

    auto evaluate = [&](const std::vector<double>& x) {
        return kl_divergence(visitation(mdp, family(x), gamma), target);
    };
    auto search = [&](const std::vector<GridAxis>& axes, BruteForceResult& best) {
        const int nx = axes[0].points;
        const int ny = axes.size() > 1 ? axes[1].points : 1;
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j) {
                std::vector<double> x;
                x.push_back(axes[0].lower + (axes[0].upper - axes[0].lower) * i / (nx - 1));
                if (axes.size() > 1) x.push_back(axes[1].lower + (axes[1].upper - axes[1].lower) * j / (ny - 1));
                const double kl = evaluate(x);
                if (kl < best.kl) best = {std::move(x), kl};
            }
    };

    BruteForceResult best{{}, std::numeric_limits<double>::infinity()};
    search(grid, best);
    if (best.params.empty()) throw std::runtime_error("brute_force_kl_minimizer: KL infinite on the whole grid");

    std::vector<GridAxis> fine;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double step = (grid[k].upper - grid[k].lower) / (grid[k].points - 1);
        const double lo = std::max(grid[k].lower, best.params[k] - step);
        const double hi = std::min(grid[k].upper, best.params[k] + step);
        fine.push_back({lo, hi, static_cast<int>(std::lround((hi - lo) / (step / 10.0))) + 1});
    }
    search(fine, best);
    return best;
}

} // namespace dicelab
