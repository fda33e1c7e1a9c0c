#pragma once

#include "dicelab/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline void check_discount(double gamma, const char* where) {
    require(gamma >= 0.0 && gamma < 1.0, std::string(where) + ": discount must lie in [0, 1)");
}

inline void check_probability_vector(const Vector& v, double tol, const std::string& what) {
    require(v.size() > 0, what + ": empty");
    for (Eigen::Index i = 0; i < v.size(); ++i)
        require(std::isfinite(v[i]) && v[i] >= 0.0, what + ": negative or non-finite entry");
    require(std::abs(v.sum() - 1.0) <= tol, what + ": does not sum to 1");
}

} // namespace detail

/// Finite MDP (S, A, P, p0, R) with rewards bounded in [0, r_max].
///
/// Transitions are stored as an (S*A) x S matrix whose row `s*A + a` is
/// P(.|s,a). The discount factor is not part of the model; every solver takes
/// it explicitly so the same model serves training and evaluation horizons.
class TabularMdp {
public:
    TabularMdp(Matrix transition, Vector initial, Matrix reward, double r_max)
        : transition_(std::move(transition)), initial_(std::move(initial)),
          reward_(std::move(reward)), r_max_(r_max) {
        const auto S = initial_.size();
        detail::require(S > 0, "TabularMdp: no states");
        detail::require(reward_.rows() == S && reward_.cols() > 0,
                        "TabularMdp: reward must be S x A");
        const auto A = reward_.cols();
        detail::require(transition_.rows() == S * A && transition_.cols() == S,
                        "TabularMdp: transition must be (S*A) x S");
        detail::require(r_max_ > 0.0 && std::isfinite(r_max_), "TabularMdp: r_max must be > 0");
        for (Eigen::Index i = 0; i < transition_.rows(); ++i)
            detail::check_probability_vector(transition_.row(i).transpose(), 1e-12,
                                             "TabularMdp: transition row " + std::to_string(i));
        detail::check_probability_vector(initial_, 1e-12, "TabularMdp: initial distribution");
        for (Eigen::Index i = 0; i < reward_.size(); ++i)
            detail::require(reward_.data()[i] >= 0.0 && reward_.data()[i] <= r_max_,
                            "TabularMdp: reward outside [0, r_max]");
    }

    int n_states() const { return static_cast<int>(initial_.size()); }
    int n_actions() const { return static_cast<int>(reward_.cols()); }

    const Matrix& transition() const { return transition_; }
    double transition(int s, int a, int s_next) const { return transition_(row(s, a), s_next); }
    Eigen::Index row(int s, int a) const { return Eigen::Index(s) * n_actions() + a; }

    const Vector& initial() const { return initial_; }
    const Matrix& reward() const { return reward_; }
    double r_max() const { return r_max_; }

    TabularMdp with_transitions(Matrix transition) const {
        return {std::move(transition), initial_, reward_, r_max_};
    }
    TabularMdp with_initial(Vector initial) const {
        return {transition_, std::move(initial), reward_, r_max_};
    }

    friend bool operator==(const TabularMdp& a, const TabularMdp& b) {
        return a.r_max_ == b.r_max_ && a.transition_ == b.transition_ && a.initial_ == b.initial_ &&
               a.reward_ == b.reward_;
    }

private:
    Matrix transition_;
    Vector initial_;
    Matrix reward_;
    double r_max_;
};

/// Stochastic policy pi(a|s) stored as an S x A row-stochastic matrix.
class TabularPolicy {
public:
    explicit TabularPolicy(Matrix probs) : probs_(std::move(probs)) {
        detail::require(probs_.rows() > 0 && probs_.cols() > 0, "TabularPolicy: empty");
        for (Eigen::Index s = 0; s < probs_.rows(); ++s)
            detail::check_probability_vector(probs_.row(s).transpose(), 1e-12,
                                             "TabularPolicy: row " + std::to_string(s));
    }

    static TabularPolicy uniform(int n_states, int n_actions) {
        return TabularPolicy(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
    }

    int n_states() const { return static_cast<int>(probs_.rows()); }
    int n_actions() const { return static_cast<int>(probs_.cols()); }
    double operator()(int s, int a) const { return probs_(s, a); }
    const Matrix& probs() const { return probs_; }

private:
    Matrix probs_;
};

/// Normalized nonnegative mass over S x A.
class StateActionDist {
public:
    explicit StateActionDist(Matrix mass) : mass_(std::move(mass)) {
        detail::require(mass_.size() > 0, "StateActionDist: empty");
        for (Eigen::Index i = 0; i < mass_.size(); ++i)
            detail::require(std::isfinite(mass_.data()[i]) && mass_.data()[i] >= 0.0,
                            "StateActionDist: negative or non-finite mass");
        detail::require(std::abs(mass_.sum() - 1.0) <= 1e-9, "StateActionDist: mass does not sum to 1");
    }

    int n_states() const { return static_cast<int>(mass_.rows()); }
    int n_actions() const { return static_cast<int>(mass_.cols()); }
    double operator()(int s, int a) const { return mass_(s, a); }
    const Matrix& mass() const { return mass_; }

    /// Marginal over states.
    Vector state_marginal() const { return mass_.rowwise().sum(); }

private:
    Matrix mass_;
};

struct RandomMdpConfig {
    int n_states = 50;
    int n_actions = 4;
    int branching = 4;
    double reward_sparsity = 0.02;
    double r_max = 1.0;
    std::uint64_t seed = 0;
};

/// Random MDP with `branching` successors per (s,a) and flat-Dirichlet rows.
///
/// A fraction `reward_sparsity` of the state-action pairs (at least one) gets
/// a reward uniform on (0, r_max]; all other rewards are 0. Episodes start in
/// state 0.
inline TabularMdp random_mdp(const RandomMdpConfig& config) {
    const int S = config.n_states, A = config.n_actions;
    detail::require(S > 0 && A > 0, "random_mdp: n_states and n_actions must be positive");
    detail::require(config.branching > 0, "random_mdp: branching must be positive");
    detail::require(config.branching <= S, "random_mdp: branching exceeds n_states");
    detail::require(config.reward_sparsity > 0.0 && config.reward_sparsity <= 1.0,
                    "random_mdp: reward_sparsity must lie in (0, 1]");
    detail::require(config.r_max > 0.0, "random_mdp: r_max must be > 0");

    Rng rng(config.seed);
    Matrix P = Matrix::Zero(Eigen::Index(S) * A, S);
    std::vector<int> states(S);
    for (Eigen::Index row = 0; row < P.rows(); ++row) {
        std::iota(states.begin(), states.end(), 0);
        // partial Fisher-Yates: the first `branching` entries are a uniform subset
        for (int k = 0; k < config.branching; ++k) {
            const auto j = k + rng.index(std::size_t(S - k));
            std::swap(states[k], states[j]);
        }
        std::vector<double> w(config.branching);
        double total = 0.0;
        for (auto& x : w) {
            // exponential draws of 0 are possible only for u == 0; keep rows strictly positive
            do {
                x = rng.exponential();
            } while (x <= 0.0);
            total += x;
        }
        for (int k = 0; k < config.branching; ++k) P(row, states[k]) = w[k] / total;
    }

    const int pairs = S * A;
    const int rewarded =
        std::clamp(static_cast<int>(std::llround(config.reward_sparsity * pairs)), 1, pairs);
    std::vector<int> idx(pairs);
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < rewarded; ++k) {
        const auto j = k + rng.index(std::size_t(pairs - k));
        std::swap(idx[k], idx[j]);
    }
    Matrix R = Matrix::Zero(S, A);
    for (int k = 0; k < rewarded; ++k)
        R(idx[k] / A, idx[k] % A) = config.r_max * (1.0 - rng.uniform());

    Vector p0 = Vector::Zero(S);
    p0[0] = 1.0;
    return {std::move(P), std::move(p0), std::move(R), config.r_max};
}

/// State-to-state transition matrix under a policy: P_pi(s, s').
inline Matrix policy_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
    const int S = mdp.n_states(), A = mdp.n_actions();
    detail::require(policy.n_states() == S && policy.n_actions() == A,
                    "policy shape does not match MDP");
    Matrix Ppi = Matrix::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            if (policy(s, a) != 0.0) Ppi.row(s) += policy(s, a) * mdp.transition().row(mdp.row(s, a));
    return Ppi;
}

/// Expected one-step reward under a policy: r_pi(s).
inline Vector policy_reward(const TabularMdp& mdp, const TabularPolicy& policy) {
    return (mdp.reward().cwiseProduct(policy.probs())).rowwise().sum();
}

/// Normalized discounted state-action visitation d(s,a) of `policy`.
///
/// Solves the state flow system (I - gamma P_pi^T) d = (1 - gamma) p0 directly
/// and sets d(s,a) = d(s) pi(a|s).
inline StateActionDist visitation(const TabularMdp& mdp, const TabularPolicy& policy, double gamma,
                                  const Vector& p0) {
    detail::check_discount(gamma, "visitation");
    const int S = mdp.n_states();
    detail::require(p0.size() == S, "visitation: initial distribution has wrong length");
    detail::check_probability_vector(p0, 1e-9, "visitation: initial distribution");

    const Matrix Ppi = policy_transition(mdp, policy);
    const Matrix lhs = Matrix::Identity(S, S) - gamma * Ppi.transpose();
    Eigen::PartialPivLU<Matrix> lu(lhs);
    Vector d = lu.solve((1.0 - gamma) * p0);
    if (!d.allFinite()) throw std::runtime_error("visitation: linear solve failed");
    // round-off can leave entries like -1e-18 on unreachable states
    d = d.cwiseMax(0.0);
    d /= d.sum();

    Matrix mass = policy.probs();
    for (int s = 0; s < S; ++s) mass.row(s) *= d[s];
    return StateActionDist(std::move(mass));
}

inline StateActionDist visitation(const TabularMdp& mdp, const TabularPolicy& policy, double gamma) {
    return visitation(mdp, policy, gamma, mdp.initial());
}

/// Largest flow-equation violation of `dist` under (mdp, gamma, p0).
inline double flow_residual(const TabularMdp& mdp, const StateActionDist& dist, double gamma,
                            const Vector& p0) {
    const int S = mdp.n_states(), A = mdp.n_actions();
    Vector inflow = Vector::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            inflow += dist(s, a) * mdp.transition().row(mdp.row(s, a)).transpose();
    const Vector r = dist.state_marginal() - (1.0 - gamma) * p0 - gamma * inflow;
    return r.cwiseAbs().maxCoeff();
}

inline double expected_reward(const StateActionDist& dist, const TabularMdp& mdp) {
    detail::require(dist.n_states() == mdp.n_states() && dist.n_actions() == mdp.n_actions(),
                    "expected_reward: shape mismatch");
    return dist.mass().cwiseProduct(mdp.reward()).sum();
}

/// Exact state values V^pi for discount gamma.
inline Vector policy_values(const TabularMdp& mdp, const TabularPolicy& policy, double gamma) {
    detail::check_discount(gamma, "policy_values");
    const int S = mdp.n_states();
    const Matrix lhs = Matrix::Identity(S, S) - gamma * policy_transition(mdp, policy);
    return Eigen::PartialPivLU<Matrix>(lhs).solve(policy_reward(mdp, policy));
}

/// E_{s ~ p0}[V^pi(s)].
inline double initial_value(const TabularMdp& mdp, const TabularPolicy& policy, double gamma) {
    return mdp.initial().dot(policy_values(mdp, policy, gamma));
}

namespace detail {

inline Matrix bellman_backup(const TabularMdp& mdp, const Matrix& q, double gamma) {
    const int S = mdp.n_states(), A = mdp.n_actions();
    const Vector v = q.rowwise().maxCoeff();
    const Vector next = mdp.transition() * v; // indexed by s*A + a
    Matrix out(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) out(s, a) = mdp.reward()(s, a) + gamma * next[mdp.row(s, a)];
    return out;
}

} // namespace detail

/// Optimal action values by value iteration, run until the Bellman residual
/// ||Q - T Q||_inf drops below `tol`.
inline Matrix optimal_q(const TabularMdp& mdp, double gamma, double tol = 1e-10,
                        int max_iters = 10'000'000) {
    detail::check_discount(gamma, "optimal_q");
    Matrix q = mdp.reward();
    if (gamma == 0.0) return q;
    for (int it = 0; it < max_iters; ++it) {
        Matrix next = detail::bellman_backup(mdp, q, gamma);
        const double step = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        // residual of the new iterate is at most gamma * step
        if (gamma * step < tol) return q;
    }
    throw std::runtime_error("optimal_q: value iteration did not reach tolerance");
}

inline double bellman_residual(const TabularMdp& mdp, const Matrix& q, double gamma) {
    return (q - detail::bellman_backup(mdp, q, gamma)).cwiseAbs().maxCoeff();
}

/// Deterministic policy taking argmax_a Q(s,a) (lowest index on ties).
inline TabularPolicy greedy_policy(const Matrix& q) {
    Matrix probs = Matrix::Zero(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best;
        q.row(s).maxCoeff(&best);
        probs(s, best) = 1.0;
    }
    return TabularPolicy(std::move(probs));
}

/// Boltzmann policy pi(a|s) proportional to exp(Q(s,a) / temperature).
inline TabularPolicy softmax_policy(const Matrix& q, double temperature) {
    detail::require(temperature > 0.0 && std::isfinite(temperature),
                    "softmax_policy: temperature must be > 0");
    Matrix probs(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double m = q.row(s).maxCoeff();
        probs.row(s) = ((q.row(s).array() - m) / temperature).exp().matrix();
        probs.row(s) /= probs.row(s).sum();
    }
    return TabularPolicy(std::move(probs));
}

inline TabularPolicy mix_policies(const TabularPolicy& a, const TabularPolicy& b, double weight_a) {
    Matrix probs = weight_a * a.probs() + (1.0 - weight_a) * b.probs();
    for (Eigen::Index s = 0; s < probs.rows(); ++s) probs.row(s) /= probs.row(s).sum();
    return TabularPolicy(std::move(probs));
}

struct SuboptimalPolicy {
    TabularPolicy policy;
    double mixing;       ///< weight on the greedy policy
    double target_value; ///< omega E[V*] + (1 - omega) E[V_unif]
    double achieved_value;
};

/// Mixture of the greedy and uniform policies whose expected initial value
/// interpolates between the optimal and uniform values with weight `omega`.
///
/// The mixing weight is found by bisection on the exact policy value.
inline SuboptimalPolicy suboptimal_policy(const TabularMdp& mdp, double gamma, double omega) {
    detail::require(omega >= 0.0 && omega <= 1.0, "suboptimal_policy: omega must lie in [0, 1]");
    const Matrix q = optimal_q(mdp, gamma);
    const TabularPolicy greedy = greedy_policy(q);
    const TabularPolicy unif = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());

    const double v_star = mdp.initial().dot(Vector(q.rowwise().maxCoeff()));
    const double v_unif = initial_value(mdp, unif, gamma);
    const double target = omega * v_star + (1.0 - omega) * v_unif;
    const double tol = 1e-6 * mdp.r_max() / (1.0 - gamma);

    auto value_at = [&](double beta) { return initial_value(mdp, mix_policies(greedy, unif, beta), gamma); };

    double lo = 0.0, hi = 1.0;
    double f_lo = v_unif - target, f_hi = value_at(1.0) - target;
    double beta = omega;
    if (std::abs(f_lo) <= tol) {
        beta = 0.0;
    } else if (std::abs(f_hi) <= tol || f_lo * f_hi > 0.0) {
        // target at (or numerically beyond) the greedy end
        beta = std::abs(f_hi) <= std::abs(f_lo) ? 1.0 : 0.0;
    } else {
        for (int it = 0; it < 60; ++it) {
            beta = 0.5 * (lo + hi);
            const double f = value_at(beta) - target;
            if (std::abs(f) <= 1e-3 * tol) break;
            if ((f < 0.0) == (f_lo < 0.0)) {
                lo = beta;
                f_lo = f;
            } else {
                hi = beta;
            }
        }
    }
    TabularPolicy policy = mix_policies(greedy, unif, beta);
    const double achieved = initial_value(mdp, policy, gamma);
    return {std::move(policy), beta, target, achieved};
}

/// KL(p || q) with 0 log 0 = 0; +infinity when p has mass where q has none.
inline double kl_divergence(const StateActionDist& p, const StateActionDist& q) {
    detail::require(p.mass().rows() == q.mass().rows() && p.mass().cols() == q.mass().cols(),
                    "kl_divergence: shape mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.mass().size(); ++i) {
        const double pi = p.mass().data()[i], qi = q.mass().data()[i];
        if (pi == 0.0) continue;
        if (qi == 0.0) return std::numeric_limits<double>::infinity();
        total += pi * std::log(pi / qi);
    }
    return std::max(total, 0.0);
}

/// Conditional pi(a|s) = d(s,a) / d(s); rows with no mass become uniform.
inline TabularPolicy conditional_policy(const Matrix& mass) {
    Matrix probs(mass.rows(), mass.cols());
    for (Eigen::Index s = 0; s < mass.rows(); ++s) {
        const double z = mass.row(s).sum();
        if (z > 0.0)
            probs.row(s) = mass.row(s) / z;
        else
            probs.row(s).setConstant(1.0 / double(mass.cols()));
    }
    return TabularPolicy(std::move(probs));
}

} // namespace dicelab
