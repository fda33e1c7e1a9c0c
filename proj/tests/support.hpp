#pragma once

// Shared oracles for the test suites. Nothing here calls the solver code it
// is used to check, apart from the model types themselves.

#include "dicelab/dice.hpp"
#include "dicelab/mdp.hpp"
#include "dicelab/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <vector>

namespace testing_support {

using dicelab::Matrix;
using dicelab::Rng;
using dicelab::TabularMdp;
using dicelab::TabularPolicy;
using dicelab::Vector;

inline TabularPolicy random_policy(int S, int A, Rng& rng) {
    Matrix p(S, A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) p(s, a) = rng.exponential();
        p.row(s) /= p.row(s).sum();
    }
    return TabularPolicy(std::move(p));
}

inline Vector random_simplex(int n, Rng& rng) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.exponential();
    return v / v.sum();
}

/// Deterministic chain 0 -> 1 -> ... -> n-1 -> n-1 with a single action.
inline TabularMdp chain_mdp(int n) {
    Matrix P = Matrix::Zero(n, n);
    for (int s = 0; s + 1 < n; ++s) P(s, s + 1) = 1.0;
    P(n - 1, n - 1) = 1.0;
    Vector p0 = Vector::Zero(n);
    p0[0] = 1.0;
    return {std::move(P), std::move(p0), Matrix::Zero(n, 1), 1.0};
}

/// Frequencies of (s_T, a_T) with T ~ Geometric: P(T = t) = (1 - gamma) gamma^t.
inline Matrix mc_visitation(const TabularMdp& mdp, const TabularPolicy& pi, double gamma, int n, Rng& rng,
                            const Vector* p0 = nullptr) {
    Matrix freq = Matrix::Zero(mdp.n_states(), mdp.n_actions());
    const Vector& start = p0 ? *p0 : mdp.initial();
    for (int i = 0; i < n; ++i) {
        int s = static_cast<int>(rng.categorical(start));
        for (;;) {
            const int a = static_cast<int>(rng.categorical(pi.probs().row(s)));
            if (rng.uniform() >= gamma) {
                freq(s, a) += 1.0;
                break;
            }
            s = static_cast<int>(rng.categorical(mdp.transition().row(mdp.row(s, a))));
        }
    }
    return freq / double(n);
}

/// Per-entry z threshold giving a family-wise two-sided 3-sigma level
/// (coverage 0.9973) over `k` independent comparisons (Sidak correction).
inline double familywise_three_sigma(int k) {
    const double coverage = std::pow(0.9973002039367398, 1.0 / k);
    boost::math::normal nd;
    return boost::math::quantile(nd, 0.5 + coverage / 2.0);
}

/// Largest |estimate - exact| / standard error over entries with nonzero exact mass.
/// Entries with zero exact mass must have zero estimate, else +inf.
inline double max_z_score(const Matrix& estimate, const Matrix& exact, int n, int* entries = nullptr) {
    double worst = 0.0;
    int k = 0;
    for (Eigen::Index i = 0; i < exact.size(); ++i) {
        const double p = exact.data()[i], q = estimate.data()[i];
        if (p <= 0.0) {
            if (q != 0.0) return INFINITY;
            continue;
        }
        ++k;
        const double se = std::sqrt(p * (1.0 - p) / n);
        worst = std::max(worst, std::abs(q - p) / se);
    }
    if (entries) *entries = k;
    return worst;
}

/// Random dual-problem instance: model, data distribution with full support,
/// start distribution, reward table and a discount.
struct DualInstance {
    TabularMdp mdp;
    dicelab::StateActionDist total;
    Vector p0;
    dicelab::RewardTable reward;
    double gamma;
};

inline DualInstance random_dual_instance(std::uint64_t seed, int S = 6, int A = 3) {
    Rng rng{seed, 0xd1ce};
    dicelab::RandomMdpConfig c;
    c.n_states = S;
    c.n_actions = A;
    c.branching = std::min(S, 3);
    c.reward_sparsity = 0.3;
    c.seed = seed;
    auto mdp = dicelab::random_mdp(c);
    Matrix d(S, A), e(S, A);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        d.data()[i] = rng.exponential();
        e.data()[i] = rng.exponential();
    }
    dicelab::StateActionDist total(d / d.sum());
    dicelab::StateActionDist expert(e / e.sum());
    auto reward = dicelab::reward_table(expert, total, dicelab::RewardMode::empirical_ratio);
    const double gamma = 0.05 + 0.9 * rng.uniform();
    return {std::move(mdp), std::move(total), random_simplex(S, rng), std::move(reward), gamma};
}

} // namespace testing_support
