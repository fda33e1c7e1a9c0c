#pragma once

// Three-state illustration of the empirical-vs-discounted mismatch.
//
//   s0 --a1--> s1 --a1--> g,   s0 --a2--> g,   g --a1--> g   (all deterministic)
//
// The expert takes a1 in s0 with probability 0.6. Expert trajectories cut at
// timestep 2 are (s0,a1,s1,a1,g,a1) and (s0,a2,g,a1,g,a1) in ratio 6:4, so the
// empirical distribution is E = (1/5, 2/15, 1/5, 7/15) over
// (s0,a1), (s0,a2), (s1,a1), (g,a1). A learner pi_theta(a1|s0) = theta that
// matches its discounted visitation to E recovers theta = 0.6 only at
// gamma = 0.5.

#include "dicelab/mdp.hpp"

#include <cmath>
#include <stdexcept>

namespace dicelab::toy {

inline constexpr int s0 = 0, s1 = 1, g = 2;
inline constexpr int a1 = 0, a2 = 1;
inline constexpr double expert_theta = 0.6;

/// The toy model. Unused actions (a2 in s1 and g) lead to g; reward is zero.
inline TabularMdp mdp() {
    Matrix P = Matrix::Zero(6, 3);
    P(s0 * 2 + a1, s1) = 1.0;
    P(s0 * 2 + a2, g) = 1.0;
    P(s1 * 2 + a1, g) = 1.0;
    P(s1 * 2 + a2, g) = 1.0;
    P(g * 2 + a1, g) = 1.0;
    P(g * 2 + a2, g) = 1.0;
    Vector p0 = Vector::Zero(3);
    p0[s0] = 1.0;
    return {std::move(P), std::move(p0), Matrix::Zero(3, 2), 1.0};
}

inline TabularPolicy policy(double theta) {
    Matrix probs = Matrix::Zero(3, 2);
    probs(s0, a1) = theta;
    probs(s0, a2) = 1.0 - theta;
    probs(s1, a1) = 1.0;
    probs(g, a1) = 1.0;
    return TabularPolicy(std::move(probs));
}

inline StateActionDist empirical() {
    Matrix m = Matrix::Zero(3, 2);
    m(s0, a1) = 1.0 / 5.0;
    m(s0, a2) = 2.0 / 15.0;
    m(s1, a1) = 1.0 / 5.0;
    m(g, a1) = 7.0 / 15.0;
    return StateActionDist(std::move(m));
}

namespace detail {
inline void require_interior(double theta, double gamma) {
    if (!(theta > 0.0 && theta < 1.0 && gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("toy: theta and gamma must lie strictly inside (0, 1)");
}
} // namespace detail

/// Closed-form KL(d^pi_theta || E).
inline double kl(double theta, double gamma) {
    detail::require_interior(theta, gamma);
    const double d1 = theta * (1 - gamma);
    const double d2 = (1 - theta) * (1 - gamma);
    const double d3 = theta * gamma * (1 - gamma);
    const double d4 = (1 - theta) * gamma + theta * gamma * gamma;
    return d1 * std::log(d1 / (1.0 / 5)) + d2 * std::log(d2 / (2.0 / 15)) + d3 * std::log(d3 / (1.0 / 5)) +
           d4 * std::log(d4 / (7.0 / 15));
}

/// Closed-form d/dtheta of kl().
inline double kl_derivative(double theta, double gamma) {
    detail::require_interior(theta, gamma);
    return (1 - gamma) * ((1 + gamma) * std::log(theta) - std::log(1 - theta) + std::log(2.0 / 3.0)) +
           gamma * (1 - gamma) *
               (std::log(7 * gamma * (1 - gamma) / 3) - std::log((1 - theta) * gamma + theta * gamma * gamma));
}

/// Number of sign changes of kl_derivative on a uniform theta grid.
inline int derivative_sign_changes(double gamma, double lo = 0.01, double hi = 0.99, int points = 981) {
    int changes = 0;
    double prev = kl_derivative(lo, gamma);
    for (int i = 1; i < points; ++i) {
        const double cur = kl_derivative(lo + (hi - lo) * i / (points - 1), gamma);
        if ((cur > 0) != (prev > 0)) ++changes;
        prev = cur;
    }
    return changes;
}

/// argmin_theta kl(theta, gamma) by golden-section search down to a 1e-10 bracket.
inline double optimal_theta(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("toy: gamma must lie in (0, 1)");
    if (derivative_sign_changes(gamma) > 1) throw std::runtime_error("toy: kl is not unimodal in theta");
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 1e-12, hi = 1.0 - 1e-12;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = kl(x1, gamma), f2 = kl(x2, gamma);
    while (hi - lo > 1e-10) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = kl(x1, gamma);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = kl(x2, gamma);
        }
    }
    return 0.5 * (lo + hi);
}

/// Root of 7(1 - gamma) = 2 + 3 gamma, the discount at which theta* = 0.6.
inline constexpr double critical_gamma() { return 5.0 / 10.0; }

} // namespace dicelab::toy
