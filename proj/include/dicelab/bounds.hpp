#pragma once

// Exact evaluation of the imitation error bound
//
//   |E_{d^pi_{P,g}}[r] - E_{d^E_{P,g}}[r]|
//     <= 2 R_max / (1 - gh) * ( (g - gh) / (1 - g) + gh eps_P / (1 - gh) + eps_pi / (1 - gh) )
//
// for training discount gh <= evaluation discount g and model P^ of P, and of
// the three lemmas it is assembled from. All expectations are computed from
// exact visitations; no sampling is involved.
//
// Model arguments named `est_dynamics` supply P^ together with the start
// distribution and rewards; build them with TabularMdp::with_transitions so
// they share p0 and R with the true model.

#include "dicelab/mdp.hpp"

#include <cmath>
#include <ostream>
#include <utility>

namespace dicelab {

struct BoundReport {
    double lhs = 0.0;
    double term_discrepancy = 0.0; ///< horizon mismatch between training and evaluation
    double term_dynamics = 0.0;    ///< model error
    double term_policy = 0.0;      ///< policy mismatch
    double eps_p = 0.0;
    double eps_pi = 0.0;
    double gamma = 0.0;
    double gamma_hat = 0.0;

    double rhs() const { return term_discrepancy + term_dynamics + term_policy; }
    bool holds(double slack = 1e-9) const { return lhs <= rhs() + slack; }
};

struct GapPair {
    double lhs;
    double rhs;
};

/// Per-(s,a) total variation 0.5 sum_s' |P^(s'|s,a) - P(s'|s,a)|, as an S x A table.
inline Matrix transition_tv(const TabularMdp& a, const TabularMdp& b) {
    detail::require(a.n_states() == b.n_states() && a.n_actions() == b.n_actions(),
                    "transition_tv: shape mismatch");
    Matrix tv(a.n_states(), a.n_actions());
    for (int s = 0; s < a.n_states(); ++s)
        for (int act = 0; act < a.n_actions(); ++act)
            tv(s, act) = 0.5 * (a.transition().row(a.row(s, act)) - b.transition().row(b.row(s, act)))
                                   .cwiseAbs()
                                   .sum();
    return tv;
}

/// Per-state total variation 0.5 sum_a |pi(a|s) - mu(a|s)|.
inline Vector policy_tv(const TabularPolicy& pi, const TabularPolicy& mu) {
    detail::require(pi.n_states() == mu.n_states() && pi.n_actions() == mu.n_actions(),
                    "policy_tv: shape mismatch");
    return 0.5 * (pi.probs() - mu.probs()).cwiseAbs().rowwise().sum();
}

/// E_{d^pi_{P^,gh}}[TV(P^||P)] + E_{d^E_{P^,gh}}[TV(P^||P)].
inline double epsilon_p(const TabularPolicy& pi, const TabularPolicy& expert, const TabularMdp& true_dynamics,
                        const TabularMdp& est_dynamics, double gamma_hat) {
    const Matrix tv = transition_tv(est_dynamics, true_dynamics);
    const auto d_pi = visitation(est_dynamics, pi, gamma_hat);
    const auto d_e = visitation(est_dynamics, expert, gamma_hat);
    return d_pi.mass().cwiseProduct(tv).sum() + d_e.mass().cwiseProduct(tv).sum();
}

/// E_{s ~ d^pi_{P^,gh}}[TV(pi(.|s) || pi^E(.|s))].
inline double epsilon_pi(const TabularPolicy& pi, const TabularPolicy& expert, const TabularMdp& est_dynamics,
                         double gamma_hat) {
    const Vector ds = visitation(est_dynamics, pi, gamma_hat).state_marginal();
    return ds.dot(policy_tv(pi, expert));
}

inline BoundReport theorem1_report(const TabularPolicy& pi, const TabularPolicy& expert,
                                   const TabularMdp& true_dynamics, const TabularMdp& est_dynamics,
                                   double gamma, double gamma_hat, double r_max) {
    detail::check_discount(gamma, "theorem1_report");
    detail::check_discount(gamma_hat, "theorem1_report");
    detail::require(gamma_hat <= gamma, "theorem1_report: training discount exceeds evaluation discount");
    detail::require(r_max > 0.0, "theorem1_report: r_max must be > 0");

    BoundReport rep;
    rep.gamma = gamma;
    rep.gamma_hat = gamma_hat;
    rep.lhs = std::abs(expected_reward(visitation(true_dynamics, pi, gamma), true_dynamics) -
                       expected_reward(visitation(true_dynamics, expert, gamma), true_dynamics));
    rep.eps_p = epsilon_p(pi, expert, true_dynamics, est_dynamics, gamma_hat);
    rep.eps_pi = epsilon_pi(pi, expert, est_dynamics, gamma_hat);
    const double scale = 2.0 * r_max / (1.0 - gamma_hat);
    rep.term_discrepancy = scale * (gamma - gamma_hat) / (1.0 - gamma);
    rep.term_dynamics = scale * gamma_hat * rep.eps_p / (1.0 - gamma_hat);
    rep.term_policy = scale * rep.eps_pi / (1.0 - gamma_hat);
    return rep;
}

/// Same policy, two discounts.
inline GapPair lemma1_gap(const TabularMdp& mdp, const TabularPolicy& policy, double gamma, double gamma_hat,
                          double r_max) {
    detail::require(gamma_hat <= gamma, "lemma1_gap: need gamma_hat <= gamma");
    const double lhs = std::abs(expected_reward(visitation(mdp, policy, gamma), mdp) -
                                expected_reward(visitation(mdp, policy, gamma_hat), mdp));
    return {lhs, r_max * (gamma - gamma_hat) / ((1.0 - gamma) * (1.0 - gamma_hat))};
}

/// Same policy, two models.
inline GapPair lemma2_gap(const TabularPolicy& policy, const TabularMdp& true_dynamics,
                          const TabularMdp& est_dynamics, double gamma, double r_max) {
    const auto d_est = visitation(est_dynamics, policy, gamma);
    const double lhs = std::abs(expected_reward(visitation(true_dynamics, policy, gamma), true_dynamics) -
                                expected_reward(d_est, true_dynamics));
    const double tv = d_est.mass().cwiseProduct(transition_tv(est_dynamics, true_dynamics)).sum();
    return {lhs, 2.0 * gamma * r_max / ((1.0 - gamma) * (1.0 - gamma)) * tv};
}

/// Two policies, same model.
inline GapPair lemma3_gap(const TabularPolicy& pi, const TabularPolicy& mu, const TabularMdp& mdp, double gamma,
                          double r_max) {
    const auto d_pi = visitation(mdp, pi, gamma);
    const double lhs = std::abs(expected_reward(d_pi, mdp) - expected_reward(visitation(mdp, mu, gamma), mdp));
    const double tv = d_pi.state_marginal().dot(policy_tv(pi, mu));
    return {lhs, 2.0 * r_max / ((1.0 - gamma) * (1.0 - gamma)) * tv};
}

/// Closed-form right-hand side as a function of the training discount.
inline double theorem1_rhs(double gamma, double gamma_hat, double eps_p, double eps_pi, double r_max) {
    const double scale = 2.0 * r_max / (1.0 - gamma_hat);
    return scale * ((gamma - gamma_hat) / (1.0 - gamma) + gamma_hat * eps_p / (1.0 - gamma_hat) +
                    eps_pi / (1.0 - gamma_hat));
}

} // namespace dicelab
