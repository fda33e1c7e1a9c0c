#include "dicelab/data.hpp"
#include "dicelab/dice.hpp"
#include "dicelab/toy.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dicelab;
using namespace testing_support;

namespace {

Trajectory toy_path(bool first) {
    using namespace toy;
    if (first) return {{{0, s0, a1, s1}, {1, s1, a1, g}, {2, g, a1, g}}, 2};
    return {{{0, s0, a2, g}, {1, g, a1, g}, {2, g, a1, g}}, 2};
}

Dataset toy_dataset(int n_first, int n_second) {
    std::vector<Trajectory> trajs(n_first, toy_path(true));
    trajs.insert(trajs.end(), n_second, toy_path(false));
    return {3, 2, 2, trajs};
}

// Expert 6:4 plus a suboptimal batch 2:8.
struct ToyPool {
    StateActionDist E = empirical_distribution(toy_dataset(6, 4));
    StateActionDist D = empirical_distribution(merge(toy_dataset(6, 4), toy_dataset(2, 8)));
};

Vector toy_start() { return Vector::Unit(3, toy::s0); }

double toy_theta(const SolveReport& rep) { return rep.policy(toy::s0, toy::a1); }

double independent_objective(const DualInstance& in, const Vector& nu) {
    // direct summation without max-subtraction; fine for moderate values
    double acc = 0.0;
    const int S = in.mdp.n_states(), A = in.mdp.n_actions();
    for (int a = A - 1; a >= 0; --a)
        for (int s = S - 1; s >= 0; --s) {
            double next = 0.0;
            for (int sn = S - 1; sn >= 0; --sn) next += in.mdp.transition(s, a, sn) * nu[sn];
            acc += in.total(s, a) * std::exp(in.reward.values(s, a) + in.gamma * next - nu[s]);
        }
    return (1 - in.gamma) * in.p0.dot(nu) + std::log(acc);
}

} // namespace

// --- reward_table ---------------------------------------------------------

TEST(RewardTable, ExpertEqualsTotalGivesZero) {
    const ToyPool pool;
    const auto r = reward_table(pool.D, pool.D, RewardMode::empirical_ratio);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a)
            if (pool.D(s, a) > 0) { EXPECT_EQ(r.values(s, a), 0.0); }
}

TEST(RewardTable, ToyEmpiricalRatioFromCounts) {
    const ToyPool pool;
    // pooled counts: (s0,a1) 8, (s0,a2) 12, (s1,a1) 8, (g,a1) 32 out of 60
    EXPECT_NEAR(pool.D(toy::s0, toy::a1), 8.0 / 60, 1e-15);
    const auto r = reward_table(pool.E, pool.D, RewardMode::empirical_ratio);
    EXPECT_NEAR(r.values(toy::s0, toy::a1), std::log((1.0 / 5) / (8.0 / 60)), 1e-14);
    EXPECT_NEAR(r.values(toy::s0, toy::a2), std::log((2.0 / 15) / (12.0 / 60)), 1e-14);
    EXPECT_NEAR(r.values(toy::g, toy::a1), std::log((7.0 / 15) / (32.0 / 60)), 1e-14);
    EXPECT_EQ(r.values(toy::g, toy::a2), -r.clamp);
    EXPECT_EQ(r.mode, RewardMode::empirical_ratio);
}

TEST(RewardTable, ClampBoundsEveryEntry) {
    Matrix e = Matrix::Zero(2, 2), d = Matrix::Zero(2, 2);
    e << 1 - 1e-12, 1e-12, 0, 0;
    d << 1e-12, 0.5, 0.5 - 1e-12, 0;
    const auto r = reward_table(StateActionDist(e), StateActionDist(d), RewardMode::empirical_ratio, 5.0);
    EXPECT_EQ(r.values(0, 0), 5.0);
    EXPECT_EQ(r.values(0, 1), -5.0);
    EXPECT_EQ(r.values(1, 0), -5.0); // expert has no mass
    EXPECT_EQ(r.values(1, 1), -5.0); // outside the data
    EXPECT_THROW(reward_table(StateActionDist(e), StateActionDist(d), RewardMode::empirical_ratio, 0.0),
                 std::invalid_argument);
}

// The discounted target at the critical discount differs from the truncated
// empirical one as a table; only the policy it induces coincides.
TEST(RewardTable, CriticalDiscountTablesDifferButPoliciesAgree) {
    const ToyPool pool;
    const double gamma = toy::critical_gamma();
    const auto dE = visitation(toy::mdp(), toy::policy(toy::expert_theta), gamma);
    EXPECT_NEAR(dE(toy::g, toy::a1), 0.35, 1e-15);
    const auto r_emp = reward_table(pool.E, pool.D, RewardMode::empirical_ratio);
    const auto r_disc = reward_table(dE, pool.D, RewardMode::discounted_ratio);
    EXPECT_GT((r_emp.values - r_disc.values).cwiseAbs().maxCoeff(), 0.1);

    const auto a = solve_nu(toy_start(), pool.D, r_emp, toy::mdp(), gamma);
    const auto b = solve_nu(toy_start(), pool.D, r_disc, toy::mdp(), gamma);
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_NEAR(toy_theta(a), 0.6, 1e-6);
    EXPECT_NEAR(toy_theta(b), 0.6, 1e-6);
}

TEST(RewardTable, ModesAgreeWhenTargetsCoincide) {
    // E built as the geometrically truncated occupancy sum_t gamma^t mu_t,
    // which is d^E, without calling visitation()
    RandomMdpConfig c;
    c.n_states = 6;
    c.n_actions = 2;
    c.branching = 3;
    c.seed = 3;
    const auto m = random_mdp(c);
    Rng rng(3);
    const auto pi = random_policy(6, 2, rng);
    const double gamma = 0.8;
    Matrix occ = Matrix::Zero(6, 2);
    Vector mu = m.initial();
    double w = 1.0;
    for (int t = 0; t < 400; ++t, w *= gamma) {
        Vector next = Vector::Zero(6);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 2; ++a) {
                occ(s, a) += w * mu[s] * pi(s, a);
                next += mu[s] * pi(s, a) * m.transition().row(m.row(s, a)).transpose();
            }
        mu = next;
    }
    const StateActionDist E(occ / occ.sum());
    const auto dE = visitation(m, pi, gamma);
    ASSERT_LT((E.mass() - dE.mass()).cwiseAbs().maxCoeff(), 1e-14);

    const StateActionDist D(Matrix::Constant(6, 2, 1.0 / 12));
    const auto a = solve_nu(m.initial(), D, reward_table(E, D, RewardMode::empirical_ratio), m, gamma);
    const auto b = solve_nu(m.initial(), D, reward_table(dE, D, RewardMode::discounted_ratio), m, gamma);
    EXPECT_LT((a.policy.probs() - b.policy.probs()).cwiseAbs().maxCoeff(), 1e-6);
    // and both recover the sampling policy on reachable states
    const Vector ds = dE.state_marginal();
    for (int s = 0; s < 6; ++s)
        if (ds[s] > 1e-9) { EXPECT_LT((a.policy.probs().row(s) - pi.probs().row(s)).cwiseAbs().maxCoeff(), 1e-6); }
}

// --- advantage and objective ----------------------------------------------

TEST(Advantage, ZeroNuIsReward) {
    const auto in = random_dual_instance(1);
    EXPECT_TRUE(advantage(Vector::Zero(6), in.reward, in.mdp, in.gamma) == in.reward.values);
}

TEST(Advantage, ConstantNuTelescopes) {
    const auto in = random_dual_instance(2);
    const double c = 3.7;
    const Matrix adv = advantage(Vector::Constant(6, c), in.reward, in.mdp, in.gamma);
    EXPECT_LT((adv.array() - (in.reward.values.array() + (in.gamma - 1) * c)).abs().maxCoeff(), 1e-12);
}

TEST(Advantage, MatchesIndependentSummation) {
    Rng rng(9);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto in = random_dual_instance(seed);
        Vector nu(6);
        for (int s = 0; s < 6; ++s) nu[s] = 4 * rng.uniform() - 2;
        const Matrix adv = advantage(nu, in.reward, in.mdp, in.gamma);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 3; ++a) {
                double next = 0.0;
                for (int sn = 5; sn >= 0; --sn) next += in.mdp.transition(s, a, sn) * nu[sn];
                EXPECT_NEAR(adv(s, a), in.reward.values(s, a) + in.gamma * next - nu[s], 1e-12);
            }
    }
}

TEST(NuObjective, ZeroAtOriginWithZeroReward) {
    const auto in = random_dual_instance(4);
    const RewardTable zero{Matrix::Zero(6, 3), RewardMode::empirical_ratio, kDefaultRewardClamp};
    const Vector nu = Vector::Zero(6);
    EXPECT_NEAR(nu_objective(nu, in.p0, in.total, advantage(nu, zero, in.mdp, in.gamma), in.gamma), 0.0, 1e-15);
}

TEST(NuObjective, ShiftInvariant) {
    Rng rng(10);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto in = random_dual_instance(seed);
        Vector nu(6);
        for (int s = 0; s < 6; ++s) nu[s] = 2 * rng.uniform() - 1;
        const auto f = [&](const Vector& v) {
            return nu_objective(v, in.p0, in.total, advantage(v, in.reward, in.mdp, in.gamma), in.gamma);
        };
        for (double c : {-5.0, 0.5, 10.0}) EXPECT_NEAR(f(nu), f((nu.array() + c).matrix()), 1e-10);
    }
}

TEST(NuObjective, MatchesDirectFormula) {
    Rng rng(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto in = random_dual_instance(seed);
        Vector nu(6);
        for (int s = 0; s < 6; ++s) nu[s] = 2 * rng.uniform() - 1;
        EXPECT_NEAR(nu_objective(nu, in.p0, in.total, advantage(nu, in.reward, in.mdp, in.gamma), in.gamma),
                    independent_objective(in, nu), 1e-12);
    }
}

TEST(NuGradient, MatchesCentralDifferences) {
    Rng rng(13);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto in = random_dual_instance(seed);
        Vector nu(6);
        for (int s = 0; s < 6; ++s) nu[s] = 2 * rng.uniform() - 1;
        const Vector g = nu_gradient(nu, in.p0, in.total, in.reward, in.mdp, in.gamma);
        const double h = 1e-5;
        Vector fd(6);
        for (int s = 0; s < 6; ++s) {
            Vector up = nu, dn = nu;
            up[s] += h;
            dn[s] -= h;
            fd[s] = (independent_objective(in, up) - independent_objective(in, dn)) / (2 * h);
        }
        EXPECT_LT((fd - g).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-12), 1e-4);
    }
}

// --- solve_nu -------------------------------------------------------------

TEST(SolveNu, SelfMatchingGivesUnitWeights) {
    const auto in = random_dual_instance(21);
    Rng rng(21);
    const auto pi = random_policy(6, 3, rng);
    const auto D = visitation(in.mdp, pi, in.gamma, in.p0);
    const RewardTable zero{Matrix::Zero(6, 3), RewardMode::empirical_ratio, kDefaultRewardClamp};
    const auto rep = solve_nu(in.p0, D, zero, in.mdp, in.gamma);
    ASSERT_TRUE(rep.converged) << rep.message;
    for (int s = 0; s < 6; ++s)
        for (int a = 0; a < 3; ++a)
            if (D(s, a) > 0) { EXPECT_NEAR(rep.zeta(s, a), 1.0, 1e-4); }
}

TEST(SolveNu, TwoStateFlowResidual) {
    Matrix P(4, 2);
    P << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.0, 1.0;
    const TabularMdp m(P, Vector::Unit(2, 0), Matrix::Zero(2, 2), 1.0);
    Matrix d(2, 2), e(2, 2);
    d << 0.4, 0.1, 0.3, 0.2;
    e << 0.1, 0.5, 0.1, 0.3;
    const StateActionDist D(d), E(e);
    for (auto method : {SolverMethod::newton, SolverMethod::gradient_descent}) {
        SolverOptions opts;
        opts.method = method;
        const auto rep = solve_nu(m.initial(), D, reward_table(E, D, RewardMode::empirical_ratio), m, 0.8, opts);
        ASSERT_TRUE(rep.converged) << rep.message;
        const StateActionDist induced(rep.zeta.cwiseProduct(D.mass()));
        EXPECT_LT(flow_residual(m, induced, 0.8, m.initial()), 1e-5);
    }
}

TEST(SolveNu, NewtonAndGradientDescentAgree) {
    const auto in = random_dual_instance(5, 4, 2);
    SolverOptions gd;
    gd.method = SolverMethod::gradient_descent;
    gd.tol = 1e-9;
    const auto a = solve_nu(in.p0, in.total, in.reward, in.mdp, in.gamma);
    const auto b = solve_nu(in.p0, in.total, in.reward, in.mdp, in.gamma, gd);
    ASSERT_TRUE(a.converged && b.converged) << b.message;
    EXPECT_LT((a.policy.probs() - b.policy.probs()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(a.objective_trace.back(), b.objective_trace.back(), 1e-10);
}

TEST(SolveNu, ToyCriticalDiscountRecoversExpert) {
    const ToyPool pool;
    const auto rep = solve_nu(toy_start(), pool.D, reward_table(pool.E, pool.D, RewardMode::empirical_ratio),
                              toy::mdp(), 0.5);
    ASSERT_TRUE(rep.converged);
    EXPECT_NEAR(toy_theta(rep), 0.6, 1e-3);
}

TEST(SolveNu, ReportDiagnostics) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto in = random_dual_instance(seed);
        const auto rep = solve_nu(in.p0, in.total, in.reward, in.mdp, in.gamma);
        ASSERT_TRUE(rep.converged) << rep.message;
        EXPECT_LT(rep.grad_norm, 1e-8);
        EXPECT_NEAR(rep.zeta.cwiseProduct(in.total.mass()).sum(), 1.0, 1e-9);
        for (double f : rep.objective_trace) EXPECT_TRUE(std::isfinite(f));
        const auto& tr = rep.objective_trace;
        for (std::size_t i = tr.size() > 10 ? tr.size() - 10 : 1; i < tr.size(); ++i)
            EXPECT_LE(tr[i], tr[i - 1] + 1e-9);
        // lambda* = -log E_D exp(A - 1)
        const Matrix adv = advantage(rep.nu, in.reward, in.mdp, in.gamma);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < adv.size(); ++i) acc += in.total.mass().data()[i] * std::exp(adv.data()[i] - 1);
        EXPECT_NEAR(rep.lambda_star, -std::log(acc), 1e-10);
        // zeta* = exp(A + lambda* - 1)
        for (Eigen::Index i = 0; i < adv.size(); ++i)
            EXPECT_NEAR(rep.zeta.data()[i], std::exp(adv.data()[i] + rep.lambda_star - 1), 1e-9);
    }
}

TEST(SolveNu, IterationLimitReportsNonConvergence) {
    const auto in = random_dual_instance(7);
    SolverOptions opts;
    opts.method = SolverMethod::gradient_descent;
    opts.max_iters = 3;
    const auto rep = solve_nu(in.p0, in.total, in.reward, in.mdp, in.gamma, opts);
    EXPECT_FALSE(rep.converged);
    EXPECT_EQ(rep.message, "iteration limit reached");
    EXPECT_TRUE(rep.policy.probs().allFinite());
}

TEST(SolveNu, StartOutsideDataIsUnbounded) {
    // start state 1 has no data, so its multiplier can decrease without bound
    Matrix P(4, 2);
    P << 1, 0, 0, 1, 1, 0, 0, 1;
    const TabularMdp m(P, Vector::Unit(2, 1), Matrix::Zero(2, 2), 1.0);
    Matrix d(2, 2);
    d << 0.5, 0.5, 0, 0;
    const StateActionDist D(d);
    const auto rep = solve_nu(m.initial(), D, reward_table(D, D, RewardMode::empirical_ratio), m, 0.9);
    EXPECT_FALSE(rep.converged);
    EXPECT_NE(rep.message.find("unbounded"), std::string::npos) << rep.message;
}

TEST(SolveNu, DualOptimumMatchesBruteForceKl) {
    // two states, two actions: the policy family has exactly two free parameters
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto in = random_dual_instance(100 + seed, 2, 2);
        Rng rng(seed);
        Matrix e(2, 2);
        for (Eigen::Index i = 0; i < 4; ++i) e.data()[i] = rng.exponential();
        const StateActionDist target(e / e.sum());
        const auto family = [](std::span<const double> x) {
            Matrix p(2, 2);
            p << x[0], 1 - x[0], x[1], 1 - x[1];
            return TabularPolicy(p);
        };
        const auto bf = brute_force_kl_minimizer(in.mdp.with_initial(in.p0), target, in.gamma, family,
                                                 {{0.0, 1.0, 201}, {0.0, 1.0, 201}});
        const auto rep = solve_nu(in.p0, in.total, reward_table(target, in.total, RewardMode::empirical_ratio),
                                  in.mdp, in.gamma);
        ASSERT_TRUE(rep.converged);
        const double kl = kl_divergence(visitation(in.mdp, rep.policy, in.gamma, in.p0), target);
        EXPECT_LE(kl, bf.kl + 1e-9);
        EXPECT_NEAR(kl, bf.kl, 1e-3);
    }
}

// --- policy extraction ----------------------------------------------------

TEST(ExtractPolicy, UnitWeightsGiveConditionalOfData) {
    const auto in = random_dual_instance(30);
    const auto pi = extract_policy(Matrix::Ones(6, 3), in.total);
    for (int s = 0; s < 6; ++s)
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(pi(s, a), in.total(s, a) / in.total.mass().row(s).sum(), 1e-15);
}

TEST(ExtractPolicy, ConcentratedWeightIsDeterministic) {
    const auto in = random_dual_instance(31);
    Matrix zeta = Matrix::Zero(6, 3);
    for (int s = 0; s < 6; ++s) zeta(s, s % 3) = 2.0;
    const auto pi = extract_policy(zeta, in.total);
    for (int s = 0; s < 6; ++s) EXPECT_EQ(pi(s, s % 3), 1.0);
}

TEST(ExtractPolicy, EmptyStatesGetUniformRows) {
    Matrix d = Matrix::Zero(3, 2);
    d << 0.5, 0.5, 0, 0, 0, 0;
    const auto pi = extract_policy(Matrix::Ones(3, 2), StateActionDist(d));
    EXPECT_EQ(pi(1, 0), 0.5);
    EXPECT_EQ(pi(2, 1), 0.5);
}

TEST(ExtractPolicy, MatchesIterativeWeightedMle) {
    Rng rng(32);
    const auto in = random_dual_instance(32);
    Matrix zeta(6, 3);
    for (Eigen::Index i = 0; i < zeta.size(); ++i) zeta.data()[i] = rng.exponential();
    const Matrix w = zeta.cwiseProduct(in.total.mass());
    // mirror ascent on each row of the weighted log-likelihood sum_a w log pi
    Matrix pi = Matrix::Constant(6, 3, 1.0 / 3);
    for (int it = 0; it < 2000; ++it) {
        for (int s = 0; s < 6; ++s) {
            const double z = w.row(s).sum();
            for (int a = 0; a < 3; ++a) pi(s, a) *= std::exp(0.5 * (w(s, a) / (z * pi(s, a)) - 1.0));
            pi.row(s) /= pi.row(s).sum();
        }
    }
    EXPECT_LT((extract_policy(zeta, in.total).probs() - pi).cwiseAbs().maxCoeff(), 1e-8);
}

// --- behavior cloning -----------------------------------------------------

TEST(BehaviorCloning, ToyExpert) {
    const auto pi = behavior_cloning(toy::empirical());
    EXPECT_NEAR(pi(toy::s0, toy::a1), 0.6, 1e-15);
    EXPECT_NEAR(pi(toy::s0, toy::a2), 0.4, 1e-15);
}

TEST(BehaviorCloning, PointMassIsDeterministic) {
    Matrix e = Matrix::Zero(3, 2);
    e(1, 1) = 1.0;
    const auto pi = behavior_cloning(StateActionDist(e));
    EXPECT_EQ(pi(1, 1), 1.0);
    EXPECT_EQ(pi(1, 0), 0.0);
}

TEST(BehaviorCloning, DeterministicExpertHasZeroCrossEntropy) {
    RandomMdpConfig c;
    c.seed = 9;
    const auto m = random_mdp(c);
    const auto expert = greedy_policy(optimal_q(m, 0.9));
    const auto data = sample_trajectories(m, expert, 5, 30, std::uint64_t{9});
    const auto E = empirical_distribution(data);
    const auto pi = behavior_cloning(E);
    double ce = 0.0;
    for (int s = 0; s < 50; ++s)
        for (int a = 0; a < 4; ++a)
            if (E(s, a) > 0) ce -= E(s, a) * std::log(pi(s, a));
    EXPECT_EQ(ce, 0.0);
}

// --- brute force ----------------------------------------------------------

TEST(BruteForce, RecoversGridPointTarget) {
    const auto family = [](std::span<const double> x) { return toy::policy(x[0]); };
    const auto target = visitation(toy::mdp(), toy::policy(0.35), 0.7);
    const auto bf = brute_force_kl_minimizer(toy::mdp(), target, 0.7, family, {{0.05, 0.95, 19}});
    EXPECT_NEAR(bf.params[0], 0.35, 1e-12);
    EXPECT_NEAR(bf.kl, 0.0, 1e-14);
}

TEST(BruteForce, ToyOptimumMovesAwayFromExpert) {
    const auto family = [](std::span<const double> x) { return toy::policy(x[0]); };
    const auto bf9 = brute_force_kl_minimizer(toy::mdp(), toy::empirical(), 0.9, family, {{0.001, 0.999, 999}});
    EXPECT_GT(std::abs(bf9.params[0] - 0.6), 0.01);
    const auto bf5 = brute_force_kl_minimizer(toy::mdp(), toy::empirical(), 0.5, family, {{0.001, 0.999, 999}});
    EXPECT_NEAR(bf5.params[0], 0.6, 1e-4);
}

TEST(BruteForce, RejectsTooManyParameters) {
    const auto family = [](std::span<const double> x) { return toy::policy(x[0]); };
    EXPECT_THROW(brute_force_kl_minimizer(toy::mdp(), toy::empirical(), 0.5, family,
                                          {{0, 1, 3}, {0, 1, 3}, {0, 1, 3}}),
                 std::invalid_argument);
}
