#include "dicelab/data.hpp"
#include "dicelab/toy.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dicelab;

namespace {

// KL(d^pi || E) computed from the exact visitation of the model.
double visitation_kl(double theta, double gamma) {
    return kl_divergence(visitation(toy::mdp(), toy::policy(theta), gamma), toy::empirical());
}

} // namespace

TEST(Toy, EmpiricalMatchesSampledExpertPaths) {
    // 6 copies of the a1 path and 4 of the a2 path
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 10; ++i) {
        const bool first = i < 6;
        trajs.push_back(first ? Trajectory{{{0, 0, 0, 1}, {1, 1, 0, 2}, {2, 2, 0, 2}}, 2}
                              : Trajectory{{{0, 0, 1, 2}, {1, 2, 0, 2}, {2, 2, 0, 2}}, 2});
    }
    const Dataset d(3, 2, 2, std::move(trajs));
    const auto E = empirical_distribution(d);
    EXPECT_LT((E.mass() - toy::empirical().mass()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Toy, ClosedFormKlMatchesVisitation) {
    for (double gamma : {0.1, 0.3, 0.5, 0.7, 0.9})
        for (double theta : {0.05, 0.3, 0.6, 0.95}) EXPECT_NEAR(toy::kl(theta, gamma), visitation_kl(theta, gamma), 1e-12);
}

TEST(Toy, DerivativeMatchesFiniteDifferences) {
    const double h = 1e-6;
    for (double gamma : {0.2, 0.5, 0.8})
        for (double theta : {0.1, 0.4, 0.6, 0.9}) {
            const double fd = (toy::kl(theta + h, gamma) - toy::kl(theta - h, gamma)) / (2 * h);
            EXPECT_NEAR(toy::kl_derivative(theta, gamma), fd, 1e-7);
        }
}

TEST(Toy, DerivativeVanishesAtExpertOnlyAtCriticalDiscount) {
    EXPECT_NEAR(toy::kl_derivative(0.6, toy::critical_gamma()), 0.0, 1e-14);
    for (double gamma : {0.3, 0.7, 0.9}) EXPECT_GT(std::abs(toy::kl_derivative(0.6, gamma)), 1e-3);
}

TEST(Toy, OptimalThetaAtCriticalDiscount) {
    EXPECT_NEAR(toy::optimal_theta(0.5), 0.6, 1e-6);
}

TEST(Toy, OptimalThetaMovesAwayElsewhere) {
    for (double gamma : {0.3, 0.7, 0.9}) EXPECT_GT(std::abs(toy::optimal_theta(gamma) - 0.6), 0.01) << gamma;
}

TEST(Toy, KlIsUnimodalInTheta) {
    for (int i = 1; i < 20; ++i) EXPECT_LE(toy::derivative_sign_changes(0.05 * i), 1);
}

TEST(Toy, OptimalThetaAgreesWithGrid) {
    for (double gamma : {0.2, 0.5, 0.8}) {
        double best = 0.0, best_f = INFINITY;
        for (int i = 1; i < 10000; ++i) {
            const double f = visitation_kl(i * 1e-4, gamma);
            if (f < best_f) best_f = f, best = i * 1e-4;
        }
        EXPECT_NEAR(toy::optimal_theta(gamma), best, 1e-4);
    }
}

TEST(Toy, CriticalDiscountSolvesBalanceEquation) {
    const double g = toy::critical_gamma();
    EXPECT_DOUBLE_EQ(7 * (1 - g), 2 + 3 * g);
}

TEST(Toy, RejectsBoundaryArguments) {
    EXPECT_THROW(toy::kl(0.0, 0.5), std::invalid_argument);
    EXPECT_THROW(toy::kl(0.5, 1.0), std::invalid_argument);
    EXPECT_THROW(toy::optimal_theta(0.0), std::invalid_argument);
}
