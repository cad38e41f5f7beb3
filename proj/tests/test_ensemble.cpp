#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cvek/ensemble.hpp"
#include "oracles.hpp"

using namespace cvek;

TEST(WeightsAvg, Examples) {
    EXPECT_EQ(weights_avg(1).values(), Eigen::VectorXd::Ones(1));
    EXPECT_TRUE(weights_avg(4).values().isApprox(Eigen::VectorXd::Constant(4, 0.25)));
    EXPECT_THROW(weights_avg(0), UsageError);
}

TEST(WeightsExp, Examples) {
    Eigen::MatrixXd E(2, 2);
    E << 1, 0, 0, 1;
    EXPECT_TRUE(weights_exp(E).values().isApprox(Eigen::Vector2d(0.5, 0.5)));

    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(3, 2);
    F(0, 1) = std::sqrt(std::log(3.0));
    const WeightVector w = weights_exp(F, 1.0);
    EXPECT_NEAR(w[0], 0.75, 1e-14);
    EXPECT_NEAR(w[1], 0.25, 1e-14);

    Eigen::MatrixXd G(2, 3);
    G << 1, 2, 3, 0, 1, 5;
    EXPECT_TRUE(weights_exp(G, 1e12).values().isApprox(Eigen::Vector3d::Constant(1.0 / 3), 1e-9));

    // Huge errors would underflow without the max shift.
    EXPECT_NO_THROW(weights_exp(1e4 * G, 1.0));
    EXPECT_THROW(weights_exp(G, 0.0), UsageError);
    G(0, 0) = NAN;
    EXPECT_THROW(weights_exp(G), NumericalError);
}

TEST(WeightsStack, Examples) {
    Eigen::MatrixXd E(3, 2);
    E << 0, 1, 0, -2, 0, 0.5;
    EXPECT_NEAR(weights_stack(E)[0], 1.0, 1e-12);

    // orthogonal residuals with norms a and b: u1 = b^2 / (a^2 + b^2)
    const double a = 2.0, b = 3.0;
    Eigen::MatrixXd O = Eigen::MatrixXd::Zero(4, 2);
    O(0, 0) = a;
    O(1, 1) = b;
    EXPECT_NEAR(weights_stack(O)[0], b * b / (a * a + b * b), 1e-8);

    Eigen::MatrixXd same(5, 2);
    same.col(0) << 1, -2, 3, 0, 1;
    same.col(1) = same.col(0);
    EXPECT_TRUE(weights_stack(same).values().isApprox(Eigen::Vector2d(0.5, 0.5)));
}

TEST(WeightsStack, MatchesSimplexGridSearch) {
    std::mt19937_64 rng(41);
    for (int k = 0; k < 50; ++k) {
        const Eigen::MatrixXd E = oracle::random_matrix(rng, 20, 3);
        const double got = stacking_objective(E, weights_stack(E).values());
        EXPECT_LE(got, oracle::simplex_grid_min(E, 0.01) + 1e-6);
    }
}

TEST(WeightsStack, DominatesAverageAndVertices) {
    std::mt19937_64 rng(42);
    for (int k = 0; k < 200; ++k) {
        const Eigen::MatrixXd E = oracle::random_matrix(rng, 15, 4);
        const double s = stacking_objective(E, weights_stack(E).values());
        EXPECT_LE(s, stacking_objective(E, weights_avg(4).values()) + 1e-12);
        for (int d = 0; d < 4; ++d) EXPECT_LE(s, stacking_objective(E, Eigen::Vector4d::Unit(d)) + 1e-12);
    }
}

TEST(Strategies, FuzzStaysOnSimplex) {
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> dims(1, 6);
    std::uniform_real_distribution<double> scale(-3, 3);
    for (int k = 0; k < 1000; ++k) {
        const Eigen::MatrixXd E = std::pow(10.0, scale(rng)) * oracle::random_matrix(rng, dims(rng) + 2, dims(rng));
        for (auto s : kAllStrategies) {
            const WeightVector w = compute_weights(s, E);
            EXPECT_GE(w.values().minCoeff(), 0.0);
            EXPECT_NEAR(w.values().sum(), 1.0, 1e-10);
        }
    }
}

TEST(ProjectToSimplex, KnownProjections) {
    EXPECT_TRUE(project_to_simplex(Eigen::Vector3d(0.2, 0.3, 0.5)).isApprox(Eigen::Vector3d(0.2, 0.3, 0.5)));
    EXPECT_TRUE(project_to_simplex(Eigen::Vector2d(2.0, 0.0)).isApprox(Eigen::Vector2d(1.0, 0.0)));
    EXPECT_TRUE(project_to_simplex(Eigen::Vector2d(1.0, 1.0)).isApprox(Eigen::Vector2d(0.5, 0.5)));
}

TEST(StrategyNames, Aliases) {
    EXPECT_EQ(strategy_from_string("erm"), Strategy::stack);
    EXPECT_EQ(strategy_from_string("avg"), Strategy::avg);
    EXPECT_THROW(strategy_from_string("median"), UsageError);
    EXPECT_THROW(WeightVector(Eigen::Vector2d(0.7, 0.7)), NumericalError);
}
