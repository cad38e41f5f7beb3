#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cvek/kernel.hpp"
#include "oracles.hpp"

using namespace cvek;

namespace {

std::vector<KernelSpec> one_of_each() {
    return {KernelSpec::intercept(),
            KernelSpec::linear(),
            KernelSpec::polynomial(2),
            KernelSpec::rbf(0.8),
            KernelSpec::matern(MaternNu::half, 1.2),
            KernelSpec::matern(MaternNu::three_halves, 1.0),
            KernelSpec::matern(MaternNu::five_halves, 0.7),
            KernelSpec::rational(2.0, 1.0),
            KernelSpec::nn()};
}

}  // namespace

TEST(EvalKernel, HandValues) {
    EXPECT_EQ(eval_kernel(KernelSpec::intercept(), {0.3, -1.2}, {5.0, 5.0}), 1.0);
    EXPECT_EQ(eval_kernel(KernelSpec::rbf(1.0), {0.4, 2.0}, {0.4, 2.0}), 1.0);
    EXPECT_EQ(eval_kernel(KernelSpec::polynomial(0), {1.0, 7.0}, {-3.0, 2.0}), 1.0);
    EXPECT_EQ(eval_kernel(KernelSpec::linear(), {1.0, 2.0}, {3.0, 4.0}), 11.0);
    EXPECT_EQ(eval_kernel(KernelSpec::matern(MaternNu::three_halves, 1.0), {0.5, 0.5}, {0.5, 0.5}), 1.0);
    // |x - x2|^2 = 2
    EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::rbf(1.0), {0.0, 0.0}, {1.0, 1.0}), std::exp(-1.0));
}

TEST(EvalKernel, MaternClosedFormsByHand) {
    const double r = 0.9, l = 1.3;
    const std::vector<double> x{0.0}, x2{r};
    EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::matern(MaternNu::half, l), x, x2), std::exp(-r / l));
    const double s3 = std::sqrt(3.0) * r / l;
    EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::matern(MaternNu::three_halves, l), x, x2), (1 + s3) * std::exp(-s3));
    const double s5 = std::sqrt(5.0) * r / l;
    EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::matern(MaternNu::five_halves, l), x, x2),
                     (1 + s5 + s5 * s5 / 3) * std::exp(-s5));
}

TEST(EvalKernel, PolynomialDegreeOneIsNotLinear) {
    // (1 + <x,x'>)^1 differs from <x,x'> by the constant 1.
    const std::vector<double> x{1.0, 2.0}, x2{3.0, 4.0};
    EXPECT_EQ(eval_kernel(KernelSpec::polynomial(1), x, x2), 12.0);
}

TEST(EvalKernel, NeuralNetworkByHand) {
    const std::vector<double> x{0.5}, x2{-1.0};
    const double xx2 = 1 + 0.5 * -1.0, xx = 1 + 0.25, yy = 1 + 1.0;
    const double expected = 2.0 / M_PI * std::asin(2 * xx2 / std::sqrt((1 + 2 * xx) * (1 + 2 * yy)));
    EXPECT_DOUBLE_EQ(eval_kernel(KernelSpec::nn(), x, x2), expected);
}

TEST(EvalKernel, Errors) {
    EXPECT_THROW(eval_kernel(KernelSpec::rbf(1.0), {1.0, 2.0}, {1.0}), UsageError);
    EXPECT_THROW(eval_kernel(KernelSpec::rbf(0.0), {1.0}, {1.0}), UsageError);
    EXPECT_THROW(eval_kernel(KernelSpec::rational(-1.0, 1.0), {1.0}, {1.0}), UsageError);
    EXPECT_THROW(eval_kernel(KernelSpec::polynomial(-1), {1.0}, {1.0}), UsageError);
    try {
        eval_kernel(KernelSpec::matern(MaternNu::half, -2.0), {1.0}, {1.0});
        FAIL();
    } catch (const UsageError& e) {
        EXPECT_NE(std::string(e.what()).find("length-scale l"), std::string::npos);
    }
}

TEST(EvalKernel, SymmetricInArguments) {
    std::mt19937_64 rng(11);
    for (const auto& spec : one_of_each()) {
        for (int k = 0; k < 100; ++k) {
            const Eigen::VectorXd x = oracle::random_vector(rng, 3), x2 = oracle::random_vector(rng, 3);
            EXPECT_EQ(eval_kernel(spec, x, x2), eval_kernel(spec, x2, x)) << describe(spec);
        }
    }
}

TEST(EvalKernel, NeuralNetworkRange) {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 500; ++k) {
        const Eigen::VectorXd x = 5.0 * oracle::random_vector(rng, 2), x2 = 5.0 * oracle::random_vector(rng, 2);
        const double v = eval_kernel(KernelSpec::nn(), x, x2);
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(EvalKernel, RationalApproachesRbf) {
    std::mt19937_64 rng(13);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const Eigen::VectorXd x = oracle::random_vector(rng, 2), x2 = oracle::random_vector(rng, 2);
        worst = std::max(worst, std::abs(eval_kernel(KernelSpec::rational(1e6, 1.0), x, x2) -
                                         eval_kernel(KernelSpec::rbf(1.0), x, x2)));
    }
    EXPECT_LE(worst, 1e-4);
}

TEST(EvalKernel, MaternMonotoneInDistance) {
    for (auto nu : {MaternNu::half, MaternNu::three_halves, MaternNu::five_halves}) {
        double prev = 2.0;
        for (int k = 0; k <= 100; ++k) {
            const double v = eval_kernel(KernelSpec::matern(nu, 1.0), {0.0}, {0.05 * k});
            EXPECT_LT(v, prev);
            prev = v;
        }
    }
}

TEST(GramMatrix, SmallCases) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd X = oracle::random_matrix(rng, 3, 2);
    const GramMatrix ones = gram_matrix(KernelSpec::intercept(), X);
    EXPECT_TRUE(ones.values.isApprox(Eigen::MatrixXd::Ones(3, 3)));

    Eigen::MatrixXd E(2, 2);
    E << 1, 0, 0, 1;
    EXPECT_EQ(gram_matrix(KernelSpec::linear(), E).values, Eigen::MatrixXd::Identity(2, 2));
}

TEST(GramMatrix, PsdAndExactlySymmetricForEveryFamily) {
    std::mt19937_64 rng(14);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd X = oracle::random_matrix(rng, 25, 3);
        for (const auto& spec : one_of_each()) {
            const GramMatrix K = gram_matrix(spec, X);
            EXPECT_EQ((K.values - K.values.transpose()).cwiseAbs().maxCoeff(), 0.0);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K.values);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * K.values.trace()) << describe(spec);
        }
    }
}

TEST(NormalizeTrace, Examples) {
    GramMatrix I;
    I.values = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_TRUE(normalize_trace(I).values.isApprox(0.5 * Eigen::MatrixXd::Identity(2, 2)));
    GramMatrix J;
    J.values = Eigen::MatrixXd::Ones(4, 4);
    const GramMatrix Jn = normalize_trace(J);
    EXPECT_TRUE(Jn.values.isApprox(Eigen::MatrixXd::Constant(4, 4, 0.25)));
    EXPECT_TRUE(Jn.trace_normalized);
    EXPECT_TRUE(normalize_trace(Jn).values.isApprox(Jn.values));
    GramMatrix Z;
    Z.values = Eigen::MatrixXd::Zero(3, 3);
    EXPECT_THROW(normalize_trace(Z), NumericalError);
}

TEST(InteractionGram, Examples) {
    std::mt19937_64 rng(15);
    const Eigen::MatrixXd X = oracle::random_matrix(rng, 10, 2);
    const GramMatrix K2 = gram_matrix(KernelSpec::rbf(1.0), X);
    GramMatrix ones;
    ones.values = Eigen::MatrixXd::Ones(10, 10);
    EXPECT_EQ(interaction_gram(ones, K2).values, K2.values);

    GramMatrix I;
    I.values = Eigen::MatrixXd::Identity(4, 4);
    EXPECT_EQ(interaction_gram(I, I).values, I.values);

    const GramMatrix K1 = gram_matrix(KernelSpec::polynomial(2), oracle::random_matrix(rng, 10, 2));
    const GramMatrix P = interaction_gram(K1, K2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P.values);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * P.values.trace());
    EXPECT_THROW(interaction_gram(K1, I), UsageError);
}

TEST(Standardize, Examples) {
    Eigen::MatrixXd c(3, 1);
    c << 1, 2, 3;
    const FeatureMatrix s = standardize(c);
    EXPECT_NEAR(s.values(0, 0), -1.0, 1e-15);
    EXPECT_NEAR(s.values(1, 0), 0.0, 1e-15);
    EXPECT_NEAR(s.values(2, 0), 1.0, 1e-15);
    EXPECT_TRUE(s.standardized);

    std::mt19937_64 rng(16);
    const FeatureMatrix once = standardize(oracle::random_matrix(rng, 20, 3));
    EXPECT_LE((standardize(once.values).values - once.values).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(once.values.colwise().mean().cwiseAbs().maxCoeff(), 1e-10 * 20);

    Eigen::MatrixXd k(4, 2);
    k << 1, 5, 2, 5, 3, 5, 4, 5;
    try {
        standardize(k, {"a", "b"});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
}

TEST(FamilyCatalog, SevenFamilies) {
    const auto cat = family_catalog();
    ASSERT_EQ(cat.size(), 7u);
    EXPECT_EQ(family_from_string("poly"), KernelFamily::polynomial);
    EXPECT_THROW(family_from_string("cosine"), UsageError);
}
