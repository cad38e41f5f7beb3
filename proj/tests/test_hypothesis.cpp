#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cvek/hypothesis.hpp"
#include "cvek/simulation.hpp"
#include "oracles.hpp"

using namespace cvek;

namespace {

GramMatrix gram(const Eigen::MatrixXd& M) {
    GramMatrix g;
    g.values = M;
    return g;
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int n, int rank) {
    const Eigen::MatrixXd L = oracle::random_matrix(rng, n, rank);
    return L * L.transpose() / static_cast<double>(n * rank);
}

NullModel random_model(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> unif(0.05, 2.0);
    return make_null_model(oracle::random_vector(rng, n), gram(random_psd(rng, n, n)), gram(random_psd(rng, n, 3)),
                           unif(rng), unif(rng));
}

// Dense moments of the score statistic: mean tau tr(V^-1 dK) and the REML efficient
// information with every trace formed as an explicit matrix product.
struct DenseMoments {
    double mean;
    double info;
};

DenseMoments dense_moments(const NullModel& m) {
    const Eigen::Index n = m.mu_hat.size();
    const Eigen::MatrixXd Vi = m.V0.inverse();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd P = Vi - Vi * one * one.transpose() * Vi / one.dot(Vi * one);
    const Eigen::MatrixXd Md = m.tau_hat * m.dK0.values, Mt = m.K0.values, Ms = Eigen::MatrixXd::Identity(n, n);
    auto I = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return 0.5 * (P * a * P * b).trace(); };
    Eigen::Matrix2d Itt;
    Itt << I(Mt, Mt), I(Mt, Ms), I(Ms, Mt), I(Ms, Ms);
    const Eigen::Vector2d Idt(I(Md, Mt), I(Md, Ms));
    return {m.tau_hat * (Vi * m.dK0.values).trace(), I(Md, Md) - Idt.dot(Itt.inverse() * Idt)};
}

}  // namespace

TEST(TestStatistic, MatchesExplicitInverse) {
    std::mt19937_64 rng(61);
    for (int k = 0; k < 20; ++k) {
        const NullModel m = random_model(rng, 8);
        const Eigen::VectorXd y = oracle::random_vector(rng, 8);
        const double expected = oracle::score_explicit(m.V0, m.dK0.values, m.tau_hat, y - m.mu_hat);
        EXPECT_LE(std::abs(test_statistic(y, m) - expected), 1e-10 * expected);
    }
}

TEST(TestStatistic, TrivialCases) {
    std::mt19937_64 rng(62);
    const NullModel m = random_model(rng, 8);
    EXPECT_EQ(test_statistic(m.mu_hat, m), 0.0);
    const NullModel flat = make_null_model(m.mu_hat, m.K0, gram(Eigen::MatrixXd::Zero(8, 8)), 1.0, 1.0);
    EXPECT_EQ(test_statistic(oracle::random_vector(rng, 8), flat), 0.0);
    EXPECT_THROW(test_statistic(Eigen::VectorXd::Zero(5), m), UsageError);
    EXPECT_THROW(make_null_model(m.mu_hat, m.K0, m.dK0, 0.0, 1.0), NumericalError);
    EXPECT_GT(make_null_model(m.mu_hat, m.K0, m.dK0, 0.0, 1.0, 1e-6).sigma2_hat, 0.0);
}

TEST(Satterthwaite, MomentIdentitiesOnRandomModels) {
    std::mt19937_64 rng(63);
    for (int k = 0; k < 50; ++k) {
        const NullModel m = random_model(rng, 12);
        const SatterthwaiteParams sp = satterthwaite_null(m);
        const DenseMoments d = dense_moments(m);
        EXPECT_LE(std::abs(sp.kappa * sp.nu - d.mean), 1e-12 * d.mean);
        EXPECT_LE(std::abs(2.0 * sp.kappa * sp.kappa * sp.nu - sp.efficient_info), 1e-12 * sp.efficient_info);
        EXPECT_LE(std::abs(sp.efficient_info - d.info), 1e-8 * d.info);
    }
}

TEST(Satterthwaite, DiagonalHandCase) {
    // K0 = I, V0 = (s2 + tau) I: the mean is tau tr(dK0) / (s2 + tau).
    const double s2 = 0.5, tau = 1.5;
    const Eigen::Vector4d d(1.0, 2.0, 0.5, 0.5);
    const NullModel m = make_null_model(Eigen::VectorXd::Zero(4), gram(Eigen::MatrixXd::Identity(4, 4)),
                                        gram(d.asDiagonal()), s2, tau);
    EXPECT_NEAR(satterthwaite_null(m).mean, tau * 4.0 / (s2 + tau), 1e-14);

    // dK0 = K0 = I: delta and tau are confounded, efficient information vanishes.
    const NullModel same = make_null_model(Eigen::VectorXd::Zero(4), gram(Eigen::MatrixXd::Identity(4, 4)),
                                           gram(Eigen::MatrixXd::Identity(4, 4)), s2, tau);
    EXPECT_THROW(satterthwaite_null(same), NumericalError);
}

TEST(AsymptoticPvalue, MatchesQuadrature) {
    std::mt19937_64 rng(64);
    std::uniform_real_distribution<double> kap(0.1, 5.0), nu(0.5, 20.0), q(0.05, 4.0);
    for (int k = 0; k < 20; ++k) {
        const double kappa = kap(rng), v = nu(rng);
        const double t = kappa * v * q(rng);
        EXPECT_NEAR(asymptotic_pvalue(t, kappa, v), oracle::chi2_tail_quadrature(t, kappa, v), 1e-8)
            << kappa << " " << v << " " << t;
    }
}

TEST(AsymptoticPvalue, Examples) {
    EXPECT_EQ(asymptotic_pvalue(0.0, 1.0, 3.0), 1.0);
    EXPECT_NEAR(asymptotic_pvalue(2.0 * std::log(2.0), 1.0, 2.0), 0.5, 1e-15);
    double prev = 1.0;
    for (int k = 1; k <= 50; ++k) {
        const double p = asymptotic_pvalue(0.3 * k, 1.3, 4.5);
        EXPECT_LT(p, prev);
        prev = p;
    }
    EXPECT_THROW(asymptotic_pvalue(NAN, 1.0, 1.0), NumericalError);
    EXPECT_THROW(asymptotic_pvalue(1.0, 0.0, 1.0), NumericalError);
}

TEST(Scaling, DerivativeKernelRescaleLeavesPvaluesUnchanged) {
    std::mt19937_64 rng(65);
    const NullModel m = random_model(rng, 15);
    const double c = 7.25;
    const NullModel scaled = make_null_model(m.mu_hat, m.K0, gram(c * m.dK0.values), m.sigma2_hat, m.tau_hat);
    const Eigen::VectorXd y = m.mu_hat + oracle::random_vector(rng, 15);
    const double t = test_statistic(y, m), ts = test_statistic(y, scaled);
    EXPECT_NEAR(ts, c * t, 1e-12 * ts);

    const SatterthwaiteParams a = satterthwaite_null(m), b = satterthwaite_null(scaled);
    EXPECT_NEAR(b.kappa * b.nu, c * a.kappa * a.nu, 1e-12 * b.kappa * b.nu);
    EXPECT_NEAR(asymptotic_pvalue(ts, b.kappa, b.nu), asymptotic_pvalue(t, a.kappa, a.nu), 1e-12);

    const BootstrapOptions opts{200, 9, false, 1};
    EXPECT_EQ(bootstrap_pvalue(y, m, opts).pvalue, bootstrap_pvalue(y, scaled, opts).pvalue);
}

TEST(Bootstrap, ExtremesAndCorrection) {
    std::mt19937_64 rng(66);
    const NullModel m = random_model(rng, 10);
    const BootstrapOptions opts{50, 3, false, 1};
    EXPECT_EQ(bootstrap_null(1e300, m, opts).pvalue, 0.0);
    EXPECT_EQ(bootstrap_null(-1.0, m, opts).pvalue, 1.0);
    BootstrapOptions corr = opts;
    corr.corrected = true;
    EXPECT_DOUBLE_EQ(bootstrap_null(1e300, m, corr).pvalue, 1.0 / 51.0);
    EXPECT_THROW(bootstrap_null(1.0, m, BootstrapOptions{0, 3, false, 1}), UsageError);
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
    std::mt19937_64 rng(67);
    const NullModel m = random_model(rng, 10);
    const Eigen::VectorXd y = m.mu_hat + oracle::random_vector(rng, 10);
    const BootstrapResult a = bootstrap_pvalue(y, m, {100, 11, false, 1});
    const BootstrapResult b = bootstrap_pvalue(y, m, {100, 11, false, 4});
    EXPECT_EQ(a.statistics, b.statistics);
    EXPECT_EQ(a.pvalue, b.pvalue);
    EXPECT_NE(a.statistics, bootstrap_pvalue(y, m, {100, 12, false, 1}).statistics);
    for (double s : a.statistics) EXPECT_GE(s, 0.0);
}

TEST(ExceedancePvalue, StrictInequality) {
    EXPECT_DOUBLE_EQ(exceedance_pvalue(2.0, {1.0, 2.0, 3.0, 4.0}, false), 0.5);
    EXPECT_DOUBLE_EQ(exceedance_pvalue(2.0, {1.0, 2.0, 3.0, 4.0}, true), 0.6);
    EXPECT_THROW(exceedance_pvalue(1.0, {}, false), UsageError);
}

class RunTestFixture : public ::testing::Test {
protected:
    void SetUp() override {
        const SimulatedData d = generate_data(40, 2, 2, KernelSpec::rbf(1.0), 0.5, 0.1, 77);
        X1 = standardize(d.X1).values;
        X2 = standardize(d.X2).values;
        y = d.y;
    }
    Eigen::MatrixXd X1, X2;
    Eigen::VectorXd y;
    std::vector<KernelSpec> library{KernelSpec::rbf(0.6), KernelSpec::rbf(1.0), KernelSpec::rbf(2.0)};
};

TEST_F(RunTestFixture, EveryOptionYieldsValidResult) {
    for (auto kind : {TestKind::asym, TestKind::boot}) {
        for (auto scheme : {BootstrapScheme::refit, BootstrapScheme::fixed}) {
            for (auto mode : {InteractionMode::ensemble_weighted, InteractionMode::fixed}) {
                TestOptions opts;
                opts.kind = kind;
                opts.scheme = scheme;
                opts.interaction = mode;
                opts.B = 20;
                opts.seed = 5;
                const TestResult r = run_test(y, X1, X2, library, opts);
                EXPECT_GE(r.statistic, 0.0);
                EXPECT_GE(r.pvalue, 0.0);
                EXPECT_LE(r.pvalue, 1.0);
                EXPECT_EQ(r.method, kind);
                if (kind == TestKind::asym) {
                    EXPECT_GT(r.kappa_hat, 0.0);
                    EXPECT_GT(r.nu_hat, 0.0);
                } else {
                    EXPECT_EQ(r.B, 20);
                }
            }
        }
    }
}

TEST_F(RunTestFixture, DeterministicAndMatchesTester) {
    TestOptions opts;
    opts.B = 30;
    opts.seed = 8;
    const TestResult a = run_test(y, X1, X2, library, opts);
    const TestResult b = run_test(y, X1, X2, library, opts);
    EXPECT_EQ(a.statistic, b.statistic);
    EXPECT_EQ(a.pvalue, b.pvalue);

    opts.jobs = 3;
    const TestReport c = InteractionTester(X1, X2, library, opts).run(y);
    EXPECT_EQ(c.result.statistic, a.statistic);
    EXPECT_EQ(c.result.pvalue, a.pvalue);

    // The observed statistic is the score form on the reported null model.
    EXPECT_NEAR(test_statistic(y, c.model), c.result.statistic, 1e-12 * c.result.statistic);
    EXPECT_THROW(run_test(y.head(10), X1, X2, library, opts), UsageError);
}

TEST_F(RunTestFixture, InteractionKernelIsWeightedProduct) {
    const LibraryGrams g = build_library_grams(X1, X2, library);
    const WeightVector u(Eigen::Vector3d(0.2, 0.0, 0.8));
    Eigen::MatrixXd expected = 0.2 * g.block1[0].values.cwiseProduct(g.block2[0].values) +
                               0.8 * g.block1[2].values.cwiseProduct(g.block2[2].values);
    expected /= expected.trace();
    EXPECT_LE((interaction_kernel(g, u).values - expected).cwiseAbs().maxCoeff(), 1e-14);
    for (const auto& K : g.additive) EXPECT_NEAR(K.values.trace(), 1.0, 1e-12);
}

TEST(BootstrapSchemeNames, RoundTrip) {
    EXPECT_EQ(bootstrap_scheme_from_string("fixed"), BootstrapScheme::fixed);
    EXPECT_EQ(to_string(BootstrapScheme::refit), "refit");
    EXPECT_THROW(bootstrap_scheme_from_string("wild"), UsageError);
    EXPECT_EQ(test_kind_from_string("asym"), TestKind::asym);
}
