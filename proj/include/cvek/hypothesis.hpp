#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/ensemble.hpp"
#include "cvek/error.hpp"
#include "cvek/estimator.hpp"
#include "cvek/kernel.hpp"
#include "cvek/parallel.hpp"
#include "cvek/tuning.hpp"

namespace cvek {

enum class TestKind { asym, boot };

inline std::string_view to_string(TestKind k) { return k == TestKind::asym ? "asym" : "boot"; }

inline TestKind test_kind_from_string(std::string_view name) {
    if (name == "asym") return TestKind::asym;
    if (name == "boot") return TestKind::boot;
    throw UsageError("unknown test kind '" + std::string(name) + "' (expected asym or boot)");
}

/// Null-model quantities the score statistic needs. Build with make_null_model.
struct NullModel {
    Eigen::VectorXd mu_hat;
    GramMatrix K0;
    GramMatrix dK0;
    Eigen::MatrixXd V0;  ///< sigma2 I + tau K0
    double tau_hat = 0.0;
    double sigma2_hat = 0.0;
    Eigen::LLT<Eigen::MatrixXd> V0_chol;
};

/// sigma2 is floored at `sigma2_floor` so V0 stays positive definite.
inline NullModel make_null_model(Eigen::VectorXd mu_hat, GramMatrix K0, GramMatrix dK0, double sigma2,
                                 double tau, double sigma2_floor = 0.0) {
    const Eigen::Index n = mu_hat.size();
    if (K0.size() != n || dK0.size() != n) throw UsageError("null model: dimension mismatch");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw NumericalError("null model: invalid tau");
    NullModel m;
    m.sigma2_hat = std::max(sigma2, sigma2_floor);
    if (!(m.sigma2_hat > 0.0)) throw NumericalError("null model: noise variance must be positive");
    m.tau_hat = tau;
    m.mu_hat = std::move(mu_hat);
    m.V0 = m.sigma2_hat * Eigen::MatrixXd::Identity(n, n) + tau * K0.values;
    m.K0 = std::move(K0);
    m.dK0 = std::move(dK0);
    m.V0_chol.compute(m.V0);
    if (m.V0_chol.info() != Eigen::Success) throw NumericalError("null model: V0 is not positive definite");
    return m;
}

namespace detail {
inline double score_form(const NullModel& m, const Eigen::VectorXd& residual) {
    const Eigen::VectorXd z = m.V0_chol.solve(residual);
    return std::max(0.0, m.tau_hat * z.dot(m.dK0.values * z));
}
}  // namespace detail

/// tau (y - mu)' V0^-1 dK0 V0^-1 (y - mu).
inline double test_statistic(const Eigen::VectorXd& y, const NullModel& model) {
    if (y.size() != model.mu_hat.size()) throw UsageError("test_statistic: response length mismatch");
    return detail::score_form(model, y - model.mu_hat);
}

struct SatterthwaiteParams {
    double kappa = 0.0;
    double nu = 0.0;
    double mean = 0.0;              ///< tau tr(V0^-1 dK0)
    double efficient_info = 0.0;    ///< I_dd - I_dt' I_tt^-1 I_dt
};

/// Scaled chi-square kappa * chi2_nu matched to the statistic's first two moments.
///
/// REML information with intercept-only fixed effects: P0 = V^-1 - V^-1 1 (1'V^-1 1)^-1 1'V^-1,
/// I_ab = tr(P0 M_a P0 M_b) / 2 for M_delta = tau dK0, M_tau = K0, M_sigma2 = I.
inline SatterthwaiteParams satterthwaite_null(const NullModel& model) {
    const Eigen::Index n = model.mu_hat.size();
    const Eigen::MatrixXd V_inv = model.V0_chol.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::VectorXd v1 = V_inv.rowwise().sum();
    const Eigen::MatrixXd P0 = V_inv - v1 * v1.transpose() / v1.sum();

    const Eigen::MatrixXd PM_delta = P0 * (model.tau_hat * model.dK0.values);
    const Eigen::MatrixXd PM_tau = P0 * model.K0.values;
    const Eigen::MatrixXd& PM_sigma = P0;
    auto info = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return 0.5 * a.cwiseProduct(b.transpose()).sum();
    };
    const double I_dd = info(PM_delta, PM_delta);
    const Eigen::Vector2d I_dt(info(PM_delta, PM_tau), info(PM_delta, PM_sigma));
    Eigen::Matrix2d I_tt;
    I_tt << info(PM_tau, PM_tau), info(PM_tau, PM_sigma), info(PM_sigma, PM_tau),
        info(PM_sigma, PM_sigma);
    const Eigen::Vector2d adj = I_tt.completeOrthogonalDecomposition().solve(I_dt);

    SatterthwaiteParams out;
    out.efficient_info = I_dd - I_dt.dot(adj);
    out.mean = model.tau_hat * V_inv.cwiseProduct(model.dK0.values).sum();  // tr(V^-1 dK0), both symmetric
    // Information lost entirely to the nuisance parameters (up to rounding) counts as degenerate.
    if (!(out.mean > 0.0) || !(out.efficient_info > 1e-12 * I_dd) || !std::isfinite(out.efficient_info)) {
        throw NumericalError("satterthwaite_null: degenerate null model (mean " +
                             std::to_string(out.mean) + ", efficient information " +
                             std::to_string(out.efficient_info) + ")");
    }
    // Solves kappa nu = mean and 2 kappa^2 nu = efficient_info.
    out.kappa = out.efficient_info / (2.0 * out.mean);
    out.nu = 2.0 * out.mean * out.mean / out.efficient_info;
    return out;
}

/// P(chi2_nu > T / kappa) = Q(nu / 2, T / (2 kappa)).
inline double asymptotic_pvalue(double statistic, double kappa, double nu) {
    if (!std::isfinite(statistic) || !std::isfinite(kappa) || !std::isfinite(nu)) {
        throw NumericalError("asymptotic_pvalue: non-finite input");
    }
    if (!(kappa > 0.0) || !(nu > 0.0)) throw NumericalError("asymptotic_pvalue: kappa and nu must be positive");
    if (statistic <= 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * nu, 0.5 * statistic / kappa);
}

/// Share of replicate statistics strictly above the observed one; with `corrected`,
/// (1 + count) / (1 + B).
inline double exceedance_pvalue(double observed, const std::vector<double>& replicates, bool corrected) {
    if (replicates.empty()) throw UsageError("bootstrap: no replicates");
    std::size_t exceed = 0;
    for (double t : replicates) exceed += t > observed ? 1 : 0;
    const double B = static_cast<double>(replicates.size());
    return corrected ? (1.0 + static_cast<double>(exceed)) / (1.0 + B) : static_cast<double>(exceed) / B;
}

struct BootstrapOptions {
    int B = 100;
    std::uint64_t seed = 0;
    bool corrected = false;  ///< (1 + count) / (1 + B) instead of count / B
    unsigned jobs = 1;
};

struct BootstrapResult {
    double pvalue = 0.0;
    double observed = 0.0;
    std::vector<double> statistics;
};

/// Replicates y* = mu + eps, eps ~ N(0, sigma2 I), with mu, V0 and tau held at the null fit.
/// Replicate b draws from its own stream derive_seed(seed, b).
inline BootstrapResult bootstrap_null(double observed, const NullModel& model, const BootstrapOptions& opts) {
    if (opts.B < 1) throw UsageError("bootstrap: B must be at least 1");
    if (!(model.sigma2_hat > 0.0)) throw NumericalError("bootstrap: noise variance must be positive");
    const Eigen::Index n = model.mu_hat.size();
    const double sd = std::sqrt(model.sigma2_hat);
    BootstrapResult out;
    out.observed = observed;
    out.statistics.assign(static_cast<std::size_t>(opts.B), 0.0);
    parallel_for(static_cast<std::size_t>(opts.B), opts.jobs, [&](std::size_t b) {
        std::mt19937_64 rng(derive_seed(opts.seed, b));
        std::normal_distribution<double> normal(0.0, sd);
        Eigen::VectorXd eps(n);
        for (Eigen::Index i = 0; i < n; ++i) eps(i) = normal(rng);
        out.statistics[b] = detail::score_form(model, eps);
    });
    out.pvalue = exceedance_pvalue(observed, out.statistics, opts.corrected);
    return out;
}

inline BootstrapResult bootstrap_pvalue(const Eigen::VectorXd& y, const NullModel& model,
                                        const BootstrapOptions& opts) {
    return bootstrap_null(test_statistic(y, model), model, opts);
}

struct TestResult {
    double statistic = 0.0;
    double pvalue = 1.0;
    TestKind method = TestKind::boot;
    int B = 0;
    double kappa_hat = 0.0;
    double nu_hat = 0.0;
    std::uint64_t seed = 0;
};

/// How the derivative (interaction) kernel is assembled.
enum class InteractionMode {
    ensemble_weighted,  ///< sum_d u_d (K1_d o K2_d) with the null-model weights
    fixed               ///< K1 o K2 from one fixed spec
};

/// How bootstrap replicates are generated.
enum class BootstrapScheme {
    refit,  ///< y* = mu + eps with residual-variance noise, null model refitted per replicate
    fixed   ///< eps ~ N(0, sigma2_hat) scored against the observed null fit
};

inline std::string_view to_string(BootstrapScheme s) { return s == BootstrapScheme::refit ? "refit" : "fixed"; }

inline BootstrapScheme bootstrap_scheme_from_string(std::string_view name) {
    if (name == "refit") return BootstrapScheme::refit;
    if (name == "fixed") return BootstrapScheme::fixed;
    throw UsageError("unknown bootstrap scheme '" + std::string(name) + "' (expected refit or fixed)");
}

struct TestOptions {
    EnsembleOptions ensemble;
    TestKind kind = TestKind::boot;
    int B = 100;
    std::uint64_t seed = 0;
    bool corrected_pvalue = false;
    BootstrapScheme scheme = BootstrapScheme::refit;
    InteractionMode interaction = InteractionMode::ensemble_weighted;
    KernelSpec interaction_spec = KernelSpec::rbf(1.0);
    unsigned jobs = 1;
};

/// Per-library-member Gram matrices for the two feature blocks.
struct LibraryGrams {
    std::vector<GramMatrix> block1;    ///< trace-normalized
    std::vector<GramMatrix> block2;    ///< trace-normalized
    std::vector<GramMatrix> additive;  ///< normalize(block1 + block2)
};

inline LibraryGrams build_library_grams(const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2,
                                        const std::vector<KernelSpec>& library) {
    if (library.empty()) throw UsageError("kernel library must not be empty");
    if (X1.rows() != X2.rows()) throw UsageError("feature blocks have different row counts");
    LibraryGrams g;
    for (const auto& spec : library) {
        g.block1.push_back(normalize_trace(gram_matrix(spec, X1)));
        g.block2.push_back(normalize_trace(gram_matrix(spec, X2)));
        GramMatrix sum;
        sum.values = g.block1.back().values + g.block2.back().values;
        sum = normalize_trace(sum);
        sum.source_spec = spec;
        g.additive.push_back(std::move(sum));
    }
    return g;
}

/// normalize(sum_d u_d P_d) for precomputed products P_d = K1_d o K2_d.
inline GramMatrix interaction_kernel(const std::vector<GramMatrix>& products, const WeightVector& u) {
    if (products.empty() || static_cast<std::size_t>(u.size()) != products.size()) {
        throw UsageError("interaction_kernel: weight count does not match library size");
    }
    GramMatrix out;
    out.values = Eigen::MatrixXd::Zero(products.front().size(), products.front().size());
    for (std::size_t d = 0; d < products.size(); ++d) {
        const double w = u[static_cast<Eigen::Index>(d)];
        if (w != 0.0) out.values += w * products[d].values;
    }
    return normalize_trace(out);
}

inline GramMatrix interaction_kernel(const LibraryGrams& grams, const WeightVector& u) {
    std::vector<GramMatrix> products;
    for (std::size_t d = 0; d < grams.block1.size(); ++d) {
        products.push_back(interaction_gram(grams.block1[d], grams.block2[d]));
    }
    return interaction_kernel(products, u);
}

struct TestReport {
    EnsembleFit fit;
    NullModel model;
    TestResult result;
};

/// Null fit and score statistic for one response vector.
struct Evaluation {
    EnsembleFit fit;
    NullModel model;
    double statistic = 0.0;
};

/// Interaction test on fixed feature blocks. Everything that depends only on (X1, X2)
/// (library kernels, their spectra, the block products) is computed once, so repeated
/// refits on new responses only pay for tuning and the ensemble step.
class InteractionTester {
public:
    InteractionTester(const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2,
                      const std::vector<KernelSpec>& library, TestOptions opts)
        : opts_(std::move(opts)), grams_(build_library_grams(X1, X2, library)) {
        spectra_ = library_spectra(grams_.additive);
        specs_ = library_specs(grams_.additive);
        if (opts_.interaction == InteractionMode::fixed) {
            fixed_dK_ = normalize_trace(interaction_gram(normalize_trace(gram_matrix(opts_.interaction_spec, X1)),
                                                         normalize_trace(gram_matrix(opts_.interaction_spec, X2))));
        } else {
            for (std::size_t d = 0; d < grams_.block1.size(); ++d) {
                products_.push_back(interaction_gram(grams_.block1[d], grams_.block2[d]));
            }
        }
    }

    const TestOptions& options() const { return opts_; }
    const LibraryGrams& grams() const { return grams_; }
    Eigen::Index n() const { return grams_.additive.front().size(); }

    /// Fits the additive null model to y and scores y against it.
    Evaluation evaluate(const Eigen::VectorXd& y) const {
        if (y.size() != n()) throw UsageError("response length does not match feature rows");
        Evaluation ev;
        ev.fit = fit_ensemble(y, spectra_, specs_, opts_.ensemble);
        GramMatrix dK0 = opts_.interaction == InteractionMode::fixed ? fixed_dK_
                                                                     : interaction_kernel(products_, ev.fit.u_hat);
        const double var_y =
            centered(y).squaredNorm() / std::max<double>(1.0, static_cast<double>(y.size() - 1));
        ev.model = make_null_model(ev.fit.fitted, ev.fit.K_ens, std::move(dK0), ev.fit.sigma2_hat,
                                   ev.fit.tau_hat, 1e-12 * var_y);
        ev.statistic = test_statistic(y, ev.model);
        return ev;
    }

    /// Replicate statistics under the refit scheme: y*_b = mu_hat + eps_b with
    /// eps_b ~ N(0, s2), s2 = |y - mu_hat|^2 / (n - tr A0 - 1), each scored after a full null refit.
    std::vector<double> refit_replicates(const Eigen::VectorXd& y, const EnsembleFit& fit) const {
        if (opts_.B < 1) throw UsageError("bootstrap: B must be at least 1");
        const double dof = static_cast<double>(y.size()) - fit.df - 1.0;
        if (!(dof > 0.0)) throw NumericalError("bootstrap: no residual degrees of freedom left");
        const double s2 = (y - fit.fitted).squaredNorm() / dof;
        if (!(s2 > 0.0) || !std::isfinite(s2)) throw NumericalError("bootstrap: residual variance is zero");
        const double sd = std::sqrt(s2);
        std::vector<double> stats(static_cast<std::size_t>(opts_.B), 0.0);
        parallel_for(stats.size(), opts_.jobs, [&](std::size_t b) {
            std::mt19937_64 rng(derive_seed(opts_.seed, b));
            std::normal_distribution<double> normal(0.0, sd);
            Eigen::VectorXd y_star = fit.fitted;
            for (Eigen::Index i = 0; i < y_star.size(); ++i) y_star(i) += normal(rng);
            stats[b] = evaluate(y_star).statistic;
        });
        return stats;
    }

    TestReport run(const Eigen::VectorXd& y) const {
        Evaluation ev = evaluate(y);
        TestReport report;
        TestResult& r = report.result;
        r.statistic = ev.statistic;
        r.method = opts_.kind;
        r.seed = opts_.seed;
        if (opts_.kind == TestKind::asym) {
            const SatterthwaiteParams sp = satterthwaite_null(ev.model);
            r.kappa_hat = sp.kappa;
            r.nu_hat = sp.nu;
            r.pvalue = asymptotic_pvalue(r.statistic, sp.kappa, sp.nu);
        } else {
            r.B = opts_.B;
            if (opts_.scheme == BootstrapScheme::fixed) {
                BootstrapOptions bo{opts_.B, opts_.seed, opts_.corrected_pvalue, opts_.jobs};
                r.pvalue = bootstrap_null(r.statistic, ev.model, bo).pvalue;
            } else {
                r.pvalue = exceedance_pvalue(r.statistic, refit_replicates(y, ev.fit), opts_.corrected_pvalue);
            }
        }
        report.fit = std::move(ev.fit);
        report.model = std::move(ev.model);
        return report;
    }

private:
    TestOptions opts_;
    LibraryGrams grams_;
    std::vector<SpectralSmoother> spectra_;
    std::vector<std::optional<KernelSpec>> specs_;
    std::vector<GramMatrix> products_;
    GramMatrix fixed_dK_;
};

/// Fits the additive null model on (X1, X2), builds the interaction derivative kernel and
/// returns the score statistic with the requested p-value.
inline TestReport run_test_detailed(const Eigen::VectorXd& y, const Eigen::MatrixXd& X1,
                                    const Eigen::MatrixXd& X2, const std::vector<KernelSpec>& library,
                                    const TestOptions& opts) {
    if (y.size() != X1.rows()) throw UsageError("response length does not match feature rows");
    return InteractionTester(X1, X2, library, opts).run(y);
}

inline TestResult run_test(const Eigen::VectorXd& y, const Eigen::MatrixXd& X1, const Eigen::MatrixXd& X2,
                           const std::vector<KernelSpec>& library, const TestOptions& opts) {
    return run_test_detailed(y, X1, X2, library, opts).result;
}

}  // namespace cvek
