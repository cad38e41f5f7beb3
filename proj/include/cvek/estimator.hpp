#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cvek/ensemble.hpp"
#include "cvek/error.hpp"
#include "cvek/kernel.hpp"
#include "cvek/tuning.hpp"

namespace cvek {

/// One library member fitted on its own.
struct BaseFit {
    std::optional<KernelSpec> spec;
    double lambda_hat = 0.0;
    double objective = 0.0;
    Eigen::MatrixXd smoother;       ///< A_d = K_d (K_d + lambda_hat I)^-1
    Eigen::VectorXd cv_residuals;   ///< leave-one-out residuals at lambda_hat
};

/// Tunes lambda per kernel and records the smoother and LOO residuals at the chosen value.
/// `spectra[d]` is the eigendecomposition of the trace-normalized d-th kernel.
inline std::vector<BaseFit> fit_base_kernels(const Eigen::VectorXd& y,
                                             const std::vector<SpectralSmoother>& spectra,
                                             const std::vector<std::optional<KernelSpec>>& specs,
                                             Criterion criterion, const LambdaGrid& grid) {
    if (spectra.empty()) throw UsageError("fit_base_kernels: empty kernel library");
    if (specs.size() != spectra.size()) throw UsageError("fit_base_kernels: spec count mismatch");
    std::vector<BaseFit> fits;
    fits.reserve(spectra.size());
    for (std::size_t d = 0; d < spectra.size(); ++d) {
        const SpectralSmoother& S = spectra[d];
        if (S.n() != y.size()) {
            throw UsageError("fit_base_kernels: kernel size " + std::to_string(S.n()) +
                             " does not match response length " + std::to_string(y.size()));
        }
        const LambdaChoice choice = select_lambda(criterion, y, S, grid);
        BaseFit fit;
        fit.spec = specs[d];
        fit.lambda_hat = choice.lambda;
        fit.objective = choice.objective;
        fit.smoother = S.smoother(choice.lambda);
        fit.cv_residuals = S.loo_residuals(y, choice.lambda);
        if (!fit.cv_residuals.allFinite()) {
            throw NumericalError("fit_base_kernels: non-finite leave-one-out residuals");
        }
        fits.push_back(std::move(fit));
    }
    return fits;
}

/// Eigendecompositions of the library kernels; matrices not yet trace-normalized are
/// normalized first.
inline std::vector<SpectralSmoother> library_spectra(const std::vector<GramMatrix>& grams) {
    std::vector<SpectralSmoother> out;
    out.reserve(grams.size());
    for (const auto& g : grams) out.emplace_back(g.trace_normalized ? g : normalize_trace(g));
    return out;
}

inline std::vector<std::optional<KernelSpec>> library_specs(const std::vector<GramMatrix>& grams) {
    std::vector<std::optional<KernelSpec>> out;
    for (const auto& g : grams) out.push_back(g.source_spec);
    return out;
}

inline std::vector<BaseFit> fit_base_kernels(const Eigen::VectorXd& y,
                                             const std::vector<GramMatrix>& grams,
                                             Criterion criterion, const LambdaGrid& grid) {
    if (grams.empty()) throw UsageError("fit_base_kernels: empty kernel library");
    for (const auto& g : grams) {
        if (g.size() != y.size()) {
            throw UsageError("fit_base_kernels: kernel size " + std::to_string(g.size()) +
                             " does not match response length " + std::to_string(y.size()));
        }
    }
    return fit_base_kernels(y, library_spectra(grams), library_specs(grams), criterion, grid);
}

/// Residual matrix with one column per base fit.
inline Eigen::MatrixXd residual_matrix(const std::vector<BaseFit>& fits) {
    if (fits.empty()) return {};
    Eigen::MatrixXd E(fits.front().cv_residuals.size(), static_cast<Eigen::Index>(fits.size()));
    for (std::size_t d = 0; d < fits.size(); ++d) E.col(static_cast<Eigen::Index>(d)) = fits[d].cv_residuals;
    return E;
}

/// Weighted sum of the base smoothers.
inline Eigen::MatrixXd ensemble_matrix(const WeightVector& u, const std::vector<BaseFit>& fits) {
    if (static_cast<std::size_t>(u.size()) != fits.size() || fits.empty()) {
        throw UsageError("ensemble_matrix: " + std::to_string(u.size()) + " weights for " +
                         std::to_string(fits.size()) + " base fits");
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(fits.front().smoother.rows(), fits.front().smoother.cols());
    for (std::size_t d = 0; d < fits.size(); ++d) A += u[static_cast<Eigen::Index>(d)] * fits[d].smoother;
    return A;
}

struct EnsembleKernel {
    GramMatrix K;
    double lambda_K = 0.0;
    Eigen::VectorXd eigenvalues;   ///< spectrum of K
    Eigen::MatrixXd eigenvectors;
};

inline constexpr double kSmootherClip = 1.0 - 1e-8;

/// Kernel matrix whose smoother at lambda_K reproduces A_hat:
/// A_hat = U diag(s) U', K = lambda_K U diag(s / (1 - s)) U' with
/// lambda_K = min(1, 1 / sum s/(1-s), min base lambda).
/// Spectrum is clamped to [0, 1 - 1e-8] first.
inline EnsembleKernel ensemble_kernel(const Eigen::MatrixXd& A_hat,
                                      const std::vector<double>& base_lambdas) {
    if (A_hat.rows() != A_hat.cols() || A_hat.rows() == 0) {
        throw UsageError("ensemble_kernel: ensemble matrix must be square and nonempty");
    }
    if (base_lambdas.empty()) throw UsageError("ensemble_kernel: no base lambdas");
    const Eigen::MatrixXd sym = 0.5 * (A_hat + A_hat.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("ensemble_kernel: eigendecomposition failed");
    const Eigen::VectorXd& raw = es.eigenvalues();
    if (raw.maxCoeff() > 1.0 + 1e-8) {
        throw NumericalError("ensemble_kernel: ensemble matrix has eigenvalue " +
                             std::to_string(raw.maxCoeff()) + " > 1, not a valid smoother");
    }
    const Eigen::ArrayXd s = raw.array().max(0.0).min(kSmootherClip);
    const Eigen::ArrayXd ratio = s / (1.0 - s);
    const double total = ratio.sum();
    double lambda_K = std::min(1.0, *std::min_element(base_lambdas.begin(), base_lambdas.end()));
    if (total > 0.0) lambda_K = std::min(lambda_K, 1.0 / total);

    EnsembleKernel out;
    out.K.values = lambda_K * es.eigenvectors() * ratio.matrix().asDiagonal() * es.eigenvectors().transpose();
    out.K.values = 0.5 * (out.K.values + out.K.values.transpose());
    out.lambda_K = lambda_K;
    out.eigenvalues = lambda_K * ratio.matrix();
    out.eigenvectors = es.eigenvectors();
    return out;
}

struct RidgeFit {
    double intercept = 0.0;
    Eigen::VectorXd alpha;
    Eigen::VectorXd fitted;  ///< intercept + K alpha
};

/// Kernel ridge with an unpenalized intercept:
/// (K + lambda I) alpha = y - intercept 1, 1'alpha = 0.
inline RidgeFit estimate_ridge(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lambda) {
    if (!(lambda > 0.0)) throw UsageError("estimate_ridge: lambda must be positive");
    if (K.rows() != y.size() || K.cols() != y.size()) {
        throw UsageError("estimate_ridge: kernel and response sizes differ");
    }
    const Eigen::Index n = y.size();
    const Eigen::MatrixXd P = K + lambda * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("estimate_ridge: K + lambda I is singular at lambda = " +
                             std::to_string(lambda));
    }
    const Eigen::VectorXd p_inv_y = llt.solve(y);
    const Eigen::VectorXd p_inv_1 = llt.solve(Eigen::VectorXd::Ones(n));
    const double c = p_inv_1.sum();
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw NumericalError("estimate_ridge: singular intercept equation at lambda = " +
                             std::to_string(lambda));
    }
    RidgeFit fit;
    fit.intercept = p_inv_y.sum() / c;
    fit.alpha = p_inv_y - fit.intercept * p_inv_1;
    fit.fitted = (fit.intercept + (K * fit.alpha).array()).matrix();
    return fit;
}

/// Same system solved through the eigendecomposition of K.
inline RidgeFit estimate_ridge(const SpectralSmoother& S, const Eigen::VectorXd& y, double lambda) {
    if (!(lambda > 0.0)) throw UsageError("estimate_ridge: lambda must be positive");
    if (S.n() != y.size()) throw UsageError("estimate_ridge: kernel and response sizes differ");
    const Eigen::MatrixXd& U = S.eigenvectors();
    const Eigen::ArrayXd inv = 1.0 / (S.eigenvalues().array() + lambda);
    const Eigen::VectorXd yp = U.transpose() * y;
    const Eigen::VectorXd op = U.transpose() * Eigen::VectorXd::Ones(y.size());
    const double c = (inv * op.array().square()).sum();
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw NumericalError("estimate_ridge: singular intercept equation at lambda = " +
                             std::to_string(lambda));
    }
    RidgeFit fit;
    fit.intercept = (inv * op.array() * yp.array()).sum() / c;
    const Eigen::ArrayXd rp = yp.array() - fit.intercept * op.array();
    fit.alpha = U * (inv * rp).matrix();
    fit.fitted = (fit.intercept + (U * (S.eigenvalues().array() * inv * rp).matrix()).array()).matrix();
    return fit;
}

struct NoiseEstimate {
    double sigma2 = 0.0;
    double tau = 0.0;
};

/// sigma2 = yc'(I - A0) yc / (n - tr A0) with A0 = K (K + lambda I)^-1 and yc the centered
/// response; tau = sigma2 / lambda.
inline NoiseEstimate estimate_noise(const Eigen::VectorXd& y, const SpectralSmoother& S, double lambda) {
    if (!(lambda > 0.0)) throw UsageError("estimate_noise: lambda must be positive");
    const Eigen::ArrayXd shrink = S.shrinkage(lambda).array();
    const double n = static_cast<double>(y.size());
    const double dof = n - shrink.sum();
    if (!(dof > 0.0)) throw NumericalError("estimate_noise: saturated model (n <= tr(A0))");
    const Eigen::ArrayXd yp2 = S.project(centered(y)).array().square();
    const double quad = std::max(0.0, (yp2 * (1.0 - shrink)).sum());
    NoiseEstimate out;
    out.sigma2 = quad / dof;
    out.tau = out.sigma2 / lambda;
    return out;
}

inline NoiseEstimate estimate_noise(const Eigen::VectorXd& y, const Eigen::MatrixXd& K, double lambda) {
    return estimate_noise(y, SpectralSmoother(K), lambda);
}

/// Fitted null model: base fits, weights, ensemble kernel, ridge coefficients and noise.
struct EnsembleFit {
    std::vector<BaseFit> base_fits;
    WeightVector u_hat{Eigen::VectorXd::Ones(1)};
    Eigen::MatrixXd A_hat;
    GramMatrix K_ens;
    double lambda_K = 0.0;
    double lambda_ens = 0.0;
    double df = 0.0;  ///< tr A0, the ensemble smoother at lambda_ens
    double intercept = 0.0;
    Eigen::VectorXd alpha;
    Eigen::VectorXd fitted;
    double sigma2_hat = 0.0;
    double tau_hat = 0.0;
};

inline NoiseEstimate estimate_noise(const Eigen::VectorXd& y, const EnsembleFit& fit) {
    return estimate_noise(y, fit.K_ens.values, fit.lambda_ens);
}

struct EnsembleOptions {
    Criterion criterion = Criterion::loocv;
    Strategy strategy = Strategy::stack;
    LambdaGrid grid = LambdaGrid::default_grid();
    double beta = 1.0;
};

/// Base fits, weights, ensemble kernel, then lambda re-tuned on the ensemble kernel
/// with the same criterion before the final ridge fit.
inline EnsembleFit fit_ensemble(const Eigen::VectorXd& y, const std::vector<SpectralSmoother>& spectra,
                                const std::vector<std::optional<KernelSpec>>& specs,
                                const EnsembleOptions& opts) {
    const Eigen::VectorXd yc = centered(y);
    EnsembleFit fit;
    fit.base_fits = fit_base_kernels(yc, spectra, specs, opts.criterion, opts.grid);
    fit.u_hat = compute_weights(opts.strategy, residual_matrix(fit.base_fits), opts.beta);
    fit.A_hat = ensemble_matrix(fit.u_hat, fit.base_fits);

    std::vector<double> lambdas;
    for (const auto& b : fit.base_fits) lambdas.push_back(b.lambda_hat);
    EnsembleKernel ek = ensemble_kernel(fit.A_hat, lambdas);
    fit.K_ens = std::move(ek.K);
    fit.lambda_K = ek.lambda_K;
    const SpectralSmoother S_ens(std::move(ek.eigenvalues), std::move(ek.eigenvectors));

    fit.lambda_ens = select_lambda(opts.criterion, yc, S_ens, opts.grid).lambda;
    fit.df = S_ens.trace(fit.lambda_ens);
    const RidgeFit ridge = estimate_ridge(S_ens, y, fit.lambda_ens);
    fit.intercept = ridge.intercept;
    fit.alpha = ridge.alpha;
    fit.fitted = ridge.fitted;
    const NoiseEstimate noise = estimate_noise(y, S_ens, fit.lambda_ens);
    fit.sigma2_hat = noise.sigma2;
    fit.tau_hat = noise.tau;
    return fit;
}

inline EnsembleFit fit_ensemble(const Eigen::VectorXd& y, const std::vector<GramMatrix>& grams,
                                const EnsembleOptions& opts) {
    for (const auto& g : grams) {
        if (g.size() != y.size()) {
            throw UsageError("fit_ensemble: kernel size " + std::to_string(g.size()) +
                             " does not match response length " + std::to_string(y.size()));
        }
    }
    return fit_ensemble(y, library_spectra(grams), library_specs(grams), opts);
}

}  // namespace cvek
