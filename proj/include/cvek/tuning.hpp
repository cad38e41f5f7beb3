#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/error.hpp"
#include "cvek/kernel.hpp"

namespace cvek {

enum class Criterion { loocv, aic, aicc, bic, gcv, gcvc, gmpml };

inline constexpr std::array<Criterion, 7> kAllCriteria{Criterion::loocv, Criterion::aic,
                                                       Criterion::aicc,  Criterion::bic,
                                                       Criterion::gcv,   Criterion::gcvc,
                                                       Criterion::gmpml};

inline std::string_view to_string(Criterion c) {
    switch (c) {
        case Criterion::loocv: return "loocv";
        case Criterion::aic: return "aic";
        case Criterion::aicc: return "aicc";
        case Criterion::bic: return "bic";
        case Criterion::gcv: return "gcv";
        case Criterion::gcvc: return "gcvc";
        case Criterion::gmpml: return "gmpml";
    }
    return "?";
}

inline Criterion criterion_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    for (auto c : kAllCriteria) {
        if (to_string(c) == lower) return c;
    }
    throw UsageError("unknown tuning criterion '" + std::string(name) +
                     "' (expected loocv, aic, aicc, bic, gcv, gcvc or gmpml)");
}

/// Strictly ascending, strictly positive, nonempty list of ridge parameters.
class LambdaGrid {
public:
    explicit LambdaGrid(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw UsageError("lambda grid must not be empty");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
                throw UsageError("lambda grid values must be positive and finite");
            }
            if (i > 0 && !(values_[i] > values_[i - 1])) {
                throw UsageError("lambda grid must be strictly ascending");
            }
        }
    }

    /// exp(from), exp(from + step), ..., exp(to).
    static LambdaGrid log_spaced(double from, double to, double step) {
        if (!(step > 0.0) || to < from) throw UsageError("invalid log-spaced lambda grid");
        std::vector<double> v;
        const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9)) + 1;
        for (long k = 0; k < count; ++k) v.push_back(std::exp(from + step * static_cast<double>(k)));
        return LambdaGrid(std::move(v));
    }

    /// exp(-10), exp(-9.5), ..., exp(5): 31 values.
    static LambdaGrid default_grid() { return log_spaced(-10.0, 5.0, 0.5); }

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    bool contains(double v) const {
        return std::find(values_.begin(), values_.end(), v) != values_.end();
    }

private:
    std::vector<double> values_;
};

/// Eigendecomposition of a kernel matrix, reused for every ridge parameter.
///
/// With K = U diag(d) U', the smoother K (K + lambda I)^-1 is U diag(d / (d + lambda)) U'.
/// Eigenvalues below zero (round-off on a PSD matrix) are clamped to zero so the
/// smoother spectrum stays in [0, 1).
class SpectralSmoother {
public:
    explicit SpectralSmoother(const Eigen::MatrixXd& K) {
        if (K.rows() != K.cols() || K.rows() == 0) {
            throw UsageError("kernel matrix must be square and nonempty");
        }
        if (!K.allFinite()) throw NumericalError("kernel matrix has non-finite entries");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
        if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
        eigenvalues_ = es.eigenvalues().cwiseMax(0.0);
        eigenvectors_ = es.eigenvectors();
        ones_proj_ = eigenvectors_.transpose() * Eigen::VectorXd::Ones(K.rows());
    }

    explicit SpectralSmoother(const GramMatrix& K) : SpectralSmoother(K.values) {}

    /// From a known eigendecomposition (orthonormal columns in `eigenvectors`).
    SpectralSmoother(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors)
        : eigenvalues_(eigenvalues.cwiseMax(0.0)), eigenvectors_(std::move(eigenvectors)) {
        if (eigenvectors_.rows() != eigenvectors_.cols() || eigenvectors_.cols() != eigenvalues_.size()) {
            throw UsageError("spectral smoother: eigenpair dimensions do not match");
        }
        ones_proj_ = eigenvectors_.transpose() * Eigen::VectorXd::Ones(eigenvectors_.rows());
    }

    Eigen::Index n() const { return eigenvalues_.size(); }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }

    Eigen::VectorXd shrinkage(double lambda) const {
        return eigenvalues_.array() / (eigenvalues_.array() + lambda);
    }

    Eigen::MatrixXd smoother(double lambda) const {
        return eigenvectors_ * shrinkage(lambda).asDiagonal() * eigenvectors_.transpose();
    }

    double trace(double lambda) const { return shrinkage(lambda).sum(); }

    Eigen::VectorXd smoother_diagonal(double lambda) const {
        return eigenvectors_.array().square().matrix() * shrinkage(lambda);
    }

    Eigen::VectorXd project(const Eigen::VectorXd& y) const { return eigenvectors_.transpose() * y; }

    /// Leave-one-out residuals of the ridge fit with a jointly estimated, unpenalized intercept.
    ///
    /// With P = K + lambda I, w = P^-1 1 and c = 1'w, the full-data residual is
    /// lambda (P^-1 - w w'/c) y and the leverage complement is lambda (P^-1 - w w'/c)_ii;
    /// their ratio is the exact LOO residual. Entries with vanishing denominator are +inf.
    Eigen::VectorXd loo_residuals(const Eigen::VectorXd& y, double lambda) const {
        const Eigen::ArrayXd inv = 1.0 / (eigenvalues_.array() + lambda);
        const Eigen::VectorXd yp = project(y);
        const Eigen::VectorXd p_inv_y = eigenvectors_ * (inv * yp.array()).matrix();
        const Eigen::VectorXd w = eigenvectors_ * (inv * ones_proj_.array()).matrix();
        const double c = w.sum();
        const double wy = w.dot(y);
        const Eigen::VectorXd p_inv_diag = eigenvectors_.array().square().matrix() * inv.matrix();
        Eigen::VectorXd out(n());
        for (Eigen::Index i = 0; i < n(); ++i) {
            const double num = p_inv_y(i) - w(i) * wy / c;
            const double den = p_inv_diag(i) - w(i) * w(i) / c;
            out(i) = den > 1e-14 * p_inv_diag(i) ? num / den
                                                 : std::numeric_limits<double>::infinity();
        }
        return out;
    }

private:
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
    Eigen::VectorXd ones_proj_;
};

/// K (K + lambda I)^-1, via the eigendecomposition of K.
inline Eigen::MatrixXd smoother_matrix(const GramMatrix& K, double lambda) {
    if (!(lambda > 0.0)) throw UsageError("smoother_matrix: lambda must be positive");
    return SpectralSmoother(K).smoother(lambda);
}

namespace detail {
inline constexpr double kInf = std::numeric_limits<double>::infinity();
}

/// Objective value of one tuning criterion at one lambda. Degenerate cases return +inf.
///
/// `y` must be centered. `loocv` is the log sum of squared exact leave-one-out residuals
/// (intercept re-estimated in every fold), see SpectralSmoother::loo_residuals.
inline double criterion_value(Criterion criterion, const Eigen::VectorXd& y,
                              const SpectralSmoother& S, double lambda) {
    if (y.size() != S.n()) throw UsageError("criterion_value: response length does not match kernel");
    if (!(lambda > 0.0)) throw UsageError("criterion_value: lambda must be positive");
    const double n = static_cast<double>(S.n());
    const Eigen::ArrayXd shrink = S.shrinkage(lambda).array();
    const Eigen::ArrayXd resid_gain = 1.0 - shrink;  // spectrum of I - A
    const Eigen::ArrayXd yp2 = S.project(y).array().square();
    const double tr = shrink.sum();
    const double rss = (yp2 * resid_gain.square()).sum();  // y'(I - A)^2 y

    auto logged = [](double v) { return v > 0.0 ? std::log(v) : -detail::kInf; };
    switch (criterion) {
        case Criterion::loocv: {
            const Eigen::VectorXd e = S.loo_residuals(y, lambda);
            if (!e.allFinite()) return detail::kInf;
            return logged(e.squaredNorm());
        }
        case Criterion::aic: return logged(rss) + 2.0 * (tr + 2.0) / n;
        case Criterion::aicc: {
            const double denom = n - tr - 3.0;
            if (!(denom > 0.0)) return detail::kInf;
            return logged(rss) + 2.0 * (tr + 2.0) / denom;
        }
        case Criterion::bic: return logged(rss) + std::log(n) * (tr + 2.0) / n;
        case Criterion::gcv: {
            const double arg = 1.0 - tr / n - 1.0 / n;
            if (!(arg > 0.0)) return detail::kInf;
            return logged(rss) - 2.0 * std::log(arg);
        }
        case Criterion::gcvc: {
            const double arg = std::max(0.0, 1.0 - tr / n - 2.0 / n);
            if (!(arg > 0.0)) return detail::kInf;
            return logged(rss) - 2.0 * std::log(arg);
        }
        case Criterion::gmpml: {
            const double quad = (yp2 * resid_gain).sum();  // y'(I - A) y
            // log|I - A| = sum log(lambda / (d + lambda)), no cancellation
            const double logdet = (lambda / (S.eigenvalues().array() + lambda)).log().sum();
            return logged(quad) - logdet / (n - 1.0);
        }
    }
    return detail::kInf;
}

inline double criterion_value(Criterion criterion, const Eigen::VectorXd& y, const GramMatrix& K,
                              double lambda) {
    return criterion_value(criterion, y, SpectralSmoother(K), lambda);
}

/// The leave-one-out display taken literally:
/// log y' B^-1 (I - A)^2 B^-1 y with B = I - diag(A) - I/n.
/// Kept for comparison; `Criterion::loocv` uses the exact form.
inline double loocv_literal_value(const Eigen::VectorXd& y, const SpectralSmoother& S,
                                  double lambda) {
    const double n = static_cast<double>(S.n());
    const Eigen::ArrayXd bracket = 1.0 - S.smoother_diagonal(lambda).array() - 1.0 / n;
    if ((bracket.abs() < 1e-14).any()) return detail::kInf;
    const Eigen::VectorXd z = (y.array() / bracket).matrix();
    const Eigen::VectorXd r = z - S.smoother(lambda) * z;
    return std::log(r.squaredNorm());
}

struct LambdaChoice {
    double lambda = 0.0;
    double objective = 0.0;
    std::size_t index = 0;
};

/// Grid minimizer over finite objective values; ties go to the smaller lambda.
inline LambdaChoice select_lambda(Criterion criterion, const Eigen::VectorXd& y,
                                  const SpectralSmoother& S, const LambdaGrid& grid) {
    LambdaChoice best;
    bool found = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = criterion_value(criterion, y, S, grid[i]);
        if (!std::isfinite(v)) continue;
        if (!found || v < best.objective) {
            best = {grid[i], v, i};
            found = true;
        }
    }
    if (!found) {
        throw NumericalError("no admissible lambda: criterion '" + std::string(to_string(criterion)) +
                             "' is non-finite on the whole grid");
    }
    return best;
}

inline LambdaChoice select_lambda(Criterion criterion, const Eigen::VectorXd& y,
                                  const GramMatrix& K, const LambdaGrid& grid) {
    return select_lambda(criterion, y, SpectralSmoother(K), grid);
}

/// Index-based selection over precomputed objective values, same tie and finiteness rules.
inline std::size_t argmin_finite(const std::vector<double>& objective) {
    std::size_t best = objective.size();
    for (std::size_t i = 0; i < objective.size(); ++i) {
        if (!std::isfinite(objective[i])) continue;
        if (best == objective.size() || objective[i] < objective[best]) best = i;
    }
    if (best == objective.size()) throw NumericalError("no admissible lambda");
    return best;
}

inline Eigen::VectorXd centered(const Eigen::VectorXd& y) {
    return (y.array() - y.mean()).matrix();
}

}  // namespace cvek
