#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/error.hpp"

namespace cvek {

enum class Strategy { avg, exp, stack };

inline constexpr std::array<Strategy, 3> kAllStrategies{Strategy::avg, Strategy::exp,
                                                        Strategy::stack};

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::avg: return "avg";
        case Strategy::exp: return "exp";
        case Strategy::stack: return "stack";
    }
    return "?";
}

/// "erm" is accepted as another name for stacking.
inline Strategy strategy_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "avg") return Strategy::avg;
    if (lower == "exp") return Strategy::exp;
    if (lower == "stack" || lower == "erm") return Strategy::stack;
    throw UsageError("unknown ensemble strategy '" + std::string(name) +
                     "' (expected avg, exp, stack or erm)");
}

/// Point on the probability simplex.
class WeightVector {
public:
    explicit WeightVector(Eigen::VectorXd values) : values_(std::move(values)) {
        if (values_.size() == 0) throw UsageError("weight vector must be nonempty");
        if ((values_.array() < 0.0).any() || std::abs(values_.sum() - 1.0) > 1e-10) {
            throw NumericalError("weights are not on the simplex");
        }
    }

    const Eigen::VectorXd& values() const { return values_; }
    Eigen::Index size() const { return values_.size(); }
    double operator[](Eigen::Index i) const { return values_(i); }

private:
    Eigen::VectorXd values_;
};

/// Euclidean projection onto {u >= 0, sum u = 1} (sort-and-threshold).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index D = v.size();
    std::vector<double> sorted(v.data(), v.data() + D);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (Eigen::Index k = 0; k < D; ++k) {
        cumsum += sorted[static_cast<std::size_t>(k)];
        const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (sorted[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd u = (v.array() - theta).cwiseMax(0.0).matrix();
    return u / u.sum();
}

inline WeightVector weights_avg(Eigen::Index D) {
    if (D < 1) throw UsageError("weights_avg: library must contain at least one kernel");
    return WeightVector(Eigen::VectorXd::Constant(D, 1.0 / static_cast<double>(D)));
}

namespace detail {
inline void require_finite(const Eigen::MatrixXd& residuals, const char* who) {
    if (residuals.cols() == 0) throw UsageError(std::string(who) + ": no residual vectors");
    if (!residuals.allFinite()) {
        throw NumericalError(std::string(who) + ": residuals contain non-finite values");
    }
}
}  // namespace detail

/// Softmax of -||e_d||^2 / beta over the columns of `residuals` (n x D).
inline WeightVector weights_exp(const Eigen::MatrixXd& residuals, double beta = 1.0) {
    if (!(beta > 0.0)) throw UsageError("weights_exp: beta must be positive");
    detail::require_finite(residuals, "weights_exp");
    const Eigen::ArrayXd err = residuals.colwise().squaredNorm().transpose().array();
    Eigen::ArrayXd w = (-(err - err.minCoeff()) / beta).exp();
    return WeightVector((w / w.sum()).matrix());
}

/// ||E u||^2 for residual matrix E (n x D).
inline double stacking_objective(const Eigen::MatrixXd& residuals, const Eigen::VectorXd& u) {
    return (residuals * u).squaredNorm();
}

struct StackingOptions {
    int max_iterations = 10000;
    double tolerance = 1e-12;
};

/// Minimizes ||E u||^2 over the simplex by projected gradient with step 1/L,
/// L = largest eigenvalue of E'E, starting from uniform weights.
inline WeightVector weights_stack(const Eigen::MatrixXd& residuals, StackingOptions opts = {}) {
    detail::require_finite(residuals, "weights_stack");
    const Eigen::Index D = residuals.cols();
    Eigen::VectorXd u = Eigen::VectorXd::Constant(D, 1.0 / static_cast<double>(D));
    if (D == 1) return WeightVector(u);

    const Eigen::MatrixXd Q = residuals.transpose() * residuals;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    const double L = es.eigenvalues().maxCoeff();
    if (!(L > 0.0)) return WeightVector(u);

    // Gradient of u'Qu / 2 is Qu, L-Lipschitz. Stop once the iterate stops moving.
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Eigen::VectorXd next = project_to_simplex(u - (Q * u) / L);
        const double step = (next - u).cwiseAbs().maxCoeff();
        u = next;
        if (step <= opts.tolerance) break;
    }
    return WeightVector(u);
}

inline WeightVector compute_weights(Strategy strategy, const Eigen::MatrixXd& residuals,
                                    double beta = 1.0) {
    switch (strategy) {
        case Strategy::avg: return weights_avg(residuals.cols());
        case Strategy::exp: return weights_exp(residuals, beta);
        case Strategy::stack: return weights_stack(residuals);
    }
    throw UsageError("unknown strategy");
}

}  // namespace cvek
