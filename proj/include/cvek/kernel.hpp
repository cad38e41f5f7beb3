#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/error.hpp"

namespace cvek {

enum class KernelFamily { intercept, linear, polynomial, rbf, matern, rational, nn };

/// Matérn smoothness. Only the half-integer cases with closed forms are supported.
enum class MaternNu { half, three_halves, five_halves };

inline constexpr std::array<KernelFamily, 7> kAllFamilies{
    KernelFamily::intercept, KernelFamily::linear, KernelFamily::polynomial, KernelFamily::rbf,
    KernelFamily::matern,    KernelFamily::rational, KernelFamily::nn};

inline std::string_view to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::intercept: return "intercept";
        case KernelFamily::linear: return "linear";
        case KernelFamily::polynomial: return "polynomial";
        case KernelFamily::rbf: return "rbf";
        case KernelFamily::matern: return "matern";
        case KernelFamily::rational: return "rational";
        case KernelFamily::nn: return "nn";
    }
    return "?";
}

inline KernelFamily family_from_string(std::string_view name) {
    for (auto f : kAllFamilies) {
        if (to_string(f) == name) return f;
    }
    if (name == "poly") return KernelFamily::polynomial;
    throw UsageError("unknown kernel family '" + std::string(name) +
                     "' (expected intercept, linear, polynomial, rbf, matern, rational or nn)");
}

inline double nu_value(MaternNu nu) {
    switch (nu) {
        case MaternNu::half: return 0.5;
        case MaternNu::three_halves: return 1.5;
        case MaternNu::five_halves: return 2.5;
    }
    return 0.0;
}

inline MaternNu nu_from_value(double nu) {
    if (nu == 0.5) return MaternNu::half;
    if (nu == 1.5) return MaternNu::three_halves;
    if (nu == 2.5) return MaternNu::five_halves;
    throw UsageError("matern nu must be one of 0.5, 1.5, 2.5 (got " + std::to_string(nu) + ")");
}

/// Declarative description of one kernel. Fields a family does not use are ignored.
struct KernelSpec {
    KernelFamily family = KernelFamily::rbf;
    double l = 1.0;
    int p = 1;
    MaternNu nu = MaternNu::three_halves;
    double alpha = 1.0;

    static KernelSpec intercept() { return {KernelFamily::intercept}; }
    static KernelSpec linear() { return {KernelFamily::linear}; }
    static KernelSpec polynomial(int degree) {
        KernelSpec s{KernelFamily::polynomial};
        s.p = degree;
        return s;
    }
    static KernelSpec rbf(double length) {
        KernelSpec s{KernelFamily::rbf};
        s.l = length;
        return s;
    }
    static KernelSpec matern(MaternNu nu, double length) {
        KernelSpec s{KernelFamily::matern};
        s.nu = nu;
        s.l = length;
        return s;
    }
    static KernelSpec rational(double alpha, double length) {
        KernelSpec s{KernelFamily::rational};
        s.alpha = alpha;
        s.l = length;
        return s;
    }
    static KernelSpec nn() { return {KernelFamily::nn}; }

    friend bool operator==(const KernelSpec& a, const KernelSpec& b) {
        if (a.family != b.family) return false;
        switch (a.family) {
            case KernelFamily::polynomial: return a.p == b.p;
            case KernelFamily::rbf: return a.l == b.l;
            case KernelFamily::matern: return a.l == b.l && a.nu == b.nu;
            case KernelFamily::rational: return a.l == b.l && a.alpha == b.alpha;
            default: return true;
        }
    }
};

inline bool uses_length_scale(KernelFamily f) {
    return f == KernelFamily::rbf || f == KernelFamily::matern || f == KernelFamily::rational;
}

/// Throws UsageError naming the offending field.
inline void validate(const KernelSpec& spec) {
    const auto fam = std::string(to_string(spec.family));
    if (uses_length_scale(spec.family) && !(spec.l > 0.0 && std::isfinite(spec.l))) {
        throw UsageError(fam + " kernel: length-scale l must be positive (got " +
                         std::to_string(spec.l) + ")");
    }
    if (spec.family == KernelFamily::rational && !(spec.alpha > 0.0 && std::isfinite(spec.alpha))) {
        throw UsageError("rational kernel: alpha must be positive (got " +
                         std::to_string(spec.alpha) + ")");
    }
    if (spec.family == KernelFamily::polynomial && spec.p < 0) {
        throw UsageError("polynomial kernel: degree p must be >= 0 (got " + std::to_string(spec.p) +
                         ")");
    }
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

/// Compact label, e.g. "rbf(l=0.5)", "matern(nu=1.5,l=1)".
inline std::string describe(const KernelSpec& s) {
    std::string out(to_string(s.family));
    switch (s.family) {
        case KernelFamily::polynomial: out += "(p=" + std::to_string(s.p) + ")"; break;
        case KernelFamily::rbf: out += "(l=" + format_number(s.l) + ")"; break;
        case KernelFamily::matern:
            out += "(nu=" + format_number(nu_value(s.nu)) + ",l=" + format_number(s.l) + ")";
            break;
        case KernelFamily::rational:
            out += "(alpha=" + format_number(s.alpha) + ",l=" + format_number(s.l) + ")";
            break;
        default: break;
    }
    return out;
}

namespace detail {

template <class A, class B>
double eval_unchecked(const KernelSpec& spec, const Eigen::MatrixBase<A>& x,
                      const Eigen::MatrixBase<B>& x2) {
    switch (spec.family) {
        case KernelFamily::intercept: return 1.0;
        case KernelFamily::linear: return x.dot(x2);
        case KernelFamily::polynomial: return std::pow(1.0 + x.dot(x2), spec.p);
        case KernelFamily::rbf: {
            const double r2 = (x - x2).squaredNorm();
            return std::exp(-r2 / (2.0 * spec.l * spec.l));
        }
        case KernelFamily::matern: {
            const double r = (x - x2).norm();
            switch (spec.nu) {
                case MaternNu::half: return std::exp(-r / spec.l);
                case MaternNu::three_halves: {
                    const double s = std::sqrt(3.0) * r / spec.l;
                    return (1.0 + s) * std::exp(-s);
                }
                case MaternNu::five_halves: {
                    const double s = std::sqrt(5.0) * r / spec.l;
                    return (1.0 + s + s * s / 3.0) * std::exp(-s);
                }
            }
            return 0.0;
        }
        case KernelFamily::rational: {
            const double r2 = (x - x2).squaredNorm();
            return std::exp(-spec.alpha * std::log1p(r2 / (2.0 * spec.alpha * spec.l * spec.l)));
        }
        case KernelFamily::nn: {
            // Augmented inputs (1, x): inner products pick up a leading 1.
            const double xx2 = 1.0 + x.dot(x2);
            const double xx = 1.0 + x.squaredNorm();
            const double x2x2 = 1.0 + x2.squaredNorm();
            const double arg = 2.0 * xx2 / std::sqrt((1.0 + 2.0 * xx) * (1.0 + 2.0 * x2x2));
            return 2.0 / std::numbers::pi * std::asin(std::clamp(arg, -1.0, 1.0));
        }
    }
    return 0.0;
}

}  // namespace detail

/// k(x, x2) for the given family.
template <class A, class B>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<A>& x,
                   const Eigen::MatrixBase<B>& x2) {
    if (x.size() != x2.size()) {
        throw UsageError("eval_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(x2.size()) + ")");
    }
    validate(spec);
    return detail::eval_unchecked(spec, x, x2);
}

inline double eval_kernel(const KernelSpec& spec, const std::vector<double>& x,
                          const std::vector<double>& x2) {
    using Map = Eigen::Map<const Eigen::VectorXd>;
    return eval_kernel(spec, Map(x.data(), static_cast<Eigen::Index>(x.size())),
                       Map(x2.data(), static_cast<Eigen::Index>(x2.size())));
}

struct FeatureMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;
    bool standardized = false;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

struct GramMatrix {
    Eigen::MatrixXd values;
    std::optional<KernelSpec> source_spec;  ///< empty for derived (sum/product/ensemble) matrices
    bool trace_normalized = false;

    Eigen::Index size() const { return values.rows(); }
    double trace() const { return values.trace(); }
};

/// Centers each column and scales it to unit sample standard deviation (divisor n - 1).
inline FeatureMatrix standardize(const Eigen::MatrixXd& raw, std::vector<std::string> names = {}) {
    const Eigen::Index n = raw.rows();
    if (n < 2) throw DataError("standardize: need at least 2 rows (got " + std::to_string(n) + ")");
    if (!names.empty() && static_cast<Eigen::Index>(names.size()) != raw.cols()) {
        throw UsageError("standardize: column name count does not match column count");
    }
    FeatureMatrix out;
    out.values = raw.rowwise() - raw.colwise().mean();
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const double sd = std::sqrt(out.values.col(j).squaredNorm() / static_cast<double>(n - 1));
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            const std::string label =
                names.empty() ? "column " + std::to_string(j) : "column '" + names[j] + "'";
            throw DataError("standardize: " + label + " is constant (zero variance)");
        }
        out.values.col(j) /= sd;
    }
    out.column_names = std::move(names);
    out.standardized = true;
    return out;
}

/// Upper triangle computed, lower mirrored, so the result is exactly symmetric.
inline GramMatrix gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X) {
    if (X.rows() == 0) throw UsageError("gram_matrix: empty feature matrix");
    validate(spec);
    const Eigen::Index n = X.rows();
    GramMatrix g;
    g.values.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            const double v = detail::eval_unchecked(spec, X.row(i), X.row(j));
            g.values(i, j) = v;
            g.values(j, i) = v;
        }
    }
    g.source_spec = spec;
    return g;
}

inline GramMatrix gram_matrix(const KernelSpec& spec, const FeatureMatrix& X) {
    return gram_matrix(spec, X.values);
}

inline GramMatrix normalize_trace(const GramMatrix& K) {
    const double tr = K.trace();
    if (!(tr > 0.0) || !std::isfinite(tr)) {
        throw NumericalError("normalize_trace: degenerate kernel matrix (trace " +
                             std::to_string(tr) + ")");
    }
    GramMatrix out = K;
    out.values /= tr;
    out.trace_normalized = true;
    return out;
}

inline double min_eigenvalue(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Symmetry to 1e-12 max|K| and smallest eigenvalue >= -1e-8 trace.
inline bool satisfies_gram_invariants(const Eigen::MatrixXd& K) {
    if (K.rows() != K.cols()) return false;
    const double scale = K.cwiseAbs().maxCoeff();
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    if (K.rows() == 0) return true;
    return min_eigenvalue(K) >= -1e-8 * std::abs(K.trace());
}

/// Hadamard product of two same-size Gram matrices (product-kernel on the joint domain).
inline GramMatrix interaction_gram(const GramMatrix& K1, const GramMatrix& K2) {
    if (K1.size() != K2.size()) {
        throw UsageError("interaction_gram: dimension mismatch (" + std::to_string(K1.size()) +
                         " vs " + std::to_string(K2.size()) + ")");
    }
    GramMatrix out;
    out.values = K1.values.cwiseProduct(K2.values);
    if (!satisfies_gram_invariants(out.values)) {
        throw NumericalError("interaction_gram: product matrix is not positive semidefinite");
    }
    return out;
}

/// Families and the hyperparameters each one reads.
struct FamilyInfo {
    KernelFamily family;
    std::vector<std::string> hyperparameters;
    std::string formula;
};

inline std::vector<FamilyInfo> family_catalog() {
    return {
        {KernelFamily::intercept, {}, "k(x,x') = 1"},
        {KernelFamily::linear, {}, "k(x,x') = <x,x'>"},
        {KernelFamily::polynomial, {"p"}, "k(x,x') = (1 + <x,x'>)^p"},
        {KernelFamily::rbf, {"l"}, "k(x,x') = exp(-|x-x'|^2 / (2 l^2))"},
        {KernelFamily::matern, {"nu", "l"}, "closed forms for nu in {1/2, 3/2, 5/2}"},
        {KernelFamily::rational, {"alpha", "l"}, "k(x,x') = (1 + |x-x'|^2 / (2 alpha l^2))^-alpha"},
        {KernelFamily::nn, {}, "k(x,x') = 2/pi asin(2 x~'x~' / sqrt((1+2 x~'x~)(1+2 x~''x~'))), x~ = (1,x)"},
    };
}

}  // namespace cvek
