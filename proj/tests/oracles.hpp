#pragma once

// Independent reference computations. None of these call into the library's
// numerical code paths; they use dense textbook arithmetic instead.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = nd(rng);
    return M;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
    return random_matrix(rng, n, 1).col(0);
}

// Ridge with unpenalized intercept as the (n+1) x (n+1) block system
//   [K + lam I   1] [alpha]   [y]
//   [1'          0] [mu   ] = [0]
// solved by full-pivot LU.
struct Ridge {
    double mu;
    Eigen::VectorXd alpha;
};

inline Ridge ridge_block_lu(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lam) {
    const Eigen::Index n = y.size();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = K + lam * Eigen::MatrixXd::Identity(n, n);
    M.block(0, n, n, 1).setOnes();
    M.block(n, 0, 1, n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs.head(n) = y;
    const Eigen::VectorXd sol = M.fullPivLu().solve(rhs);
    return {sol(n), sol.head(n)};
}

// Leave-one-out residuals by n explicit refits.
inline Eigen::VectorXd loo_residuals_refit(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lam) {
    const Eigen::Index n = y.size();
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) keep.push_back(j);
        const auto m = static_cast<Eigen::Index>(keep.size());
        Eigen::MatrixXd Ks(m, m);
        Eigen::VectorXd ys(m), ki(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            ys(a) = y(keep[a]);
            ki(a) = K(i, keep[a]);
            for (Eigen::Index b = 0; b < m; ++b) Ks(a, b) = K(keep[a], keep[b]);
        }
        const Ridge r = ridge_block_lu(Ks, ys, lam);
        e(i) = y(i) - (r.mu + ki.dot(r.alpha));
    }
    return e;
}

// tau r' V^-1 dK V^-1 r with an explicit inverse.
inline double score_explicit(const Eigen::MatrixXd& V, const Eigen::MatrixXd& dK, double tau,
                             const Eigen::VectorXd& r) {
    const Eigen::MatrixXd Vi = V.inverse();
    return tau * r.dot(Vi * dK * Vi * r);
}

// P(kappa chi2_nu > t) by composite Simpson quadrature of the upper tail of the
// chi-square density, normalizer from log-gamma. With x = e^s the integrand
// exp(log_norm + (nu/2) s - e^s / 2) is smooth, so no endpoint singularity and no
// 1 - mass cancellation. Requires t > 0.
inline double chi2_tail_quadrature(double t, double kappa, double nu, int panels = 200000) {
    const double a = 0.5 * nu;
    const double log_norm = -a * std::log(2.0) - std::lgamma(a);
    const double lo = std::log(t / kappa);
    const double hi = std::log(std::max(t / kappa, 2.0 * a) + 400.0);
    const int m = panels % 2 == 0 ? panels : panels + 1;
    const double h = (hi - lo) / m;
    double sum = 0.0;
    for (int k = 0; k <= m; ++k) {
        const double s = lo + k * h;
        const double w = (k == 0 || k == m) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        sum += w * std::exp(log_norm + a * s - 0.5 * std::exp(s));
    }
    return sum * h / 3.0;
}

// Best objective |E u|^2 over a simplex grid with the given step (D = 3).
inline double simplex_grid_min(const Eigen::MatrixXd& E, double step) {
    const int m = static_cast<int>(std::lround(1.0 / step));
    double best = INFINITY;
    for (int i = 0; i <= m; ++i) {
        for (int j = 0; i + j <= m; ++j) {
            const Eigen::Vector3d u(i * step, j * step, (m - i - j) * step);
            best = std::min(best, (E * u).squaredNorm());
        }
    }
    return best;
}

// One-sample Kolmogorov-Smirnov statistic against U(0, 1).
inline double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const double n = static_cast<double>(p.size());
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - p[i], p[i] - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace oracle
