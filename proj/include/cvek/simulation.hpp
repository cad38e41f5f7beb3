#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cvek/ensemble.hpp"
#include "cvek/error.hpp"
#include "cvek/hypothesis.hpp"
#include "cvek/kernel.hpp"
#include "cvek/parallel.hpp"
#include "cvek/tuning.hpp"

namespace cvek {

inline constexpr double kSignificanceLevel = 0.05;

struct SimulatedData {
    Eigen::VectorXd y;
    Eigen::MatrixXd X1;
    Eigen::MatrixXd X2;
    Eigen::VectorXd h1;  ///< unit Euclidean norm
    Eigen::VectorXd h2;  ///< unit Euclidean norm
};

/// y = h1(x1) + h2(x2) + delta h1(x1) h2(x2) + eps.
///
/// Features are i.i.d. N(0, 1). Each h_m = K_m w_m with K_m the Gram matrix of `k_true` on
/// block m and w_m ~ N(0, I_n), scaled to unit norm. The product term is not rescaled.
/// Draw order is fixed (X1, X2, w1, w2, eps) and independent of delta.
inline SimulatedData generate_data(int n, int p1, int p2, const KernelSpec& k_true, double delta,
                                   double noise_sd, std::uint64_t seed) {
    if (n < 2 || p1 < 1 || p2 < 1) {
        throw UsageError("generate_data: need n >= 2 and p1, p2 >= 1");
    }
    if (!(noise_sd >= 0.0)) throw UsageError("generate_data: noise_sd must be nonnegative");
    validate(k_true);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd M(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = normal(rng);
        return M;
    };
    SimulatedData d;
    d.X1 = draw(n, p1);
    d.X2 = draw(n, p2);
    const Eigen::VectorXd w1 = draw(n, 1);
    const Eigen::VectorXd w2 = draw(n, 1);
    const Eigen::VectorXd eps = draw(n, 1);

    auto sample_function = [&](const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
        Eigen::VectorXd h = gram_matrix(k_true, X).values * w;
        const double norm = h.norm();
        if (!(norm > 0.0)) throw NumericalError("generate_data: sampled function is identically zero");
        return Eigen::VectorXd(h / norm);
    };
    d.h1 = sample_function(d.X1, w1);
    d.h2 = sample_function(d.X2, w2);
    d.y = d.h1 + d.h2 + delta * d.h1.cwiseProduct(d.h2) + noise_sd * eps;
    return d;
}

/// One simulation cell.
struct Scenario {
    std::size_t id = 0;
    int n = 100;
    int p1 = 2;
    int p2 = 2;
    std::string data_kernel_name = "rbf";
    KernelSpec k_true = KernelSpec::rbf(1.0);
    double delta = 0.0;
    double noise_sd = 0.01;
    std::string library_name = "rbf";
    std::vector<KernelSpec> library;
    Criterion criterion = Criterion::loocv;
    Strategy strategy = Strategy::stack;
    TestKind test_kind = TestKind::boot;
    int B = 100;
    int reps = 200;
    std::uint64_t master_seed = 1;
    LambdaGrid grid = LambdaGrid::default_grid();
    bool corrected_pvalue = false;
    BootstrapScheme boot_scheme = BootstrapScheme::refit;
};

inline void validate(const Scenario& s) {
    if (s.n < 4) throw UsageError("scenario: n must be at least 4");
    if (s.reps < 1) throw UsageError("scenario: reps must be at least 1");
    if (!(s.delta >= 0.0)) throw UsageError("scenario: delta must be nonnegative");
    if (s.library.empty()) throw UsageError("scenario: empty kernel library");
    if (s.test_kind == TestKind::boot && s.B < 1) throw UsageError("scenario: B must be at least 1");
}

struct ScenarioResult {
    double rejection_rate = 0.0;
    std::vector<double> pvalues;  ///< NaN marks a skipped (failed) replicate
    std::vector<std::string> failures;
    std::chrono::duration<double> wall_time{0.0};
};

/// Outcome of replicate `rep`: data drawn from derive_seed(master, rep), bootstrap
/// stream from a second derivation, so each replicate is reproducible on its own.
inline double run_replicate(const Scenario& s, int rep) {
    const std::uint64_t rep_seed = derive_seed(s.master_seed, static_cast<std::uint64_t>(rep));
    const SimulatedData d = generate_data(s.n, s.p1, s.p2, s.k_true, s.delta, s.noise_sd, rep_seed);
    TestOptions opts;
    opts.ensemble.criterion = s.criterion;
    opts.ensemble.strategy = s.strategy;
    opts.ensemble.grid = s.grid;
    opts.kind = s.test_kind;
    opts.B = s.B;
    opts.seed = derive_seed(rep_seed, 1);
    opts.corrected_pvalue = s.corrected_pvalue;
    opts.scheme = s.boot_scheme;
    return run_test(d.y, standardize(d.X1).values, standardize(d.X2).values, s.library, opts).pvalue;
}

/// Fraction of finite p-values at or below the 0.05 level.
inline double rejection_rate(const std::vector<double>& pvalues) {
    std::size_t used = 0;
    std::size_t rejected = 0;
    for (double p : pvalues) {
        if (std::isnan(p)) continue;
        ++used;
        rejected += p <= kSignificanceLevel ? 1 : 0;
    }
    return used == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : static_cast<double>(rejected) / static_cast<double>(used);
}

struct RunOptions {
    unsigned jobs = 1;
    bool skip_errors = false;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Runs every replicate of every scenario, parallel over the flattened (scenario, rep) list.
inline std::vector<ScenarioResult> run_scenarios(const std::vector<Scenario>& scenarios,
                                                 const RunOptions& opts = {}) {
    std::vector<std::pair<std::size_t, int>> tasks;
    std::vector<ScenarioResult> results(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        validate(scenarios[i]);
        results[i].pvalues.assign(static_cast<std::size_t>(scenarios[i].reps),
                                  std::numeric_limits<double>::quiet_NaN());
        for (int r = 0; r < scenarios[i].reps; ++r) tasks.emplace_back(i, r);
    }
    std::vector<std::string> errors(tasks.size());
    std::vector<double> seconds(tasks.size(), 0.0);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(tasks.size(), opts.jobs, [&](std::size_t t) {
        const auto [si, rep] = tasks[t];
        const auto start = std::chrono::steady_clock::now();
        try {
            results[si].pvalues[static_cast<std::size_t>(rep)] = run_replicate(scenarios[si], rep);
        } catch (const std::exception& e) {
            if (!opts.skip_errors) {
                throw NumericalError("scenario " + std::to_string(scenarios[si].id) + ", replicate " +
                                     std::to_string(rep) + ": " + e.what());
            }
            errors[t] = "replicate " + std::to_string(rep) + ": " + e.what();
        }
        seconds[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::size_t now = ++done;
        if (opts.progress) {
            std::lock_guard lock(progress_mutex);
            opts.progress(now, tasks.size());
        }
    });
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        auto& res = results[tasks[t].first];
        res.wall_time += std::chrono::duration<double>(seconds[t]);
        if (!errors[t].empty()) res.failures.push_back(errors[t]);
    }
    for (auto& res : results) res.rejection_rate = rejection_rate(res.pvalues);
    return results;
}

inline ScenarioResult run_scenario(const Scenario& s, const RunOptions& opts = {}) {
    return run_scenarios({s}, opts).front();
}

// Built-in grids: data-generating kernels and model libraries.

struct NamedKernel {
    std::string name;
    KernelSpec spec;
};

struct NamedLibrary {
    std::string name;
    std::vector<KernelSpec> kernels;
};

inline std::vector<NamedKernel> builtin_data_kernels() {
    return {{"poly1", KernelSpec::polynomial(1)},
            {"poly2", KernelSpec::polynomial(2)},
            {"poly3", KernelSpec::polynomial(3)},
            {"rbf", KernelSpec::rbf(1.0)},
            {"matern32", KernelSpec::matern(MaternNu::three_halves, 1.0)},
            {"matern52", KernelSpec::matern(MaternNu::five_halves, 1.0)}};
}

inline std::vector<NamedLibrary> builtin_libraries() {
    const std::vector<KernelSpec> poly{KernelSpec::polynomial(1), KernelSpec::polynomial(2),
                                       KernelSpec::polynomial(3)};
    const std::vector<KernelSpec> rbf{KernelSpec::rbf(0.6), KernelSpec::rbf(1.0), KernelSpec::rbf(2.0)};
    const std::vector<KernelSpec> matern{KernelSpec::matern(MaternNu::half, 1.0),
                                         KernelSpec::matern(MaternNu::three_halves, 1.0),
                                         KernelSpec::matern(MaternNu::five_halves, 1.0)};
    auto join = [](std::vector<KernelSpec> a, const std::vector<KernelSpec>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    return {{"poly", poly}, {"rbf", rbf}, {"poly_rbf", join(poly, rbf)}, {"matern_rbf", join(matern, rbf)}};
}

inline const NamedKernel& find_data_kernel(const std::string& name) {
    static const auto all = builtin_data_kernels();
    for (const auto& k : all)
        if (k.name == name) return k;
    throw UsageError("unknown data kernel '" + name + "' (expected poly1, poly2, poly3, rbf, matern32, matern52)");
}

inline const NamedLibrary& find_library(const std::string& name) {
    static const auto all = builtin_libraries();
    for (const auto& l : all)
        if (l.name == name) return l;
    throw UsageError("unknown library '" + name + "' (expected poly, rbf, poly_rbf, matern_rbf)");
}

/// Selection over the built-in grids. Empty lists mean "all".
struct GridConfig {
    std::vector<std::string> data_kernels;
    std::vector<NamedLibrary> libraries;  ///< kernels may be custom; empty means the four built-ins
    std::vector<Criterion> criteria;
    std::vector<Strategy> strategies;
    std::vector<TestKind> tests;
    std::vector<double> deltas;
    int n = 100;
    int p1 = 2;
    int p2 = 2;
    double noise_sd = 0.01;
    int B = 100;
    int reps = 200;
    std::uint64_t master_seed = 1;
    LambdaGrid grid = LambdaGrid::default_grid();
    bool corrected_pvalue = false;
    BootstrapScheme boot_scheme = BootstrapScheme::refit;
};

inline std::vector<double> default_delta_grid() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

/// Cartesian product, nested data kernel > library > criterion > strategy > test > delta.
inline std::vector<Scenario> scenario_grid(const GridConfig& cfg) {
    std::vector<NamedKernel> data;
    if (cfg.data_kernels.empty()) {
        data = builtin_data_kernels();
    } else {
        for (const auto& name : cfg.data_kernels) data.push_back(find_data_kernel(name));
    }
    const auto libraries = cfg.libraries.empty() ? builtin_libraries() : cfg.libraries;
    const auto criteria = cfg.criteria.empty()
                              ? std::vector<Criterion>(kAllCriteria.begin(), kAllCriteria.end())
                              : cfg.criteria;
    const auto strategies = cfg.strategies.empty()
                                ? std::vector<Strategy>(kAllStrategies.begin(), kAllStrategies.end())
                                : cfg.strategies;
    const auto tests = cfg.tests.empty() ? std::vector<TestKind>{TestKind::asym, TestKind::boot} : cfg.tests;
    const auto deltas = cfg.deltas.empty() ? default_delta_grid() : cfg.deltas;

    std::vector<Scenario> out;
    for (const auto& dk : data)
        for (const auto& lib : libraries)
            for (auto crit : criteria)
                for (auto strat : strategies)
                    for (auto test : tests)
                        for (double delta : deltas) {
                            Scenario s;
                            s.id = out.size();
                            s.n = cfg.n;
                            s.p1 = cfg.p1;
                            s.p2 = cfg.p2;
                            s.data_kernel_name = dk.name;
                            s.k_true = dk.spec;
                            s.delta = delta;
                            s.noise_sd = cfg.noise_sd;
                            s.library_name = lib.name;
                            s.library = lib.kernels;
                            s.criterion = crit;
                            s.strategy = strat;
                            s.test_kind = test;
                            s.B = cfg.B;
                            s.reps = cfg.reps;
                            s.master_seed = cfg.master_seed;
                            s.grid = cfg.grid;
                            s.corrected_pvalue = cfg.corrected_pvalue;
                            s.boot_scheme = cfg.boot_scheme;
                            validate(s);
                            out.push_back(std::move(s));
                        }
    return out;
}

}  // namespace cvek
