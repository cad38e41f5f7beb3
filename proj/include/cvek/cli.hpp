#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "cvek/config.hpp"
#include "cvek/dataset.hpp"
#include "cvek/error.hpp"
#include "cvek/hypothesis.hpp"
#include "cvek/report.hpp"
#include "cvek/simulation.hpp"

namespace cvek {

/// Thrown by parse_args for --help; carries the help text.
struct HelpRequested : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline LambdaGrid lambda_grid_from_flag(const std::string& text) {
    // "from:to:step" on the log scale, or a comma list of values.
    if (text.find(':') != std::string::npos) {
        const auto parts = split_list(text, ':');
        if (parts.size() != 3) throw UsageError("--lambda-grid expects from:to:step or a comma list");
        return LambdaGrid::log_spaced(parse_real(parts[0], "--lambda-grid"), parse_real(parts[1], "--lambda-grid"),
                                      parse_real(parts[2], "--lambda-grid"));
    }
    std::vector<double> values;
    for (const auto& v : split_list(text, ',')) values.push_back(parse_real(v, "--lambda-grid"));
    return LambdaGrid(std::move(values));
}
}  // namespace detail

/// Defaults, then --config, then the remaining flags. Throws UsageError or HelpRequested.
inline RunConfig parse_args(const std::vector<std::string>& args) {
    CLI::App app{"Cross-validated kernel ensembles and the interaction score test", "cvek"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    app.add_subcommand("fit", "fit the additive null model and print weights and tuning parameters");
    app.add_subcommand("test", "test for interaction between the two feature groups");
    app.add_subcommand("simulate", "run the Monte Carlo power / type I error grid");
    app.add_subcommand("kernels", "list kernel families and their hyperparameters");

    std::string config, data, group1, group2, response, library, criterion, strategy, test, boot_scheme;
    std::string delta_grid, lambda_grid, out, format, grid, data_kernels, criteria, strategies, tests, sim_libraries;
    int B = 0, reps = 0, n = 0, p1 = 0, p2 = 0;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
    double noise_sd = 0.0;
    bool skip_errors = false, corrected = false;

    auto* o_config = app.add_option("--config", config, "JSON config file");
    auto* o_data = app.add_option("--data", data, "CSV data file with header row");
    auto* o_g1 = app.add_option("--group1", group1, "comma-separated columns of the first group");
    auto* o_g2 = app.add_option("--group2", group2, "comma-separated columns of the second group");
    auto* o_resp = app.add_option("--response", response, "response column (default y)");
    auto* o_lib = app.add_option("--library", library,
                                 "config section, builtin library (poly, rbf, poly_rbf, matern_rbf) or inline list "
                                 "like rbf:l=0.5,polynomial:p=2");
    auto* o_crit = app.add_option("--criterion", criterion, "loocv, aic, aicc, bic, gcv, gcvc or gmpml");
    auto* o_strat = app.add_option("--strategy", strategy, "avg, exp or stack");
    auto* o_test = app.add_option("--test", test, "asym or boot");
    auto* o_scheme = app.add_option("--boot-scheme", boot_scheme, "refit (default) or fixed");
    auto* o_corr = app.add_flag("--corrected-pvalue", corrected, "bootstrap p-value (1 + count) / (1 + B)");
    auto* o_B = app.add_option("--B", B, "bootstrap replicates")->check(CLI::PositiveNumber);
    auto* o_reps = app.add_option("--reps", reps, "simulation replicates per scenario")->check(CLI::PositiveNumber);
    auto* o_delta = app.add_option("--delta-grid", delta_grid, "comma-separated interaction strengths");
    auto* o_lgrid = app.add_option("--lambda-grid", lambda_grid, "log-scale from:to:step, or a comma list of values");
    auto* o_seed = app.add_option("--seed", seed, "master seed");
    auto* o_jobs = app.add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
    auto* o_out = app.add_option("--out", out, "output file (simulate also writes <stem>.aggregate<ext>)");
    auto* o_fmt = app.add_option("--format", format, "csv or json-lines");
    auto* o_grid = app.add_option("--grid", grid, "simulation grid name (default)");
    auto* o_dk = app.add_option("--data-kernels", data_kernels, "simulate: poly1,poly2,poly3,rbf,matern32,matern52");
    auto* o_simlib = app.add_option("--libraries", sim_libraries, "simulate: comma-separated library names");
    auto* o_crits = app.add_option("--criteria", criteria, "simulate: comma-separated criteria");
    auto* o_strats = app.add_option("--strategies", strategies, "simulate: comma-separated strategies");
    auto* o_tests = app.add_option("--tests", tests, "simulate: comma-separated test kinds");
    auto* o_n = app.add_option("--n", n, "simulate: sample size")->check(CLI::PositiveNumber);
    auto* o_p1 = app.add_option("--p1", p1, "simulate: first group dimension")->check(CLI::PositiveNumber);
    auto* o_p2 = app.add_option("--p2", p2, "simulate: second group dimension")->check(CLI::PositiveNumber);
    auto* o_noise = app.add_option("--noise-sd", noise_sd, "simulate: noise standard deviation");
    auto* o_skip = app.add_flag("--skip-errors", skip_errors, "simulate: record failed replicates instead of aborting");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested(app.help());
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    RunConfig cfg;
    cfg.command = app.get_subcommands().front()->get_name();
    if (o_config->count()) {
        cfg.config_path = config;
        apply_config(cfg, read_config_file(config));
    }
    if (o_data->count()) cfg.data_path = data;
    if (o_g1->count()) cfg.group1 = detail::split_list(group1, ',');
    if (o_g2->count()) cfg.group2 = detail::split_list(group2, ',');
    if (o_resp->count()) cfg.response = response;
    if (o_lib->count()) {
        cfg.library = library;
        if (cfg.command == "simulate") cfg.sim_libraries = {library};
    }
    if (o_crit->count()) cfg.criterion = criterion_from_string(criterion);
    if (o_strat->count()) cfg.strategy = strategy_from_string(strategy);
    if (o_test->count()) cfg.test_kind = test_kind_from_string(test);
    if (o_scheme->count()) cfg.boot_scheme = bootstrap_scheme_from_string(boot_scheme);
    if (o_corr->count()) cfg.corrected_pvalue = corrected;
    if (o_B->count()) cfg.B = B;
    if (o_reps->count()) cfg.reps = reps;
    if (o_delta->count()) {
        cfg.deltas.clear();
        for (const auto& d : detail::split_list(delta_grid, ',')) cfg.deltas.push_back(detail::parse_real(d, "--delta-grid"));
    }
    if (o_lgrid->count()) cfg.lambda_grid = detail::lambda_grid_from_flag(lambda_grid);
    if (o_seed->count()) cfg.seed = seed;
    if (o_jobs->count()) cfg.jobs = jobs;
    if (o_out->count()) cfg.output_path = out;
    if (o_fmt->count()) cfg.format = output_format_from_string(format);
    if (o_grid->count()) cfg.grid_name = grid;
    if (o_dk->count()) cfg.data_kernels = detail::split_list(data_kernels, ',');
    if (o_simlib->count()) cfg.sim_libraries = detail::split_list(sim_libraries, ',');
    if (o_crits->count()) {
        cfg.criteria.clear();
        for (const auto& c : detail::split_list(criteria, ',')) cfg.criteria.push_back(criterion_from_string(c));
    }
    if (o_strats->count()) {
        cfg.strategies.clear();
        for (const auto& s : detail::split_list(strategies, ',')) cfg.strategies.push_back(strategy_from_string(s));
    }
    if (o_tests->count()) {
        cfg.tests.clear();
        for (const auto& t : detail::split_list(tests, ',')) cfg.tests.push_back(test_kind_from_string(t));
    }
    if (o_n->count()) cfg.n = n;
    if (o_p1->count()) cfg.p1 = p1;
    if (o_p2->count()) cfg.p2 = p2;
    if (o_noise->count()) cfg.noise_sd = noise_sd;
    if (o_skip->count()) cfg.skip_errors = skip_errors;

    if (cfg.command == "fit" || cfg.command == "test") {
        if (cfg.data_path.empty()) throw UsageError(cfg.command + ": --data is required");
        check_groups(cfg.group1, cfg.group2, cfg.response);
    }
    if (cfg.B < 1) throw UsageError("B must be at least 1");
    if (cfg.reps < 1) throw UsageError("reps must be at least 1");
    if (cfg.jobs < 1) cfg.jobs = 1;
    return cfg;
}

inline RunConfig parse_args(int argc, const char* const* argv) {
    return parse_args(std::vector<std::string>(argv + 1, argv + argc));
}

namespace detail {
/// Standardized feature blocks and the response, ready for the estimator.
inline ModelData prepared_data(const RunConfig& cfg) {
    ModelData d = load_dataset(cfg.data_path, cfg.group1, cfg.group2, cfg.response);
    if (d.y.size() < 4) throw DataError("need at least 4 rows, got " + std::to_string(d.y.size()));
    d.X1 = standardize(d.X1, cfg.group1).values;
    d.X2 = standardize(d.X2, cfg.group2).values;
    return d;
}

template <class Fn>
void with_output(const RunConfig& cfg, std::ostream& out, Fn&& fn) {
    if (!cfg.output_path) {
        fn(out);
        return;
    }
    auto file = open_output(*cfg.output_path);
    fn(file);
    if (!file) throw DataError("failed writing '" + *cfg.output_path + "'");
}
}  // namespace detail

inline void run_kernels(const RunConfig& cfg, std::ostream& out) {
    std::vector<detail::Row> rows;
    for (const auto& info : family_catalog()) {
        std::string hyper;
        for (std::size_t i = 0; i < info.hyperparameters.size(); ++i) hyper += (i ? " " : "") + info.hyperparameters[i];
        rows.push_back({{"family", std::string(to_string(info.family))},
                        {"hyperparameters", hyper},
                        {"formula", info.formula}});
    }
    detail::with_output(cfg, out, [&](std::ostream& o) { detail::write_rows(o, rows, cfg.format); });
}

inline void run_fit(const RunConfig& cfg, std::ostream& out) {
    const ModelData d = detail::prepared_data(cfg);
    const auto library = resolve_library(cfg.library, cfg.libraries);
    const LibraryGrams grams = build_library_grams(d.X1, d.X2, library);
    EnsembleOptions opts{cfg.criterion, cfg.strategy, cfg.lambda_grid};
    const EnsembleFit fit = fit_ensemble(d.y, grams.additive, opts);
    detail::with_output(cfg, out, [&](std::ostream& o) { write_summary(o, fit_summary(fit), cfg.format); });
}

inline void run_test_command(const RunConfig& cfg, std::ostream& out) {
    const ModelData d = detail::prepared_data(cfg);
    const auto library = resolve_library(cfg.library, cfg.libraries);
    const TestReport report = InteractionTester(d.X1, d.X2, library, test_options(cfg)).run(d.y);
    detail::with_output(cfg, out, [&](std::ostream& o) { write_summary(o, test_summary(report), cfg.format); });
}

inline void run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto scenarios = scenario_grid(grid_config(cfg));
    err << "simulate: " << scenarios.size() << " scenarios x " << cfg.reps << " replicates on " << cfg.jobs
        << " threads\n";
    RunOptions ro;
    ro.jobs = cfg.jobs;
    ro.skip_errors = cfg.skip_errors;
    std::size_t last_pct = 101;
    ro.progress = [&](std::size_t done, std::size_t total) {
        const std::size_t pct = done * 100 / total;
        if (pct != last_pct) {
            last_pct = pct;
            err << "\rsimulate: " << done << "/" << total << " (" << pct << "%)" << std::flush;
        }
    };
    const auto results = run_scenarios(scenarios, ro);
    err << '\n';
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.failures.size();
    if (failed > 0) err << "simulate: " << failed << " replicates failed and were skipped\n";
    if (cfg.output_path) {
        emit_results(scenarios, results, *cfg.output_path, cfg.format);
        err << "simulate: wrote " << *cfg.output_path << " and " << aggregate_path(*cfg.output_path) << '\n';
    } else {
        write_aggregate(out, scenarios, results, cfg.format);
    }
}

/// Runs one command. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig cfg = parse_args(args);
        if (cfg.command == "kernels") run_kernels(cfg, out);
        else if (cfg.command == "fit") run_fit(cfg, out);
        else if (cfg.command == "test") run_test_command(cfg, out);
        else run_simulate(cfg, out, err);
        return 0;
    } catch (const HelpRequested& h) {
        out << h.what();
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace cvek
