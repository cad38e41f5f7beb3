#pragma once

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/ensemble.hpp"
#include "cvek/error.hpp"
#include "cvek/hypothesis.hpp"
#include "cvek/kernel.hpp"
#include "cvek/parallel.hpp"
#include "cvek/simulation.hpp"
#include "cvek/tuning.hpp"

namespace cvek {

namespace detail {
inline std::vector<std::string> split_list(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t pos = std::min(s.find(delim, start), s.size());
        std::string_view item = s.substr(start, pos - start);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) out.emplace_back(item);
        start = pos + 1;
    }
    return out;
}

inline double parse_real(std::string_view text, const std::string& what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw UsageError(what + ": '" + std::string(text) + "' is not a number");
    }
    return v;
}
}  // namespace detail

/// "rbf:l=0.5", "polynomial:p=2", "matern:nu=1.5:l=1.5", "rational:alpha=2:l=1", "linear".
inline KernelSpec parse_kernel_spec(std::string_view text) {
    const auto parts = detail::split_list(text, ':');
    if (parts.empty()) throw UsageError("empty kernel spec");
    KernelSpec spec;
    spec.family = family_from_string(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) {
            throw UsageError("kernel spec '" + std::string(text) + "': expected key=value, got '" + parts[i] + "'");
        }
        const std::string key = parts[i].substr(0, eq);
        const std::string_view value = std::string_view(parts[i]).substr(eq + 1);
        const std::string what = "kernel spec '" + std::string(text) + "', " + key;
        if (key == "l") {
            spec.l = detail::parse_real(value, what);
        } else if (key == "p") {
            const double p = detail::parse_real(value, what);
            if (p != std::floor(p)) throw UsageError(what + " must be an integer");
            spec.p = static_cast<int>(p);
        } else if (key == "nu") {
            spec.nu = nu_from_value(detail::parse_real(value, what));
        } else if (key == "alpha") {
            spec.alpha = detail::parse_real(value, what);
        } else {
            throw UsageError("kernel spec '" + std::string(text) + "': unknown parameter '" + key + "'");
        }
    }
    validate(spec);
    return spec;
}

inline std::vector<KernelSpec> parse_kernel_list(std::string_view text) {
    std::vector<KernelSpec> out;
    for (const auto& item : detail::split_list(text, ',')) out.push_back(parse_kernel_spec(item));
    if (out.empty()) throw UsageError("empty kernel library");
    return out;
}

enum class OutputFormat { csv, json_lines };

inline OutputFormat output_format_from_string(std::string_view name) {
    if (name == "csv") return OutputFormat::csv;
    if (name == "json-lines" || name == "jsonl") return OutputFormat::json_lines;
    throw UsageError("unknown output format '" + std::string(name) + "' (expected csv or json-lines)");
}

/// Everything a command needs. Built from defaults, then a config file, then flags.
struct RunConfig {
    std::string command;
    std::optional<std::string> config_path;

    // fit / test
    std::string data_path;
    std::vector<std::string> group1;
    std::vector<std::string> group2;
    std::string response = "y";

    /// Builtin library name, a section of `libraries`, or an inline list.
    std::string library = "rbf";
    std::map<std::string, std::vector<KernelSpec>> libraries;

    Criterion criterion = Criterion::loocv;
    Strategy strategy = Strategy::stack;
    TestKind test_kind = TestKind::boot;
    BootstrapScheme boot_scheme = BootstrapScheme::refit;
    bool corrected_pvalue = false;
    int B = 100;
    std::uint64_t seed = 1;
    LambdaGrid lambda_grid = LambdaGrid::default_grid();
    unsigned jobs = default_jobs();

    // simulate
    std::optional<std::string> grid_name;
    std::vector<std::string> data_kernels;
    std::vector<std::string> sim_libraries;
    std::vector<Criterion> criteria;
    std::vector<Strategy> strategies;
    std::vector<TestKind> tests;
    std::vector<double> deltas;
    int reps = 200;
    int n = 100;
    int p1 = 2;
    int p2 = 2;
    double noise_sd = 0.01;
    bool skip_errors = false;

    std::optional<std::string> output_path;
    OutputFormat format = OutputFormat::csv;
};

/// Named kernel lists, looked up in the config sections first, then the builtins,
/// then parsed as an inline list.
inline std::vector<KernelSpec> resolve_library(const std::string& ref,
                                               const std::map<std::string, std::vector<KernelSpec>>& sections) {
    if (const auto it = sections.find(ref); it != sections.end()) return it->second;
    for (const auto& lib : builtin_libraries()) {
        if (lib.name == ref) return lib.kernels;
    }
    try {
        return parse_kernel_list(ref);
    } catch (const UsageError& e) {
        throw UsageError("library '" + ref + "' is not a config section or builtin library, and not a kernel list (" +
                         e.what() + ")");
    }
}

namespace detail {
inline std::vector<std::string> string_list(const nlohmann::json& j, const std::string& key) {
    if (j.is_string()) return split_list(j.get<std::string>(), ',');
    if (!j.is_array()) throw UsageError("config: '" + key + "' must be a list of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw UsageError("config: '" + key + "' must be a list of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

inline std::vector<KernelSpec> kernel_list(const nlohmann::json& j, const std::string& key) {
    std::vector<KernelSpec> out;
    for (const auto& s : string_list(j, key)) out.push_back(parse_kernel_spec(s));
    if (out.empty()) throw UsageError("config: '" + key + "' is empty");
    return out;
}

inline LambdaGrid lambda_grid_from_json(const nlohmann::json& j) {
    if (j.is_array()) return LambdaGrid(j.get<std::vector<double>>());
    if (j.is_object()) {
        return LambdaGrid::log_spaced(j.at("from").get<double>(), j.at("to").get<double>(), j.at("step").get<double>());
    }
    throw UsageError("config: 'lambda_grid' must be a list of values or {from, to, step}");
}

template <class T, class Fn>
std::vector<T> parsed_list(const nlohmann::json& j, const std::string& key, Fn&& parse) {
    std::vector<T> out;
    for (const auto& s : string_list(j, key)) out.push_back(parse(s));
    return out;
}
}  // namespace detail

/// Applies the keys present in a JSON config object. Unknown keys are errors.
inline void apply_config(RunConfig& cfg, const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config: top level must be an object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "data") cfg.data_path = v.get<std::string>();
            else if (key == "group1") cfg.group1 = detail::string_list(v, key);
            else if (key == "group2") cfg.group2 = detail::string_list(v, key);
            else if (key == "response") cfg.response = v.get<std::string>();
            else if (key == "library") {
                if (v.is_array()) {
                    cfg.libraries["(config)"] = detail::kernel_list(v, key);
                    cfg.library = "(config)";
                } else {
                    cfg.library = v.get<std::string>();
                }
            } else if (key == "libraries") {
                if (!v.is_object()) throw UsageError("config: 'libraries' must map names to kernel lists");
                for (const auto& [name, list] : v.items()) cfg.libraries[name] = detail::kernel_list(list, "libraries." + name);
            }
            else if (key == "criterion") cfg.criterion = criterion_from_string(v.get<std::string>());
            else if (key == "strategy") cfg.strategy = strategy_from_string(v.get<std::string>());
            else if (key == "test") cfg.test_kind = test_kind_from_string(v.get<std::string>());
            else if (key == "boot_scheme") cfg.boot_scheme = bootstrap_scheme_from_string(v.get<std::string>());
            else if (key == "corrected_pvalue") cfg.corrected_pvalue = v.get<bool>();
            else if (key == "B") cfg.B = v.get<int>();
            else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (key == "jobs") cfg.jobs = v.get<unsigned>();
            else if (key == "lambda_grid") cfg.lambda_grid = detail::lambda_grid_from_json(v);
            else if (key == "grid") cfg.grid_name = v.get<std::string>();
            else if (key == "data_kernels") cfg.data_kernels = detail::string_list(v, key);
            else if (key == "sim_libraries") cfg.sim_libraries = detail::string_list(v, key);
            else if (key == "criteria") cfg.criteria = detail::parsed_list<Criterion>(v, key, criterion_from_string);
            else if (key == "strategies") cfg.strategies = detail::parsed_list<Strategy>(v, key, strategy_from_string);
            else if (key == "tests") cfg.tests = detail::parsed_list<TestKind>(v, key, test_kind_from_string);
            else if (key == "deltas") cfg.deltas = v.get<std::vector<double>>();
            else if (key == "reps") cfg.reps = v.get<int>();
            else if (key == "n") cfg.n = v.get<int>();
            else if (key == "p1") cfg.p1 = v.get<int>();
            else if (key == "p2") cfg.p2 = v.get<int>();
            else if (key == "noise_sd") cfg.noise_sd = v.get<double>();
            else if (key == "skip_errors") cfg.skip_errors = v.get<bool>();
            else if (key == "out") cfg.output_path = v.get<std::string>();
            else if (key == "format") cfg.format = output_format_from_string(v.get<std::string>());
            else throw UsageError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

inline nlohmann::json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    try {
        return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("config file '" + path + "' is malformed: " + e.what());
    }
}

/// Scenario list for `simulate`. Empty selections mean the full builtin grid.
inline GridConfig grid_config(const RunConfig& cfg) {
    if (cfg.grid_name && *cfg.grid_name != "default") {
        throw UsageError("unknown grid '" + *cfg.grid_name + "' (expected default)");
    }
    GridConfig g;
    g.data_kernels = cfg.data_kernels;
    for (const auto& name : cfg.sim_libraries) g.libraries.push_back({name, resolve_library(name, cfg.libraries)});
    g.criteria = cfg.criteria;
    g.strategies = cfg.strategies;
    g.tests = cfg.tests;
    g.deltas = cfg.deltas;
    g.n = cfg.n;
    g.p1 = cfg.p1;
    g.p2 = cfg.p2;
    g.noise_sd = cfg.noise_sd;
    g.B = cfg.B;
    g.reps = cfg.reps;
    g.master_seed = cfg.seed;
    g.grid = cfg.lambda_grid;
    g.corrected_pvalue = cfg.corrected_pvalue;
    g.boot_scheme = cfg.boot_scheme;
    return g;
}

inline TestOptions test_options(const RunConfig& cfg) {
    TestOptions o;
    o.ensemble.criterion = cfg.criterion;
    o.ensemble.strategy = cfg.strategy;
    o.ensemble.grid = cfg.lambda_grid;
    o.kind = cfg.test_kind;
    o.B = cfg.B;
    o.seed = cfg.seed;
    o.corrected_pvalue = cfg.corrected_pvalue;
    o.scheme = cfg.boot_scheme;
    o.jobs = cfg.jobs;
    return o;
}

}  // namespace cvek
