#pragma once

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "cvek/config.hpp"
#include "cvek/error.hpp"
#include "cvek/hypothesis.hpp"
#include "cvek/simulation.hpp"

namespace cvek {

/// Shortest text that reads back to the same double; "nan" for NaN.
inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace detail {
using Row = std::vector<std::pair<std::string, nlohmann::ordered_json>>;

inline std::string cell_text(const nlohmann::ordered_json& v) {
    if (v.is_string()) return csv_field(v.get<std::string>());
    if (v.is_number_float()) return format_real(v.get<double>());
    if (v.is_null()) return "nan";
    return v.dump();
}

// nlohmann prints floats with 17 significant digits; keep the shortest form instead.
inline std::string json_text(const nlohmann::ordered_json& v) {
    if (v.is_number_float()) {
        const double d = v.get<double>();
        return std::isfinite(d) ? format_real(d) : "null";
    }
    if (v.is_object()) {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, x] : v.items()) {
            out += (first ? "" : ",") + nlohmann::ordered_json(k).dump() + ":" + json_text(x);
            first = false;
        }
        return out + "}";
    }
    if (v.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + json_text(v[i]);
        return out + "]";
    }
    return v.dump();
}

inline void write_rows(std::ostream& out, const std::vector<Row>& rows, OutputFormat format) {
    if (format == OutputFormat::csv) {
        if (rows.empty()) return;
        for (std::size_t i = 0; i < rows.front().size(); ++i) out << (i ? "," : "") << rows.front()[i].first;
        out << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i].second);
            out << '\n';
        }
    } else {
        for (const auto& row : rows) {
            nlohmann::ordered_json obj = nlohmann::ordered_json::object();
            for (const auto& [k, v] : row) obj[k] = v;
            out << json_text(obj) << '\n';
        }
    }
}

inline Row scenario_keys(const Scenario& s) {
    return {{"scenario_id", s.id},
            {"data_kernel", s.data_kernel_name},
            {"delta", s.delta},
            {"library", s.library_name},
            {"criterion", std::string(to_string(s.criterion))},
            {"strategy", std::string(to_string(s.strategy))},
            {"test", std::string(to_string(s.test_kind))}};
}
}  // namespace detail

/// One row per replicate, ordered by scenario then replicate.
inline void write_detail(std::ostream& out, const std::vector<Scenario>& scenarios,
                         const std::vector<ScenarioResult>& results, OutputFormat format) {
    std::vector<detail::Row> rows;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        for (std::size_t r = 0; r < results[i].pvalues.size(); ++r) {
            auto row = detail::scenario_keys(scenarios[i]);
            row.emplace_back("rep", r);
            row.emplace_back("pvalue", results[i].pvalues[r]);
            rows.push_back(std::move(row));
        }
    }
    detail::write_rows(out, rows, format);
}

/// One row per scenario. `reps` counts the replicates that produced a p-value.
inline void write_aggregate(std::ostream& out, const std::vector<Scenario>& scenarios,
                            const std::vector<ScenarioResult>& results, OutputFormat format) {
    std::vector<detail::Row> rows;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        std::size_t used = 0;
        for (double p : results[i].pvalues) used += std::isnan(p) ? 0 : 1;
        auto row = detail::scenario_keys(scenarios[i]);
        row.emplace_back("rejection_rate", results[i].rejection_rate);
        row.emplace_back("reps", used);
        row.emplace_back("failed", results[i].pvalues.size() - used);
        rows.push_back(std::move(row));
    }
    detail::write_rows(out, rows, format);
}

/// "out.csv" -> "out.aggregate.csv".
inline std::string aggregate_path(const std::string& detail_path) {
    const std::filesystem::path p(detail_path);
    std::filesystem::path agg = p.parent_path() / (p.stem().string() + ".aggregate" + p.extension().string());
    return agg.string();
}

namespace detail {
inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write output file '" + path + "'");
    return out;
}
}  // namespace detail

/// Writes the detail table to `path` and the aggregate table next to it.
inline void emit_results(const std::vector<Scenario>& scenarios, const std::vector<ScenarioResult>& results,
                         const std::string& path, OutputFormat format) {
    if (scenarios.empty() || scenarios.size() != results.size()) throw UsageError("emit_results: no results");
    {
        auto out = detail::open_output(path);
        write_detail(out, scenarios, results, format);
        if (!out) throw DataError("failed writing '" + path + "'");
    }
    const std::string agg = aggregate_path(path);
    auto out = detail::open_output(agg);
    write_aggregate(out, scenarios, results, format);
    if (!out) throw DataError("failed writing '" + agg + "'");
}

/// Weights, tuning parameters and noise estimates of a fitted null model.
inline nlohmann::ordered_json fit_summary(const EnsembleFit& fit) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json kernels = nlohmann::ordered_json::array();
    for (std::size_t d = 0; d < fit.base_fits.size(); ++d) {
        const auto& b = fit.base_fits[d];
        kernels.push_back({{"kernel", b.spec ? describe(*b.spec) : "kernel" + std::to_string(d + 1)},
                           {"weight", fit.u_hat[static_cast<Eigen::Index>(d)]},
                           {"lambda_hat", b.lambda_hat}});
    }
    j["kernels"] = kernels;
    j["lambda_K"] = fit.lambda_K;
    j["lambda_ens"] = fit.lambda_ens;
    j["intercept"] = fit.intercept;
    j["df"] = fit.df;
    j["sigma2_hat"] = fit.sigma2_hat;
    j["tau_hat"] = fit.tau_hat;
    return j;
}

inline nlohmann::ordered_json test_summary(const TestReport& report) {
    nlohmann::ordered_json j = fit_summary(report.fit);
    const TestResult& r = report.result;
    j["test"] = std::string(to_string(r.method));
    j["statistic"] = r.statistic;
    j["pvalue"] = r.pvalue;
    if (r.method == TestKind::asym) {
        j["kappa_hat"] = r.kappa_hat;
        j["nu_hat"] = r.nu_hat;
    } else {
        j["B"] = r.B;
        j["seed"] = r.seed;
    }
    return j;
}

/// json-lines: the summary as one line. csv: key,value rows with kernels flattened
/// as weight[<kernel>] and lambda_hat[<kernel>].
inline void write_summary(std::ostream& out, const nlohmann::ordered_json& summary, OutputFormat format) {
    if (format == OutputFormat::json_lines) {
        out << detail::json_text(summary) << '\n';
        return;
    }
    out << "key,value\n";
    for (const auto& [key, v] : summary.items()) {
        if (key == "kernels") {
            for (const auto& k : v) {
                const std::string name = k["kernel"].get<std::string>();
                out << csv_field("weight[" + name + "]") << ',' << detail::cell_text(k["weight"]) << '\n';
                out << csv_field("lambda_hat[" + name + "]") << ',' << detail::cell_text(k["lambda_hat"]) << '\n';
            }
        } else {
            out << csv_field(key) << ',' << detail::cell_text(v) << '\n';
        }
    }
}

}  // namespace cvek
