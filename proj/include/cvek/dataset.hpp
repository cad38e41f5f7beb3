#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cvek/error.hpp"

namespace cvek {

/// Numeric table with a header row.
struct Table {
    std::vector<std::string> columns;
    Eigen::MatrixXd values;
};

namespace detail {
inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
    return out;
}
}  // namespace detail

/// Comma- or tab-delimited text; the delimiter is whichever appears in the header.
/// Rows are numbered from 1 after the header in error messages.
inline Table parse_table(std::istream& in, const std::string& source = "input") {
    std::string header;
    while (std::getline(in, header) && detail::trim(header).empty()) {}
    if (detail::trim(header).empty()) throw DataError(source + ": empty file");
    const char delim = header.find('\t') != std::string::npos && header.find(',') == std::string::npos ? '\t' : ',';

    Table t;
    for (auto name : detail::split(header, delim)) t.columns.emplace_back(name);
    const auto width = static_cast<Eigen::Index>(t.columns.size());

    std::vector<double> cells;
    std::string line;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++rows;
        const auto fields = detail::split(line, delim);
        if (static_cast<Eigen::Index>(fields.size()) != width) {
            throw DataError(source + ": row " + std::to_string(rows) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(width));
        }
        for (Eigen::Index c = 0; c < width; ++c) {
            const std::string_view f = fields[static_cast<std::size_t>(c)];
            const std::string where = "row " + std::to_string(rows) + ", column " + t.columns[static_cast<std::size_t>(c)];
            if (f.empty() || f == "NA" || f == "NaN" || f == "nan") throw DataError(source + ": missing value at " + where);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw DataError(source + ": non-numeric value '" + std::string(f) + "' at " + where);
            }
            cells.push_back(v);
        }
    }
    if (rows == 0) throw DataError(source + ": no data rows");
    t.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cells.data(), rows, width);
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    return parse_table(in, path);
}

inline Eigen::Index column_index(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (t.columns[i] == name) return static_cast<Eigen::Index>(i);
    }
    throw DataError("column '" + name + "' not found; available columns: " + detail::join_names(t.columns));
}

/// Response and the two raw feature blocks.
struct ModelData {
    Eigen::VectorXd y;
    Eigen::MatrixXd X1;
    Eigen::MatrixXd X2;
};

/// Throws UsageError when a column is listed in both groups or is also the response.
inline void check_groups(const std::vector<std::string>& group1, const std::vector<std::string>& group2,
                         const std::string& response) {
    if (group1.empty() || group2.empty()) throw UsageError("both feature groups need at least one column");
    for (const auto& a : group1) {
        for (const auto& b : group2) {
            if (a == b) throw UsageError("column '" + a + "' appears in both group1 and group2");
        }
    }
    for (const auto* g : {&group1, &group2}) {
        for (const auto& c : *g) {
            if (c == response) throw UsageError("response column '" + c + "' is also listed as a feature");
        }
    }
}

inline ModelData select_model_data(const Table& t, const std::vector<std::string>& group1,
                                   const std::vector<std::string>& group2, const std::string& response) {
    check_groups(group1, group2, response);
    auto block = [&](const std::vector<std::string>& names) {
        Eigen::MatrixXd X(t.values.rows(), static_cast<Eigen::Index>(names.size()));
        for (std::size_t j = 0; j < names.size(); ++j) {
            X.col(static_cast<Eigen::Index>(j)) = t.values.col(column_index(t, names[j]));
        }
        return X;
    };
    ModelData d;
    d.y = t.values.col(column_index(t, response));
    d.X1 = block(group1);
    d.X2 = block(group2);
    return d;
}

inline ModelData load_dataset(const std::string& path, const std::vector<std::string>& group1,
                              const std::vector<std::string>& group2, const std::string& response) {
    check_groups(group1, group2, response);
    return select_model_data(read_table(path), group1, group2, response);
}

}  // namespace cvek
