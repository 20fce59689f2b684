#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bootstrap.hpp"
#include "core_data.hpp"
#include "errors.hpp"
#include "isotonic.hpp"
#include "simulation.hpp"

namespace cdml {

inline constexpr int kSchemaVersion = 1;

// Shortest round-trip decimal form; fixed for byte-identical outputs.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\"");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else cur.push_back(c);
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

// Header row required. Cells that do not parse as numbers become NaN and are
// rejected by validation if the column is used.
inline Table parse_csv(std::istream& in) {
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("CSV input is empty");
    t.names = detail::split_csv_line(line);
    t.columns.assign(t.names.size(), {});
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != t.names.size())
            throw SchemaError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields, expected " +
                              std::to_string(t.names.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            char* end = nullptr;
            double v = std::strtod(cells[j].c_str(), &end);
            if (cells[j].empty() || end == cells[j].c_str() || *end != '\0') v = std::nan("");
            t.columns[j].push_back(v);
        }
    }
    return t;
}

inline Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "'");
    return parse_csv(in);
}

inline void write_csv(std::ostream& out, const Table& t) {
    for (std::size_t j = 0; j < t.names.size(); ++j) out << (j ? "," : "") << t.names[j];
    out << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
        for (std::size_t j = 0; j < t.columns.size(); ++j) out << (j ? "," : "") << format_double(t.columns[j][i]);
        out << '\n';
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write '" + path + "'");
    out << text;
}

// ---------------------------------------------------------------------------
// Calibrator JSON: {"schema_version", "breakpoints", "levels"}
// ---------------------------------------------------------------------------

inline Json to_json(const Calibrator& c) {
    return Json{{"schema_version", kSchemaVersion}, {"breakpoints", c.breakpoints()}, {"levels", c.levels()}};
}

inline Calibrator calibrator_from_json(const Json& j) {
    try {
        return Calibrator(j.at("breakpoints").get<std::vector<double>>(), j.at("levels").get<std::vector<double>>());
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("malformed calibrator JSON: ") + e.what());
    }
}

inline Json to_json(const Interval& i) { return Json::array({i.lower, i.upper}); }

inline Json to_json(const EstimateReport& r) {
    return Json{{"schema_version", kSchemaVersion},
                {"tau_hat", r.tau_hat},
                {"se", r.se},
                {"ci_lower", r.ci_lower},
                {"ci_upper", r.ci_upper},
                {"level", r.level},
                {"estimator", to_string(r.estimator)},
                {"ci_method", to_string(r.ci_method)},
                {"n_used", r.n_used},
                {"config", r.config},
                {"diagnostics", r.diagnostics}};
}

inline Json to_json(const BootstrapResult& b) {
    return Json{{"tau_hat", b.tau_hat},
                {"sigma_hat", b.sigma_hat},
                {"normal_ci", to_json(b.normal_ci)},
                {"percentile_ci", to_json(b.percentile_ci)},
                {"requested", b.requested},
                {"kept", b.replicate_estimates.size()},
                {"dropped", b.dropped},
                {"level", b.level}};
}

inline std::string replicates_csv(const BootstrapResult& b) {
    std::ostringstream out;
    out << "replicate,tau_star\n";
    for (std::size_t k = 0; k < b.replicate_estimates.size(); ++k) out << k + 1 << ',' << format_double(b.replicate_estimates[k]) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Monte Carlo outputs
// ---------------------------------------------------------------------------

inline Json to_json(const EstimatorMetrics& m) {
    return Json{{"estimator", m.estimator}, {"reps", m.reps},       {"mean_estimate", m.mean_estimate},
                {"bias", m.bias},           {"se", m.se},           {"mean_se", m.mean_se},
                {"rmse", m.rmse},           {"coverage", m.coverage}};
}

inline Json metrics_json(const MonteCarloResult& r) {
    Json metrics = Json::array();
    for (const auto& m : r.metrics) metrics.push_back(to_json(m));
    return Json{{"schema_version", kSchemaVersion},
                {"config", to_json(r.config)},
                {"tau_true", r.tau_true},
                {"bootstrap_dropped", r.bootstrap_dropped},
                {"metrics", metrics}};
}

inline std::string replicate_rows_csv(const MonteCarloResult& r) {
    std::ostringstream out;
    out << "rep,estimator,tau_hat,se,ci_lower,ci_upper,covered\n";
    for (const auto& row : r.rows)
        out << row.rep + 1 << ',' << row.estimator << ',' << format_double(row.tau_hat) << ',' << format_double(row.se) << ','
            << format_double(row.ci_lower) << ',' << format_double(row.ci_upper) << ',' << (row.covered ? 1 : 0) << '\n';
    return out.str();
}

// Long format: one row per (metric, n, estimator), ready for faceted plots.
inline std::string figure_long_csv(const MonteCarloResult& r) {
    std::ostringstream out;
    out << "scenario,metric,n,estimator,value\n";
    for (const auto& m : r.metrics) {
        const std::pair<const char*, double> vals[] = {{"bias", m.bias}, {"se", m.se}, {"coverage", m.coverage}};
        for (const auto& [name, v] : vals)
            out << to_string(r.config.scenario) << ',' << name << ',' << r.config.n << ',' << m.estimator << ',' << format_double(v) << '\n';
    }
    return out.str();
}

}  // namespace cdml
