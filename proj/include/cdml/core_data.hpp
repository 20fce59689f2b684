#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace cdml {

using Json = nlohmann::ordered_json;

// Column-oriented numeric table, the raw form of a CSV file.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - names.begin());
    }

    const std::vector<double>& column(const std::string& name) const {
        auto idx = find(name);
        if (!idx) throw SchemaError("missing column '" + name + "'");
        return columns[*idx];
    }

    void add_column(std::string name, std::vector<double> values) {
        if (!columns.empty() && values.size() != rows()) throw SchemaError("column '" + name + "' has wrong length");
        names.push_back(std::move(name));
        columns.push_back(std::move(values));
    }
};

// Column roles. When `fold` is empty, folds are drawn with assign_folds(seed).
struct Schema {
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;
    std::optional<std::string> fold;
    int num_folds = 5;
    std::optional<std::vector<int>> arms;  // declared arm set; inferred from data when absent
    std::optional<double> outcome_bound;   // defaults to max |Y|
    std::uint64_t seed = 0;
};

// Observations Z = (W, A, Y) with a fold partition. Arms are stored as dense
// indices 0..k-1; `arm_labels` maps them back to the user's integer labels.
// Folds are 0-based here and 1-based in files.
struct Dataset {
    Eigen::MatrixXd covariates;
    std::vector<std::string> covariate_names;
    std::vector<int> treatment;
    std::vector<int> arm_labels;
    std::vector<double> outcome;
    std::vector<int> fold_id;
    int num_folds = 0;
    double outcome_bound = 0.0;

    std::size_t size() const { return outcome.size(); }
    int num_arms() const { return static_cast<int>(arm_labels.size()); }

    int arm_index(int label) const {
        auto it = std::find(arm_labels.begin(), arm_labels.end(), label);
        if (it == arm_labels.end()) throw ValueError("arm " + std::to_string(label) + " is not in the declared arm set");
        return static_cast<int>(it - arm_labels.begin());
    }

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(num_folds), 0);
        for (int f : fold_id) ++sizes[static_cast<std::size_t>(f)];
        return sizes;
    }
};

// Random balanced partition of 0..n-1 into J folds (0-based labels):
// Fisher-Yates shuffle, then round-robin slicing.
inline std::vector<int> assign_folds(std::size_t n, int num_folds, Rng& rng) {
    if (num_folds < 1) throw FoldError("fold count must be at least 1");
    if (static_cast<std::size_t>(num_folds) > n)
        throw FoldError("fold count " + std::to_string(num_folds) + " exceeds sample size " + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<int> folds(n);
    for (std::size_t k = 0; k < n; ++k) folds[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(num_folds));
    return folds;
}

namespace detail {

inline bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v && std::abs(v) < 2147483647.0; }

inline void require_finite(const std::vector<double>& col, const std::string& name) {
    for (std::size_t i = 0; i < col.size(); ++i)
        if (!std::isfinite(col[i]))
            throw ValueError("non-finite value in column '" + name + "' at row " + std::to_string(i + 1));
}

}  // namespace detail

inline void check_folds(const std::vector<int>& fold_id, int num_folds) {
    const std::size_t n = fold_id.size();
    if (num_folds < 1) throw FoldError("fold count must be at least 1");
    if (n < 2 * static_cast<std::size_t>(num_folds))
        throw FoldError("need at least 2*J = " + std::to_string(2 * num_folds) + " rows, got " + std::to_string(n));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(num_folds), 0);
    for (int f : fold_id) {
        if (f < 0 || f >= num_folds) throw FoldError("fold label " + std::to_string(f + 1) + " outside 1.." + std::to_string(num_folds));
        ++sizes[static_cast<std::size_t>(f)];
    }
    for (std::size_t j = 0; j < sizes.size(); ++j)
        if (sizes[j] == 0) throw FoldError("fold " + std::to_string(j + 1) + " is empty");
}

inline Dataset validate_dataset(const Table& raw, const Schema& schema) {
    if (schema.outcome.empty()) throw SchemaError("schema does not name an outcome column");
    if (schema.treatment.empty()) throw SchemaError("schema does not name a treatment column");
    const auto& y = raw.column(schema.outcome);
    const auto& a = raw.column(schema.treatment);
    std::vector<const std::vector<double>*> w;
    for (const auto& c : schema.covariates) w.push_back(&raw.column(c));
    const std::vector<double>* fold_col = schema.fold ? &raw.column(*schema.fold) : nullptr;

    detail::require_finite(y, schema.outcome);
    detail::require_finite(a, schema.treatment);
    for (std::size_t j = 0; j < w.size(); ++j) detail::require_finite(*w[j], schema.covariates[j]);

    const std::size_t n = raw.rows();
    Dataset d;
    d.num_folds = schema.num_folds;
    d.covariate_names = schema.covariates;

    std::set<int> observed;
    for (std::size_t i = 0; i < n; ++i) {
        if (!detail::is_integer(a[i]))
            throw ValueError("treatment value " + std::to_string(a[i]) + " at row " + std::to_string(i + 1) + " is not an integer arm label");
        observed.insert(static_cast<int>(a[i]));
    }
    if (schema.arms) {
        std::set<int> declared(schema.arms->begin(), schema.arms->end());
        for (int v : observed)
            if (!declared.count(v)) throw ValueError("treatment value " + std::to_string(v) + " is outside the declared arm set");
        d.arm_labels.assign(declared.begin(), declared.end());
    } else {
        d.arm_labels.assign(observed.begin(), observed.end());
    }
    d.treatment.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.treatment[i] = d.arm_index(static_cast<int>(a[i]));

    double max_abs = 0.0;
    for (double v : y) max_abs = std::max(max_abs, std::abs(v));
    d.outcome_bound = schema.outcome_bound.value_or(max_abs);
    if (max_abs > d.outcome_bound)
        throw ValueError("outcome magnitude " + std::to_string(max_abs) + " exceeds declared bound " + std::to_string(d.outcome_bound));
    d.outcome = y;

    d.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(w.size()));
    for (std::size_t j = 0; j < w.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*w[j])[i];

    if (fold_col) {
        d.fold_id.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double f = (*fold_col)[i];
            if (!detail::is_integer(f) || f < 1 || f > schema.num_folds)
                throw FoldError("fold value " + std::to_string(f) + " at row " + std::to_string(i + 1) + " outside 1.." + std::to_string(schema.num_folds));
            d.fold_id[i] = static_cast<int>(f) - 1;
        }
    } else {
        if (n < 2 * static_cast<std::size_t>(std::max(schema.num_folds, 1)))
            throw FoldError("need at least 2*J rows for " + std::to_string(schema.num_folds) + " folds");
        Rng rng = Rng::stream(schema.seed, {0xf01d});
        d.fold_id = assign_folds(n, schema.num_folds, rng);
    }
    check_folds(d.fold_id, d.num_folds);
    return d;
}

// Inverse of validate_dataset: original arm labels and 1-based folds.
inline Table to_table(const Dataset& d, const std::string& outcome = "Y", const std::string& treatment = "A",
                      const std::string& fold = "fold") {
    Table t;
    const std::size_t n = d.size();
    t.add_column(outcome, d.outcome);
    std::vector<double> a(n), f(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = d.arm_labels[static_cast<std::size_t>(d.treatment[i])];
        f[i] = d.fold_id[i] + 1;
    }
    t.add_column(treatment, std::move(a));
    for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = d.covariates(static_cast<Eigen::Index>(i), j);
        t.add_column(d.covariate_names.at(static_cast<std::size_t>(j)), std::move(col));
    }
    t.add_column(fold, std::move(f));
    return t;
}

inline Schema schema_for(const Dataset& d, const std::string& outcome = "Y", const std::string& treatment = "A",
                         const std::string& fold = "fold") {
    Schema s;
    s.outcome = outcome;
    s.treatment = treatment;
    s.covariates = d.covariate_names;
    s.fold = fold;
    s.num_folds = d.num_folds;
    s.arms = d.arm_labels;
    s.outcome_bound = d.outcome_bound;
    return s;
}

enum class NuisanceSource { builtin_learner, external_columns };

// Out-of-fold nuisance predictions. Entry (i, a) of `mu` is mu_hat(a, W_i) and of
// `pi` is pi_hat(a | W_i), both from models that never saw fold(i).
struct NuisanceMatrix {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd pi;
    NuisanceSource source = NuisanceSource::builtin_learner;
};

inline constexpr double kPropensityRowSumTolerance = 1e-6;

inline void validate_nuisances(const NuisanceMatrix& nm, const Dataset& d) {
    const auto n = static_cast<Eigen::Index>(d.size());
    const auto k = static_cast<Eigen::Index>(d.num_arms());
    if (nm.mu.rows() != n || nm.mu.cols() != k || nm.pi.rows() != n || nm.pi.cols() != k)
        throw ValueError("nuisance matrix must be n x |arms|");
    const double bound = d.outcome_bound;
    for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) {
            const double p = nm.pi(i, a);
            const double m = nm.mu(i, a);
            if (!std::isfinite(p) || p <= 0.0 || p >= 1.0)
                throw ValueError("propensity at row " + std::to_string(i + 1) + " is outside (0,1)");
            if (!std::isfinite(m) || std::abs(m) > bound * (1.0 + 1e-12) + 1e-12)
                throw ValueError("outcome regression at row " + std::to_string(i + 1) + " exceeds the outcome bound");
            row += p;
        }
        if (std::abs(row - 1.0) > kPropensityRowSumTolerance)
            throw ValueError("propensities at row " + std::to_string(i + 1) + " do not sum to 1");
    }
}

// FNV-1a over the raw bytes of both matrices.
inline std::uint64_t fingerprint(const NuisanceMatrix& nm) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Eigen::MatrixXd& m) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
        const std::size_t len = static_cast<std::size_t>(m.size()) * sizeof(double);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(nm.mu);
    mix(nm.pi);
    return h;
}

enum class EstimatorKind { plugin, ipw, aipw, cdml, partial_cov };
enum class CiMethod { wald, bootstrap_normal, bootstrap_percentile };

inline const char* to_string(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::plugin: return "plugin";
        case EstimatorKind::ipw: return "ipw";
        case EstimatorKind::aipw: return "aipw";
        case EstimatorKind::cdml: return "cdml";
        case EstimatorKind::partial_cov: return "partial_cov";
    }
    return "?";
}

inline const char* to_string(CiMethod m) {
    switch (m) {
        case CiMethod::wald: return "wald";
        case CiMethod::bootstrap_normal: return "bootstrap_normal";
        case CiMethod::bootstrap_percentile: return "bootstrap_percentile";
    }
    return "?";
}

struct EstimateReport {
    double tau_hat = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double level = 0.95;
    EstimatorKind estimator = EstimatorKind::cdml;
    CiMethod ci_method = CiMethod::wald;
    std::size_t n_used = 0;
    Json config = Json::object();
    Json diagnostics = Json::object();
};

}  // namespace cdml
