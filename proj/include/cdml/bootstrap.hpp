#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "core_data.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cdml {

// Counterfactual mean of `arm1`, or the contrast arm1 - arm0 when arm0 is set.
struct Target {
    int arm1 = 1;
    std::optional<int> arm0;

    std::vector<int> arms() const {
        if (arm0) return {arm1, *arm0};
        return {arm1};
    }
};

inline EifEstimate cdml_estimate(const Dataset& data, const CalibratedNuisances& cal, const Target& t) {
    return t.arm0 ? ate_cdml(data, cal, t.arm1, *t.arm0) : counterfactual_mean_cdml(data, cal, t.arm1);
}

struct BootstrapOptions {
    int replicates = 10000;
    double level = 0.95;
    std::uint64_t seed = 0;
    bool stratified_outcome = true;
    int threads = 0;
    double max_drop_fraction = 0.01;
};

struct BootstrapResult {
    double tau_hat = 0.0;
    std::vector<double> replicate_estimates;  // kept replicates, in replicate order
    double sigma_hat = 0.0;
    Interval normal_ci;
    Interval percentile_ci;
    int requested = 0;
    int dropped = 0;
    double level = 0.95;
    std::uint64_t nuisance_fingerprint = 0;
};

// Type-7 (linear interpolation) empirical quantile of sorted data.
inline double quantile_type7(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw ValueError("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Resampling counts for one replicate: |C_s| draws with replacement inside
// each fold, so every fold keeps its size.
inline std::vector<double> within_fold_counts(const std::vector<std::vector<std::size_t>>& fold_rows, std::size_t n, Rng& rng) {
    std::vector<double> counts(n, 0.0);
    for (const auto& rows : fold_rows)
        for (std::size_t m = 0; m < rows.size(); ++m) counts[rows[rng.index(rows.size())]] += 1.0;
    return counts;
}

// Holds the cross-fitted nuisances fixed and refits only the isotonic
// calibrators on each within-fold bootstrap resample.
inline BootstrapResult bootstrap_ci(const Dataset& data, const NuisanceMatrix& nuis, const Target& target,
                                    const BootstrapOptions& opt) {
    if (opt.replicates < 100) throw ValueError("bootstrap needs at least 100 replicates");
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw ValueError("confidence level must lie in (0, 1)");

    const std::size_t n = data.size();
    CalibrationPlan plan(data, nuis, target.arms(), opt.stratified_outcome);
    BootstrapResult res;
    res.level = opt.level;
    res.requested = opt.replicates;
    res.nuisance_fingerprint = fingerprint(nuis);
    res.tau_hat = cdml_estimate(data, plan.fit(), target).tau_hat;

    std::vector<std::vector<std::size_t>> fold_rows(static_cast<std::size_t>(data.num_folds));
    for (std::size_t i = 0; i < n; ++i) fold_rows[static_cast<std::size_t>(data.fold_id[i])].push_back(i);

    std::vector<double> reps(static_cast<std::size_t>(opt.replicates), std::numeric_limits<double>::quiet_NaN());
    parallel_for(reps.size(), opt.threads, [&](std::size_t k) {
        Rng rng = Rng::stream(opt.seed, {0xb0075747ULL, k});
        const auto counts = within_fold_counts(fold_rows, n, rng);
        if (!plan.arms_present(counts)) return;  // degenerate: an arm is missing
        const auto cal = plan.fit(counts);
        double v = counterfactual_mean_cdml_weighted(data, cal, target.arm1, counts);
        if (target.arm0) v -= counterfactual_mean_cdml_weighted(data, cal, *target.arm0, counts);
        reps[k] = v;
    });

    for (double v : reps) {
        if (std::isnan(v)) ++res.dropped;
        else res.replicate_estimates.push_back(v);
    }
    if (static_cast<double>(res.dropped) > opt.max_drop_fraction * opt.replicates)
        throw BootstrapError(std::to_string(res.dropped) + " of " + std::to_string(opt.replicates) +
                             " bootstrap replicates lacked a target arm");

    const auto& kept = res.replicate_estimates;
    const double K = static_cast<double>(kept.size());
    // Shifted accumulation: identical replicates give an exact zero spread.
    const double shift = kept.front();
    double acc = 0.0;
    for (double v : kept) acc += v - shift;
    const double mean = shift + acc / K;
    double ss = 0.0;
    for (double v : kept) ss += (v - mean) * (v - mean);
    res.sigma_hat = std::sqrt(ss / K);

    const double z = normal_critical_value(opt.level);
    res.normal_ci = {res.tau_hat - z * res.sigma_hat, res.tau_hat + z * res.sigma_hat};

    std::vector<double> centered(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) centered[i] = kept[i] - mean;
    std::sort(centered.begin(), centered.end());
    const double rho = 1.0 - opt.level;
    res.percentile_ci = {res.tau_hat - quantile_type7(centered, 1.0 - rho / 2.0), res.tau_hat - quantile_type7(centered, rho / 2.0)};
    return res;
}

}  // namespace cdml
