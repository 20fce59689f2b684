#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bootstrap.hpp"
#include "calibration.hpp"
#include "core_data.hpp"
#include "errors.hpp"
#include "estimators.hpp"

namespace cdml {

inline constexpr const char* kWaldCdmlCaveat = "valid only if both nuisances consistent";

// Everything needed to turn (data, cross-fitted nuisances) into a report.
struct EstimatorConfig {
    EstimatorKind estimator = EstimatorKind::cdml;
    CiMethod ci_method = CiMethod::bootstrap_normal;
    Target target{1, 0};  // dense arm indices
    double level = 0.95;
    bool aipw_truncation = true;
    bool stratified_outcome = true;
    int boot_reps = 10000;
    std::uint64_t seed = 0;
    int threads = 0;
};

inline Json to_json(const EstimatorConfig& c, const Dataset& d) {
    Json arms = Json::array({d.arm_labels.at(static_cast<std::size_t>(c.target.arm1))});
    if (c.target.arm0) arms.push_back(d.arm_labels.at(static_cast<std::size_t>(*c.target.arm0)));
    return Json{{"estimator", to_string(c.estimator)},
                {"ci_method", to_string(c.ci_method)},
                {"target_arms", arms},
                {"level", c.level},
                {"aipw_truncation", c.aipw_truncation},
                {"outcome_calibration", c.stratified_outcome ? "stratified" : "pooled"},
                {"boot_reps", c.boot_reps},
                {"seed", c.seed},
                {"folds", d.num_folds}};
}

struct EstimateResult {
    EstimateReport report;
    std::optional<BootstrapResult> bootstrap;
};

inline void check_config(const EstimatorConfig& c, const Dataset& d) {
    if (!(c.level > 0.0 && c.level < 1.0)) throw ValueError("confidence level must lie in (0, 1)");
    for (int a : c.target.arms())
        if (a < 0 || a >= d.num_arms()) throw ValueError("target arm is not in the arm set");
    if (c.target.arm0 && *c.target.arm0 == c.target.arm1) throw ValueError("an ATE needs two distinct arms");
    if (c.estimator == EstimatorKind::partial_cov) throw ValueError("partial_cov is estimated from an exposure column, not arms");
    if (c.ci_method != CiMethod::wald && c.estimator != EstimatorKind::cdml)
        throw ValueError("bootstrap intervals are only defined for the cdml estimator");
}

inline EstimateResult run_estimate(const Dataset& data, const NuisanceMatrix& nuis, const EstimatorConfig& cfg) {
    check_config(cfg, data);
    validate_nuisances(nuis, data);

    EstimateResult out;
    auto& r = out.report;
    r.estimator = cfg.estimator;
    r.ci_method = cfg.ci_method;
    r.level = cfg.level;
    r.n_used = data.size();
    r.config = to_json(cfg, data);
    r.config["nuisance_source"] = nuis.source == NuisanceSource::external_columns ? "external" : "learner";
    Json& diag = r.diagnostics;

    const int a1 = cfg.target.arm1;
    const auto a0 = cfg.target.arm0;
    auto set_wald = [&](const EifEstimate& e) {
        const auto w = wald_ci(e.tau_hat, e.eif, cfg.level);
        r.tau_hat = e.tau_hat;
        r.se = w.se;
        r.ci_lower = w.ci.lower;
        r.ci_upper = w.ci.upper;
    };

    switch (cfg.estimator) {
        case EstimatorKind::plugin:
            set_wald(a0 ? detail::difference(plugin_with_eif(nuis.mu, a1), plugin_with_eif(nuis.mu, *a0)) : plugin_with_eif(nuis.mu, a1));
            diag["note"] = "plug-in interval ignores first-order nuisance bias";
            break;
        case EstimatorKind::ipw:
        case EstimatorKind::aipw: {
            if (cfg.aipw_truncation) diag["c_n"] = aipw_truncation_level(data.size());
            const bool ipw = cfg.estimator == EstimatorKind::ipw;
            auto one = [&](int a) { return ipw ? ipw_with_eif(data, nuis, a, cfg.aipw_truncation) : aipw_estimate(data, nuis, a, cfg.aipw_truncation); };
            set_wald(a0 ? detail::difference(one(a1), one(*a0)) : one(a1));
            break;
        }
        case EstimatorKind::cdml: {
            const auto cal = calibrate_nuisances(data, nuis, cfg.target.arms(), cfg.stratified_outcome);
            Json trunc = Json::object(), levels = Json::object();
            for (int a : cfg.target.arms()) {
                const auto key = std::to_string(data.arm_labels[static_cast<std::size_t>(a)]);
                trunc[key] = cal.trunc[static_cast<std::size_t>(a)];
                levels[key] = {{"outcome", cal.outcome_calibrators[static_cast<std::size_t>(a)].distinct_levels()},
                               {"propensity", cal.propensity_calibrators[static_cast<std::size_t>(a)].distinct_levels()}};
            }
            diag["propensity_truncation"] = trunc;
            diag["calibrator_levels"] = levels;
            if (cfg.ci_method == CiMethod::wald) {
                set_wald(cdml_estimate(data, cal, cfg.target));
                diag["caveat"] = kWaldCdmlCaveat;
                break;
            }
            BootstrapOptions bo;
            bo.replicates = cfg.boot_reps;
            bo.level = cfg.level;
            bo.seed = cfg.seed;
            bo.stratified_outcome = cfg.stratified_outcome;
            bo.threads = cfg.threads;
            auto boot = bootstrap_ci(data, nuis, cfg.target, bo);
            const auto& ci = cfg.ci_method == CiMethod::bootstrap_percentile ? boot.percentile_ci : boot.normal_ci;
            r.tau_hat = boot.tau_hat;
            r.se = boot.sigma_hat;
            r.ci_lower = ci.lower;
            r.ci_upper = ci.upper;
            diag["bootstrap"] = {{"requested", boot.requested},
                                 {"kept", boot.replicate_estimates.size()},
                                 {"dropped", boot.dropped},
                                 {"sigma_hat", boot.sigma_hat}};
            out.bootstrap = std::move(boot);
            break;
        }
        case EstimatorKind::partial_cov: break;
    }
    return out;
}

// Partial covariance from an exposure column and supplied regressions.
inline EstimateReport run_partial_covariance(std::span<const double> exposure, std::span<const double> outcome,
                                             std::span<const double> m_hat, std::span<const double> pi_hat, double level) {
    const auto fit = partial_covariance_cdml(exposure, outcome, m_hat, pi_hat);
    const auto w = wald_ci(fit.estimate.tau_hat, fit.estimate.eif, level);
    EstimateReport r;
    r.estimator = EstimatorKind::partial_cov;
    r.ci_method = CiMethod::wald;
    r.level = level;
    r.n_used = exposure.size();
    r.tau_hat = fit.estimate.tau_hat;
    r.se = w.se;
    r.ci_lower = w.ci.lower;
    r.ci_upper = w.ci.upper;
    r.diagnostics["calibrator_levels"] = {{"exposure", fit.exposure_calibrator.distinct_levels()},
                                          {"outcome", fit.outcome_calibrator.distinct_levels()}};
    return r;
}

}  // namespace cdml
