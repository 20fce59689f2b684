#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bootstrap.hpp"
#include "calibration.hpp"
#include "core_data.hpp"
#include "crossfit.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "learners.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cdml {

// Which nuisance is estimated consistently.
enum class Scenario { both_consistent, only_propensity, only_outcome };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::both_consistent: return "a";
        case Scenario::only_propensity: return "b";
        case Scenario::only_outcome: return "c";
    }
    return "?";
}

inline Scenario parse_scenario(const std::string& s) {
    if (s == "a" || s == "both_consistent") return Scenario::both_consistent;
    if (s == "b" || s == "only_propensity") return Scenario::only_propensity;
    if (s == "c" || s == "only_outcome") return Scenario::only_outcome;
    throw ValueError("unknown scenario '" + s + "' (expected a, b or c)");
}

// ---------------------------------------------------------------------------
// Data-generating process: W1 ~ U(-2, 2), W2 ~ Bernoulli(1/2),
// A ~ Bernoulli(expit(-W1 + 2 W1 W2)), Y ~ Bernoulli(expit(0.2 A - W1 + 2 W1 W2)).
// ---------------------------------------------------------------------------

inline constexpr double kTreatmentEffect = 0.2;

inline double true_propensity(double w1, double w2) { return expit(-w1 + 2.0 * w1 * w2); }

inline double true_outcome_regression(double a, double w1, double w2, double effect = kTreatmentEffect) {
    return expit(effect * a - w1 + 2.0 * w1 * w2);
}

inline Dataset sample_dgp(std::size_t n, Rng& rng, int num_folds = 5) {
    if (n < 1) throw ValueError("sample_dgp: n must be positive");
    Dataset d;
    d.covariates.resize(static_cast<Eigen::Index>(n), 2);
    d.covariate_names = {"W1", "W2"};
    d.arm_labels = {0, 1};
    d.treatment.resize(n);
    d.outcome.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w1 = rng.uniform(-2.0, 2.0);
        const double w2 = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const int a = rng.bernoulli(true_propensity(w1, w2)) ? 1 : 0;
        const double y = rng.bernoulli(true_outcome_regression(a, w1, w2)) ? 1.0 : 0.0;
        d.covariates(static_cast<Eigen::Index>(i), 0) = w1;
        d.covariates(static_cast<Eigen::Index>(i), 1) = w2;
        d.treatment[i] = a;
        d.outcome[i] = y;
    }
    d.outcome_bound = 1.0;
    d.num_folds = num_folds;
    d.fold_id = assign_folds(n, num_folds, rng);
    return d;
}

// E[mu(1, W) - mu(0, W)]. For either value of W2 the linear predictor is
// +/-W1 plus the effect, so with W1 ~ U(-2, 2) the expectation integrates in
// closed form through the antiderivative log(1 + e^u).
inline double true_ate(double effect = kTreatmentEffect) {
    return 0.25 * ((softplus(2.0 + effect) - softplus(-2.0 + effect)) - (softplus(2.0) - softplus(-2.0)));
}

inline LearnerSpec learner_spec_for(Scenario s) {
    LearnerSpec spec;
    spec.kernel_feature = 0;
    spec.strata_features = {1};
    spec.cv_folds = 5;
    switch (s) {
        case Scenario::both_consistent:
            spec.outcome_model = LearnerKind::kernel_stratified;
            spec.propensity_model = LearnerKind::kernel_stratified;
            break;
        case Scenario::only_propensity:
            spec.outcome_model = LearnerKind::logistic_main_terms;
            spec.propensity_model = LearnerKind::kernel_stratified;
            break;
        case Scenario::only_outcome:
            spec.outcome_model = LearnerKind::kernel_stratified;
            spec.propensity_model = LearnerKind::logistic_main_terms;
            break;
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    Scenario scenario = Scenario::both_consistent;
    std::size_t n = 1000;
    int reps = 500;
    int folds = 5;
    int boot_reps = 1000;
    std::uint64_t seed = 1;
    double level = 0.95;
    int threads = 0;
};

inline Json to_json(const ScenarioConfig& c) {
    return Json{{"scenario", to_string(c.scenario)}, {"n", c.n},         {"reps", c.reps},   {"folds", c.folds},
                {"boot_reps", c.boot_reps},          {"seed", c.seed},   {"level", c.level}};
}

// Estimator labels in reporting order.
inline const std::vector<std::string>& simulation_estimators() {
    static const std::vector<std::string> names{"aipw", "cdml", "cdml_percentile", "cdml_wald"};
    return names;
}

struct ReplicateRow {
    int rep = 0;
    std::string estimator;
    double tau_hat = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    bool covered = false;
};

struct EstimatorMetrics {
    std::string estimator;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double se = 0.0;  // sd of the estimates across replicates
    double mean_se = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;
    int reps = 0;
};

struct MonteCarloResult {
    ScenarioConfig config;
    double tau_true = 0.0;
    std::vector<ReplicateRow> rows;  // replicate-major, estimators in simulation_estimators() order
    std::vector<EstimatorMetrics> metrics;
    int bootstrap_dropped = 0;

    const EstimatorMetrics& metric(const std::string& name) const {
        for (const auto& m : metrics)
            if (m.estimator == name) return m;
        throw ValueError("no metrics for estimator '" + name + "'");
    }
};

struct ReplicateOutcome {
    std::vector<ReplicateRow> rows;
    int bootstrap_dropped = 0;
};

inline ReplicateOutcome run_replicate(const ScenarioConfig& cfg, int rep, double tau_true) {
    const auto urep = static_cast<std::uint64_t>(rep);
    Rng data_rng = Rng::stream(cfg.seed, {0xda7a, urep});
    const Dataset data = sample_dgp(cfg.n, data_rng, cfg.folds);
    const auto spec = learner_spec_for(cfg.scenario);
    const NuisanceMatrix nuis = crossfit_nuisances(data, spec, splitmix64(cfg.seed ^ splitmix64(urep + 0xc5f1)), nullptr, 1);

    auto row = [&](const std::string& name, double tau, double se, Interval ci) {
        return ReplicateRow{rep, name, tau, se, ci.lower, ci.upper, ci.lower <= tau_true && tau_true <= ci.upper};
    };

    ReplicateOutcome out;
    const auto aipw = aipw_ate(data, nuis, 1, 0, true);
    const auto aipw_w = wald_ci(aipw.tau_hat, aipw.eif, cfg.level);
    out.rows.push_back(row("aipw", aipw.tau_hat, aipw_w.se, aipw_w.ci));

    BootstrapOptions bo;
    bo.replicates = cfg.boot_reps;
    bo.level = cfg.level;
    bo.seed = splitmix64(cfg.seed ^ splitmix64(urep + 0xb007));
    bo.threads = 1;
    const Target target{1, 0};
    const auto boot = bootstrap_ci(data, nuis, target, bo);
    out.bootstrap_dropped = boot.dropped;
    out.rows.push_back(row("cdml", boot.tau_hat, boot.sigma_hat, boot.normal_ci));
    out.rows.push_back(row("cdml_percentile", boot.tau_hat, boot.sigma_hat, boot.percentile_ci));

    const auto cal = calibrate_nuisances(data, nuis, {1, 0});
    const auto cd = ate_cdml(data, cal, 1, 0);
    const auto cd_w = wald_ci(cd.tau_hat, cd.eif, cfg.level);
    out.rows.push_back(row("cdml_wald", cd.tau_hat, cd_w.se, cd_w.ci));
    return out;
}

inline std::vector<EstimatorMetrics> aggregate_metrics(const std::vector<ReplicateRow>& rows, double tau_true) {
    std::vector<EstimatorMetrics> out;
    for (const auto& name : simulation_estimators()) {
        std::vector<const ReplicateRow*> sel;
        for (const auto& r : rows)
            if (r.estimator == name) sel.push_back(&r);
        if (sel.empty()) continue;
        EstimatorMetrics m;
        m.estimator = name;
        m.reps = static_cast<int>(sel.size());
        const double R = static_cast<double>(sel.size());
        double sum = 0.0, se_sum = 0.0, sq = 0.0;
        int covered = 0;
        for (const auto* r : sel) {
            sum += r->tau_hat;
            se_sum += r->se;
            sq += (r->tau_hat - tau_true) * (r->tau_hat - tau_true);
            covered += r->covered ? 1 : 0;
        }
        m.mean_estimate = sum / R;
        m.bias = m.mean_estimate - tau_true;
        double ss = 0.0;
        for (const auto* r : sel) ss += (r->tau_hat - m.mean_estimate) * (r->tau_hat - m.mean_estimate);
        m.se = sel.size() > 1 ? std::sqrt(ss / (R - 1.0)) : 0.0;
        m.mean_se = se_sum / R;
        m.rmse = std::sqrt(sq / R);
        m.coverage = covered / R;
        out.push_back(m);
    }
    return out;
}

inline MonteCarloResult run_experiment(const ScenarioConfig& cfg) {
    if (cfg.reps < 1) throw ValueError("reps must be at least 1");
    MonteCarloResult res;
    res.config = cfg;
    res.tau_true = true_ate();
    std::vector<ReplicateOutcome> per(static_cast<std::size_t>(cfg.reps));
    parallel_for(per.size(), cfg.threads, [&](std::size_t r) {
        try {
            per[r] = run_replicate(cfg, static_cast<int>(r), res.tau_true);
        } catch (const SimulationError&) {
            throw;
        } catch (const std::exception& e) {
            throw SimulationError(static_cast<int>(r), e.what());
        }
    });
    for (auto& p : per) {
        res.bootstrap_dropped += p.bootstrap_dropped;
        for (auto& row : p.rows) res.rows.push_back(std::move(row));
    }
    res.metrics = aggregate_metrics(res.rows, res.tau_true);
    return res;
}

// ---------------------------------------------------------------------------
// Linear-Gaussian design for the partial covariance:
// W ~ N(0,1), A = beta W + e_A, Y = gamma A + delta W + e_Y with unit-variance
// errors, so E[(A - E[A|W])(Y - E[Y|W])] = gamma * Var(e_A) = gamma.
// ---------------------------------------------------------------------------

struct PartialCovDesign {
    double beta = 0.8;
    double gamma = 0.5;
    double delta = 1.0;

    double true_partial_covariance() const { return gamma; }
};

struct PartialCovSample {
    std::vector<double> w;
    std::vector<double> exposure;
    std::vector<double> outcome;
    std::vector<int> fold_id;
};

inline PartialCovSample sample_partial_cov(const PartialCovDesign& design, std::size_t n, int num_folds, Rng& rng) {
    PartialCovSample s;
    s.w.resize(n);
    s.exposure.resize(n);
    s.outcome.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.w[i] = rng.normal();
        s.exposure[i] = design.beta * s.w[i] + rng.normal();
        s.outcome[i] = design.gamma * s.exposure[i] + design.delta * s.w[i] + rng.normal();
    }
    s.fold_id = assign_folds(n, num_folds, rng);
    return s;
}

// Cross-fitted kernel regressions of A and Y on W, then the calibrated cross-moment.
inline PartialCovarianceFit estimate_partial_covariance(const PartialCovSample& s, int num_folds, std::uint64_t seed,
                                                        const std::vector<double>& grid = {}, int cv_folds = 5,
                                                        int threads = 0) {
    std::vector<std::int64_t> strata(s.w.size(), 0);
    const auto pi_hat = crossfit_kernel_regression(s.w, s.exposure, strata, s.fold_id, num_folds, grid, cv_folds, splitmix64(seed ^ 1), threads);
    const auto m_hat = crossfit_kernel_regression(s.w, s.outcome, strata, s.fold_id, num_folds, grid, cv_folds, splitmix64(seed ^ 2), threads);
    return partial_covariance_cdml(s.exposure, s.outcome, m_hat, pi_hat);
}

}  // namespace cdml
