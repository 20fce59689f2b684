#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "calibration.hpp"
#include "core_data.hpp"
#include "errors.hpp"
#include "isotonic.hpp"

namespace cdml {

// Point estimate with its per-observation centered influence values.
struct EifEstimate {
    double tau_hat = 0.0;
    std::vector<double> eif;
};

namespace detail {

inline EifEstimate centered(std::vector<double> terms) {
    EifEstimate out;
    double sum = 0.0;
    for (double t : terms) sum += t;
    out.tau_hat = sum / static_cast<double>(terms.size());
    for (double& t : terms) t -= out.tau_hat;
    out.eif = std::move(terms);
    return out;
}

inline EifEstimate difference(const EifEstimate& a, const EifEstimate& b) {
    EifEstimate out;
    out.tau_hat = a.tau_hat - b.tau_hat;
    out.eif.resize(a.eif.size());
    for (std::size_t i = 0; i < a.eif.size(); ++i) out.eif[i] = a.eif[i] - b.eif[i];
    return out;
}

inline void require_calibrated(const CalibratedNuisances& cal, int arm) {
    if (std::find(cal.arms.begin(), cal.arms.end(), arm) == cal.arms.end())
        throw ValueError("arm index " + std::to_string(arm) + " was not calibrated");
}

}  // namespace detail

// (1/n) sum_i [mu*(a, W_i) + alpha*_i (Y_i - mu*(a, W_i))].
inline EifEstimate counterfactual_mean_cdml(const Dataset& data, const CalibratedNuisances& cal, int arm) {
    detail::require_calibrated(cal, arm);
    std::vector<double> terms(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double m = cal.mu_star(r, arm);
        terms[i] = m + cal.alpha_star(r, arm) * (data.outcome[i] - m);
    }
    return detail::centered(std::move(terms));
}

inline EifEstimate ate_cdml(const Dataset& data, const CalibratedNuisances& cal, int arm1, int arm0) {
    return detail::difference(counterfactual_mean_cdml(data, cal, arm1), counterfactual_mean_cdml(data, cal, arm0));
}

// Weighted form used by bootstrap replicates: rows enter with their resampling counts.
inline double counterfactual_mean_cdml_weighted(const Dataset& data, const CalibratedNuisances& cal, int arm,
                                                std::span<const double> weights) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double c = weights[i];
        if (c == 0.0) continue;
        const auto r = static_cast<Eigen::Index>(i);
        const double m = cal.mu_star(r, arm);
        num += c * (m + cal.alpha_star(r, arm) * (data.outcome[i] - m));
        den += c;
    }
    return num / den;
}

inline double plugin_estimate(const Eigen::MatrixXd& mu, int arm) { return mu.col(arm).mean(); }
inline double plugin_estimate(const NuisanceMatrix& nuis, int arm) { return plugin_estimate(nuis.mu, arm); }
inline double plugin_estimate(const CalibratedNuisances& cal, int arm) { return plugin_estimate(cal.mu_star, arm); }

// Plug-in values mu(a, W_i) - tau; a naive variance proxy only.
inline EifEstimate plugin_with_eif(const Eigen::MatrixXd& mu, int arm) {
    std::vector<double> terms(static_cast<std::size_t>(mu.rows()));
    for (Eigen::Index i = 0; i < mu.rows(); ++i) terms[static_cast<std::size_t>(i)] = mu(i, arm);
    return detail::centered(std::move(terms));
}

// c_n = 25 / (sqrt(n) log n), the propensity clipping level of the IPW/AIPW comparators.
inline double aipw_truncation_level(std::size_t n) {
    if (n < 2) throw ValueError("truncation rule needs n >= 2");
    const double nd = static_cast<double>(n);
    const double c = 25.0 / (std::sqrt(nd) * std::log(nd));
    if (!(c < 0.5)) throw ValueError("truncation level c_n = " + std::to_string(c) + " is not below 0.5 for n = " + std::to_string(n));
    return c;
}

namespace detail {

inline double clipped_propensity(double p, bool truncate, double c) { return truncate ? std::clamp(p, c, 1.0 - c) : p; }

}  // namespace detail

inline EifEstimate ipw_with_eif(const Dataset& data, const NuisanceMatrix& nuis, int arm, bool truncate = true) {
    const double c = truncate ? aipw_truncation_level(data.size()) : 0.0;
    std::vector<double> terms(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = detail::clipped_propensity(nuis.pi(static_cast<Eigen::Index>(i), arm), truncate, c);
        terms[i] = data.treatment[i] == arm ? data.outcome[i] / p : 0.0;
    }
    return detail::centered(std::move(terms));
}

inline double ipw_estimate(const Dataset& data, const NuisanceMatrix& nuis, int arm, bool truncate = true) {
    return ipw_with_eif(data, nuis, arm, truncate).tau_hat;
}

// One-step estimator with uncalibrated nuisances and c_n-clipped propensities.
inline EifEstimate aipw_estimate(const Dataset& data, const NuisanceMatrix& nuis, int arm, bool truncate = true) {
    const double c = truncate ? aipw_truncation_level(data.size()) : 0.0;
    std::vector<double> terms(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double m = nuis.mu(r, arm);
        const double alpha = data.treatment[i] == arm ? 1.0 / detail::clipped_propensity(nuis.pi(r, arm), truncate, c) : 0.0;
        terms[i] = m + alpha * (data.outcome[i] - m);
    }
    return detail::centered(std::move(terms));
}

inline EifEstimate aipw_ate(const Dataset& data, const NuisanceMatrix& nuis, int arm1, int arm0, bool truncate = true) {
    return detail::difference(aipw_estimate(data, nuis, arm1, truncate), aipw_estimate(data, nuis, arm0, truncate));
}

inline EifEstimate ipw_ate(const Dataset& data, const NuisanceMatrix& nuis, int arm1, int arm0, bool truncate = true) {
    return detail::difference(ipw_with_eif(data, nuis, arm1, truncate), ipw_with_eif(data, nuis, arm0, truncate));
}

// Two-sided critical value z_{1 - (1 - level)/2}.
inline double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValueError("confidence level must lie in (0, 1)");
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, 1.0 - (1.0 - level) / 2.0);
}

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct WaldResult {
    double se = 0.0;
    Interval ci;
};

// se = sd(eif) / sqrt(n) with the n-1 sample variance.
inline WaldResult wald_ci(double tau_hat, std::span<const double> eif, double level) {
    const std::size_t n = eif.size();
    if (n < 2) throw ValueError("wald_ci needs at least two influence values");
    double mean = 0.0;
    for (double v : eif) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : eif) ss += (v - mean) * (v - mean);
    WaldResult out;
    out.se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    const double z = normal_critical_value(level);
    out.ci = {tau_hat - z * out.se, tau_hat + z * out.se};
    return out;
}

struct PartialCovarianceFit {
    EifEstimate estimate;
    Calibrator exposure_calibrator;  // applied to pi_hat(W) = E[A | W]
    Calibrator outcome_calibrator;   // applied to m_hat(W) = E[Y | W]
};

// (1/n) sum_i (A_i - pi*(W_i)) (Y_i - m*(W_i)) with both regressions isotonic
// calibrated against their own targets.
inline PartialCovarianceFit partial_covariance_cdml(std::span<const double> exposure, std::span<const double> outcome,
                                                    std::span<const double> m_hat, std::span<const double> pi_hat) {
    const std::size_t n = exposure.size();
    if (outcome.size() != n || m_hat.size() != n || pi_hat.size() != n)
        throw ValueError("partial_covariance_cdml: inputs differ in length");
    PartialCovarianceFit fit;
    fit.exposure_calibrator = fit_ls_isotonic(pi_hat, exposure);
    fit.outcome_calibrator = fit_ls_isotonic(m_hat, outcome);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i)
        terms[i] = (exposure[i] - fit.exposure_calibrator(pi_hat[i])) * (outcome[i] - fit.outcome_calibrator(m_hat[i]));
    fit.estimate = detail::centered(std::move(terms));
    return fit;
}

}  // namespace cdml
