#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "core_data.hpp"
#include "errors.hpp"
#include "isotonic.hpp"

namespace cdml {

struct OutcomeCalibration {
    Calibrator calibrator;
    std::vector<double> calibrated;  // f_a(mu_hat(a, W_i)) for every row
};

struct PropensityCalibration {
    Calibrator calibrator;
    std::vector<double> calibrated;  // g_a(pi_hat(a | W_i)) for every row
    double trunc = 0.0;              // min calibrated propensity over rows with A_i = a
    std::vector<double> alpha;       // 1(A_i = a) / max(calibrated_i, trunc)
};

// Calibrated nuisances for the arms in `arms`; other columns stay zero.
struct CalibratedNuisances {
    std::vector<int> arms;
    Eigen::MatrixXd mu_star;
    Eigen::MatrixXd pi_star;
    Eigen::MatrixXd alpha_star;
    std::vector<Calibrator> outcome_calibrators;     // indexed by arm
    std::vector<Calibrator> propensity_calibrators;  // indexed by arm
    std::vector<double> trunc;                       // indexed by arm
};

// Sorted predictor designs for every calibration problem of a dataset, built
// once and refit under different row weights (unit weights for the estimate,
// resampling counts for bootstrap replicates).
class CalibrationPlan {
public:
    CalibrationPlan(const Dataset& data, const NuisanceMatrix& nuis, std::vector<int> arms, bool stratified_outcome = true)
        : data_(&data), nuis_(&nuis), arms_(std::move(arms)), stratified_(stratified_outcome) {
        const std::size_t n = data.size();
        const int k = data.num_arms();
        if (nuis.mu.rows() != static_cast<Eigen::Index>(n) || nuis.mu.cols() != k || nuis.pi.rows() != nuis.mu.rows() ||
            nuis.pi.cols() != k)
            throw ValueError("nuisance matrix does not match the dataset");
        outcome_rows_.resize(static_cast<std::size_t>(k));
        outcome_design_.resize(static_cast<std::size_t>(k));
        propensity_design_.resize(static_cast<std::size_t>(k));
        for (int a : arms_) {
            if (a < 0 || a >= k) throw ValueError("arm index out of range");
            auto& rows = outcome_rows_[static_cast<std::size_t>(a)];
            for (std::size_t i = 0; i < n; ++i)
                if (data.treatment[i] == a) rows.push_back(i);
            if (rows.empty())
                throw DegenerateArmError("no observation has arm " + std::to_string(data.arm_labels[static_cast<std::size_t>(a)]));
            if (stratified_) {
                std::vector<double> x(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) x[r] = nuis.mu(static_cast<Eigen::Index>(rows[r]), a);
                outcome_design_[static_cast<std::size_t>(a)] = SortedDesign(x);
            }
            std::vector<double> px(n);
            for (std::size_t i = 0; i < n; ++i) px[i] = nuis.pi(static_cast<Eigen::Index>(i), a);
            propensity_design_[static_cast<std::size_t>(a)] = SortedDesign(px);
        }
        if (!stratified_) {
            std::vector<double> x(n);
            for (std::size_t i = 0; i < n; ++i) x[i] = nuis.mu(static_cast<Eigen::Index>(i), data.treatment[i]);
            pooled_design_ = SortedDesign(x);
        }
        outcome_rank_.resize(static_cast<std::size_t>(k));
        for (int a : arms_) {
            const auto& design = stratified_ ? outcome_design_[static_cast<std::size_t>(a)] : pooled_design_;
            auto& rank = outcome_rank_[static_cast<std::size_t>(a)];
            rank.resize(n);
            for (std::size_t i = 0; i < n; ++i) rank[i] = design.rank(nuis.mu(static_cast<Eigen::Index>(i), a));
        }
    }

    const std::vector<int>& arms() const { return arms_; }

    // True when every planned arm has a positively weighted observation.
    bool arms_present(std::span<const double> weights) const {
        if (weights.empty()) return true;
        for (int a : arms_) {
            bool found = false;
            for (auto i : outcome_rows_[static_cast<std::size_t>(a)])
                if (weights[i] > 0.0) {
                    found = true;
                    break;
                }
            if (!found) return false;
        }
        return true;
    }

    Calibrator fit_outcome(int a, std::span<const double> weights = {}) const {
        const auto& d = *data_;
        if (!stratified_) return pooled_design_.fit_ls(d.outcome, weights);
        const auto& rows = outcome_rows_[static_cast<std::size_t>(a)];
        std::vector<double> y(rows.size()), w;
        if (!weights.empty()) w.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            y[r] = d.outcome[rows[r]];
            if (!weights.empty()) w[r] = weights[rows[r]];
        }
        return outcome_design_[static_cast<std::size_t>(a)].fit_ls(y, w);
    }

    Calibrator fit_propensity(int a, std::span<const double> weights = {}) const {
        const auto& d = *data_;
        std::vector<double> ind(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) ind[i] = d.treatment[i] == a ? 1.0 : 0.0;
        return propensity_design_[static_cast<std::size_t>(a)].fit_ls(ind, weights);
    }

    CalibratedNuisances fit(std::span<const double> weights = {}) const {
        const auto& d = *data_;
        const auto n = static_cast<Eigen::Index>(d.size());
        const int k = d.num_arms();
        CalibratedNuisances out;
        out.arms = arms_;
        out.mu_star = Eigen::MatrixXd::Zero(n, k);
        out.pi_star = Eigen::MatrixXd::Zero(n, k);
        out.alpha_star = Eigen::MatrixXd::Zero(n, k);
        out.outcome_calibrators.resize(static_cast<std::size_t>(k));
        out.propensity_calibrators.resize(static_cast<std::size_t>(k));
        out.trunc.assign(static_cast<std::size_t>(k), 0.0);
        std::optional<Calibrator> pooled;
        if (!stratified_) pooled = pooled_design_.fit_ls(d.outcome, weights);
        for (int a : arms_) {
            const auto ua = static_cast<std::size_t>(a);
            Calibrator f = pooled ? *pooled : fit_outcome(a, weights);
            Calibrator g = fit_propensity(a, weights);
            const auto& odesign = stratified_ ? outcome_design_[ua] : pooled_design_;
            const auto& pdesign = propensity_design_[ua];
            const auto& orank = outcome_rank_[ua];
            const auto f_at = odesign.at_groups(f);
            const auto g_at = pdesign.at_groups(g);
            double trunc = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                out.mu_star(i, a) = orank[ui] == 0 ? f.lower_clamp() : f_at[orank[ui] - 1];
                out.pi_star(i, a) = g_at[pdesign.group_of(ui)];
                const bool counted = weights.empty() || weights[static_cast<std::size_t>(i)] > 0.0;
                if (d.treatment[static_cast<std::size_t>(i)] == a && counted) trunc = std::min(trunc, out.pi_star(i, a));
            }
            if (!std::isfinite(trunc) || !(trunc > 0.0))
                throw DegenerateArmError("propensity truncation level for arm " + std::to_string(d.arm_labels[ua]) + " is not positive");
            for (Eigen::Index i = 0; i < n; ++i)
                out.alpha_star(i, a) = d.treatment[static_cast<std::size_t>(i)] == a ? 1.0 / std::max(out.pi_star(i, a), trunc) : 0.0;
            out.trunc[ua] = trunc;
            out.outcome_calibrators[ua] = std::move(f);
            out.propensity_calibrators[ua] = std::move(g);
        }
        return out;
    }

private:
    const Dataset* data_;
    const NuisanceMatrix* nuis_;
    std::vector<int> arms_;
    bool stratified_;
    std::vector<std::vector<std::size_t>> outcome_rows_;
    std::vector<SortedDesign> outcome_design_;
    std::vector<SortedDesign> propensity_design_;
    SortedDesign pooled_design_;
    std::vector<std::vector<std::size_t>> outcome_rank_;  // rank of mu_hat(a, W_i) in the outcome design
};

// Isotonic least squares of Y on mu_hat(a, .). Stratified: fit on rows with
// A_i = a only. Pooled: fit Y_i on mu_hat(A_i, W_i) over all rows.
inline OutcomeCalibration calibrate_outcome(const Dataset& data, const NuisanceMatrix& nuis, int arm, bool stratified = true) {
    CalibrationPlan plan(data, nuis, {arm}, stratified);
    OutcomeCalibration out;
    out.calibrator = plan.fit_outcome(arm);
    out.calibrated.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.calibrated[i] = out.calibrator(nuis.mu(static_cast<Eigen::Index>(i), arm));
    return out;
}

// Isotonic least squares of 1(A = a) on pi_hat(a | .) over all rows, with the
// min-over-arm truncation applied to the inverse weights.
inline PropensityCalibration calibrate_propensity(const Dataset& data, const NuisanceMatrix& nuis, int arm) {
    CalibrationPlan plan(data, nuis, {arm}, true);
    const auto cn = plan.fit();
    PropensityCalibration out;
    out.calibrator = cn.propensity_calibrators[static_cast<std::size_t>(arm)];
    out.trunc = cn.trunc[static_cast<std::size_t>(arm)];
    out.calibrated.resize(data.size());
    out.alpha.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.calibrated[i] = cn.pi_star(static_cast<Eigen::Index>(i), arm);
        out.alpha[i] = cn.alpha_star(static_cast<Eigen::Index>(i), arm);
    }
    return out;
}

inline CalibratedNuisances calibrate_nuisances(const Dataset& data, const NuisanceMatrix& nuis, std::vector<int> arms,
                                               bool stratified = true) {
    return CalibrationPlan(data, nuis, std::move(arms), stratified).fit();
}

// Direct Riesz-loss calibration: minimizes sum_i g(alpha_obs_i)^2 - 2 sum_i g(alpha_eval_i)
// over nondecreasing g with levels in [lo, hi]. For a counterfactual mean,
// alpha_obs_i = 1(A_i = a)/pi_hat_i and alpha_eval_i = 1/pi_hat_i.
inline Calibrator calibrate_riesz_generic(std::span<const double> alpha_obs, std::span<const double> alpha_eval, double lo, double hi) {
    if (!(lo < hi)) throw BoundsError("calibrate_riesz_generic: lower bound must be below upper bound");
    if (alpha_obs.size() != alpha_eval.size()) throw ValueError("calibrate_riesz_generic: vectors differ in length");
    std::vector<PointLoss> points;
    points.reserve(2 * alpha_obs.size());
    for (std::size_t i = 0; i < alpha_obs.size(); ++i) {
        points.push_back({alpha_obs[i], 1.0, 0.0});
        points.push_back({alpha_eval[i], 0.0, 1.0});
    }
    return fit_riesz_isotonic(points, lo, hi);
}

}  // namespace cdml
