#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core_data.hpp"
#include "errors.hpp"
#include "learners.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cdml {

enum class LearnerKind { kernel_stratified, logistic_main_terms, external };

inline const char* to_string(LearnerKind k) {
    switch (k) {
        case LearnerKind::kernel_stratified: return "kernel_stratified";
        case LearnerKind::logistic_main_terms: return "logistic_main_terms";
        case LearnerKind::external: return "external";
    }
    return "?";
}

// Kernel learners smooth over covariate `kernel_feature` within strata formed
// by the discrete covariates `strata_features`; the outcome model additionally
// stratifies by arm. Logistic learners use all covariates as main terms.
struct LearnerSpec {
    LearnerKind outcome_model = LearnerKind::kernel_stratified;
    LearnerKind propensity_model = LearnerKind::kernel_stratified;
    std::vector<double> bandwidth_grid;  // empty: default grid from the training data
    int cv_folds = 5;
    int kernel_feature = 0;
    std::vector<int> strata_features;
};

inline Json to_json(const LearnerSpec& s) {
    return Json{{"outcome_model", to_string(s.outcome_model)},
                {"propensity_model", to_string(s.propensity_model)},
                {"bandwidth_grid", s.bandwidth_grid},
                {"cv_folds", s.cv_folds},
                {"kernel_feature", s.kernel_feature},
                {"strata_features", s.strata_features}};
}

inline constexpr double kPropensityFloor = 1e-12;

namespace detail {

// Dense ids for tuples of discrete values.
class StrataEncoder {
public:
    std::int64_t encode(const std::vector<double>& key) {
        auto [it, inserted] = ids_.try_emplace(key, static_cast<std::int64_t>(ids_.size()));
        return it->second;
    }

private:
    std::map<std::vector<double>, std::int64_t> ids_;
};

inline std::vector<double> strata_key(const Dataset& d, std::size_t i, const std::vector<int>& features) {
    std::vector<double> key;
    key.reserve(features.size() + 1);
    for (int f : features) key.push_back(d.covariates(static_cast<Eigen::Index>(i), f));
    return key;
}

inline Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

// Main-terms design for the outcome model: arm dummies (arms 1..k-1) then W.
inline Eigen::MatrixXd outcome_design(const Dataset& d, const std::vector<std::size_t>& rows, std::optional<int> fixed_arm) {
    const int k = d.num_arms();
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), (k - 1) + d.covariates.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        const int arm = fixed_arm ? *fixed_arm : d.treatment[rows[r]];
        if (arm > 0) X(ri, arm - 1) = 1.0;
        X.row(ri).tail(d.covariates.cols()) = d.covariates.row(static_cast<Eigen::Index>(rows[r]));
    }
    return X;
}

inline void check_kernel_features(const Dataset& d, const LearnerSpec& spec) {
    const auto p = static_cast<int>(d.covariates.cols());
    if (spec.kernel_feature < 0 || spec.kernel_feature >= p)
        throw LearnerError("kernel learner: kernel_feature " + std::to_string(spec.kernel_feature) + " is not a covariate index");
    for (int f : spec.strata_features)
        if (f < 0 || f >= p) throw LearnerError("kernel learner: strata feature " + std::to_string(f) + " is not a covariate index");
}

}  // namespace detail

// Fills each fold's rows with predictions from learners trained on the other
// folds. Models marked `external` copy the corresponding matrix from `external`.
inline NuisanceMatrix crossfit_nuisances(const Dataset& data, const LearnerSpec& spec, std::uint64_t seed,
                                         const NuisanceMatrix* external = nullptr, int threads = 0) {
    const std::size_t n = data.size();
    const int k = data.num_arms();
    const int J = data.num_folds;
    const bool ext_mu = spec.outcome_model == LearnerKind::external;
    const bool ext_pi = spec.propensity_model == LearnerKind::external;
    if ((ext_mu || ext_pi) && external == nullptr)
        throw SchemaError("external nuisance model requested but no nuisance columns were supplied");
    if (k < 1) throw ValueError("dataset has no arms");
    if (!ext_mu && !ext_pi && J < 2) throw FoldError("cross-fitting needs at least 2 folds");

    NuisanceMatrix nm;
    nm.mu = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
    nm.pi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
    nm.source = (ext_mu && ext_pi) ? NuisanceSource::external_columns : NuisanceSource::builtin_learner;
    if (ext_mu) nm.mu = external->mu;
    if (ext_pi) nm.pi = external->pi;
    if (ext_mu && ext_pi) {
        validate_nuisances(nm, data);
        return nm;
    }

    const bool kernel_mu = spec.outcome_model == LearnerKind::kernel_stratified;
    const bool kernel_pi = spec.propensity_model == LearnerKind::kernel_stratified;
    if (kernel_mu || kernel_pi) detail::check_kernel_features(data, spec);
    if (spec.outcome_model == LearnerKind::logistic_main_terms)
        for (double y : data.outcome)
            if (y < 0.0 || y > 1.0) throw LearnerError("logistic outcome model requires outcomes in [0, 1]");

    // Strata ids over the full sample so that training and prediction agree.
    // Outcome strata are (arm, strata features); predictions for arm a use (a, ...).
    detail::StrataEncoder enc;
    std::vector<std::int64_t> pi_strata(n);
    std::vector<std::vector<std::int64_t>> mu_strata(static_cast<std::size_t>(k), std::vector<std::int64_t>(n));
    std::vector<double> kx(n);
    if (kernel_mu || kernel_pi) {
        for (std::size_t i = 0; i < n; ++i) {
            kx[i] = data.covariates(static_cast<Eigen::Index>(i), spec.kernel_feature);
            auto key = detail::strata_key(data, i, spec.strata_features);
            pi_strata[i] = enc.encode(key);
            key.insert(key.begin(), -1.0);
            for (int a = 0; a < k; ++a) {
                key[0] = a;
                mu_strata[static_cast<std::size_t>(a)][i] = enc.encode(key);
            }
        }
    }

    std::vector<std::vector<std::size_t>> test_rows(static_cast<std::size_t>(J)), train_rows(static_cast<std::size_t>(J));
    for (std::size_t i = 0; i < n; ++i)
        for (int s = 0; s < J; ++s) (data.fold_id[i] == s ? test_rows : train_rows)[static_cast<std::size_t>(s)].push_back(i);

    for (int s = 0; s < J; ++s) {
        std::vector<int> seen(static_cast<std::size_t>(k), 0);
        for (auto i : train_rows[static_cast<std::size_t>(s)]) seen[static_cast<std::size_t>(data.treatment[i])] = 1;
        for (int a = 0; a < k; ++a)
            if (!seen[static_cast<std::size_t>(a)])
                throw DegenerateFoldError("training complement of fold " + std::to_string(s + 1) + " has no observation with arm " +
                                          std::to_string(data.arm_labels[static_cast<std::size_t>(a)]));
    }

    parallel_for(static_cast<std::size_t>(J), threads, [&](std::size_t s) {
        const auto& train = train_rows[s];
        const auto& test = test_rows[s];
        std::vector<double> ty(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) ty[r] = data.outcome[train[r]];

        if (!ext_mu) {
            if (kernel_mu) {
                Rng rng = Rng::stream(seed, {s, 1});
                std::vector<double> tx(train.size());
                std::vector<std::int64_t> ts(train.size());
                for (std::size_t r = 0; r < train.size(); ++r) {
                    tx[r] = kx[train[r]];
                    ts[r] = mu_strata[static_cast<std::size_t>(data.treatment[train[r]])][train[r]];
                }
                const auto fit = fit_kernel_stratified(tx, ty, ts, spec.bandwidth_grid, spec.cv_folds, rng);
                std::vector<double> qx(test.size());
                std::vector<std::int64_t> qs(test.size());
                for (int a = 0; a < k; ++a) {
                    for (std::size_t r = 0; r < test.size(); ++r) {
                        qx[r] = kx[test[r]];
                        qs[r] = mu_strata[static_cast<std::size_t>(a)][test[r]];
                    }
                    const auto pred = predict_kernel(fit, qx, qs);
                    for (std::size_t r = 0; r < test.size(); ++r) nm.mu(static_cast<Eigen::Index>(test[r]), a) = pred[r];
                }
            } else {
                const auto fit = fit_logistic_main_terms(detail::outcome_design(data, train, std::nullopt), ty);
                for (int a = 0; a < k; ++a) {
                    const auto pred = predict_logistic(fit, detail::outcome_design(data, test, a));
                    for (std::size_t r = 0; r < test.size(); ++r) nm.mu(static_cast<Eigen::Index>(test[r]), a) = pred[r];
                }
            }
        }

        if (!ext_pi) {
            // Binary treatment: model arm 1 and take the complement for arm 0.
            const int first_modeled = k == 2 ? 1 : 0;
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(test.size()), k);
            const Eigen::MatrixXd Wtrain = kernel_pi ? Eigen::MatrixXd() : detail::rows_of(data.covariates, train);
            const Eigen::MatrixXd Wtest = kernel_pi ? Eigen::MatrixXd() : detail::rows_of(data.covariates, test);
            for (int a = first_modeled; a < k; ++a) {
                std::vector<double> ind(train.size());
                for (std::size_t r = 0; r < train.size(); ++r) ind[r] = data.treatment[train[r]] == a ? 1.0 : 0.0;
                std::vector<double> pred;
                if (kernel_pi) {
                    Rng rng = Rng::stream(seed, {s, 2, static_cast<std::uint64_t>(a)});
                    std::vector<double> tx(train.size()), qx(test.size());
                    std::vector<std::int64_t> ts(train.size()), qs(test.size());
                    for (std::size_t r = 0; r < train.size(); ++r) {
                        tx[r] = kx[train[r]];
                        ts[r] = pi_strata[train[r]];
                    }
                    for (std::size_t r = 0; r < test.size(); ++r) {
                        qx[r] = kx[test[r]];
                        qs[r] = pi_strata[test[r]];
                    }
                    const auto fit = fit_kernel_stratified(tx, ind, ts, spec.bandwidth_grid, spec.cv_folds, rng);
                    pred = predict_kernel(fit, qx, qs);
                } else {
                    pred = predict_logistic(fit_logistic_main_terms(Wtrain, ind), Wtest);
                }
                for (std::size_t r = 0; r < test.size(); ++r) block(static_cast<Eigen::Index>(r), a) = pred[r];
            }
            for (Eigen::Index r = 0; r < block.rows(); ++r) {
                if (k == 2) {
                    block(r, 0) = 1.0 - block(r, 1);
                } else if (k > 2) {
                    const double total = block.row(r).sum();
                    if (total > 0.0) block.row(r) /= total;
                    else block.row(r).setConstant(1.0 / k);
                } else {
                    block(r, 0) = 1.0;
                }
                for (int a = 0; a < k; ++a)
                    block(r, a) = std::clamp(block(r, a), kPropensityFloor, 1.0 - kPropensityFloor);
                nm.pi.row(static_cast<Eigen::Index>(test[static_cast<std::size_t>(r)])) = block.row(r);
            }
        }
    });
    return nm;
}

// Out-of-fold kernel regression of `target` on `x` within `strata`, used for
// the partial-covariance nuisances E[Y|W] and E[A|W].
inline std::vector<double> crossfit_kernel_regression(std::span<const double> x, std::span<const double> target,
                                                      std::span<const std::int64_t> strata, std::span<const int> fold_id,
                                                      int num_folds, const std::vector<double>& grid, int cv_folds,
                                                      std::uint64_t seed, int threads = 0) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    parallel_for(static_cast<std::size_t>(num_folds), threads, [&](std::size_t s) {
        std::vector<double> tx, ty, qx;
        std::vector<std::int64_t> ts, qs;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold_id[i] == static_cast<int>(s)) {
                test.push_back(i);
                qx.push_back(x[i]);
                qs.push_back(strata[i]);
            } else {
                tx.push_back(x[i]);
                ty.push_back(target[i]);
                ts.push_back(strata[i]);
            }
        }
        Rng rng = Rng::stream(seed, {s, 3});
        const auto fit = fit_kernel_stratified(tx, ty, ts, grid, cv_folds, rng);
        const auto pred = predict_kernel(fit, qx, qs);
        for (std::size_t r = 0; r < test.size(); ++r) out[test[r]] = pred[r];
    });
    return out;
}

}  // namespace cdml
