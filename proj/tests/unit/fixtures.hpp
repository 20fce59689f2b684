#pragma once

#include <cdml/cdml.hpp>

#include <vector>

namespace fixtures {

// Dataset from explicit columns; arms {0, 1}, folds 1..J round-robin.
inline cdml::Dataset make_dataset(const std::vector<int>& a, const std::vector<double>& y, int folds = 2,
                                  std::vector<int> arm_labels = {0, 1}) {
    cdml::Dataset d;
    const std::size_t n = y.size();
    d.covariates = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 1);
    d.covariate_names = {"W"};
    d.arm_labels = std::move(arm_labels);
    d.treatment = a;
    d.outcome = y;
    d.num_folds = folds;
    d.fold_id.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.fold_id[i] = static_cast<int>(i % static_cast<std::size_t>(folds));
    double b = 0.0;
    for (double v : y) b = std::max(b, std::abs(v));
    d.outcome_bound = b == 0.0 ? 1.0 : b;
    return d;
}

// Two-arm nuisance matrix from the arm-1 columns.
inline cdml::NuisanceMatrix two_arm(const std::vector<double>& mu0, const std::vector<double>& mu1, const std::vector<double>& pi1) {
    const auto n = static_cast<Eigen::Index>(pi1.size());
    cdml::NuisanceMatrix nm;
    nm.mu.resize(n, 2);
    nm.pi.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        nm.mu(i, 0) = mu0[static_cast<std::size_t>(i)];
        nm.mu(i, 1) = mu1[static_cast<std::size_t>(i)];
        nm.pi(i, 1) = pi1[static_cast<std::size_t>(i)];
        nm.pi(i, 0) = 1.0 - pi1[static_cast<std::size_t>(i)];
    }
    nm.source = cdml::NuisanceSource::external_columns;
    return nm;
}

// Simulated data with noisy (but strictly informative) nuisance predictions.
struct Simulated {
    cdml::Dataset data;
    cdml::NuisanceMatrix nuis;
};

inline Simulated simulated(std::size_t n, std::uint64_t seed, int folds = 5) {
    cdml::Rng rng(seed);
    Simulated s{cdml::sample_dgp(n, rng, folds), {}};
    const auto m = static_cast<Eigen::Index>(n);
    s.nuis.mu.resize(m, 2);
    s.nuis.pi.resize(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double w1 = s.data.covariates(i, 0), w2 = s.data.covariates(i, 1);
        const double p = cdml::expit(-w1 + 2.0 * w1 * w2 + 0.4 * rng.normal());
        s.nuis.pi(i, 1) = p;
        s.nuis.pi(i, 0) = 1.0 - p;
        for (int a = 0; a < 2; ++a) s.nuis.mu(i, a) = cdml::expit(0.2 * a - w1 + 2.0 * w1 * w2 + 0.4 * rng.normal());
    }
    return s;
}

}  // namespace fixtures
