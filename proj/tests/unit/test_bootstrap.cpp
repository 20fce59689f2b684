#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"

using namespace cdml;

namespace {

BootstrapOptions options(int K, std::uint64_t seed, int threads = 1) {
    BootstrapOptions o;
    o.replicates = K;
    o.seed = seed;
    o.threads = threads;
    return o;
}

}  // namespace

TEST(Bootstrap, DegenerateDataHasZeroSpread) {
    std::vector<int> a(40);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<int>(i % 3 == 0);
    const auto d = fixtures::make_dataset(a, std::vector<double>(40, 0.7), 4);
    const auto nm = fixtures::two_arm(std::vector<double>(40, 0.7), std::vector<double>(40, 0.7), std::vector<double>(40, 0.4));
    for (const auto& target : {Target{1, std::nullopt}, Target{1, 0}}) {
        const auto r = bootstrap_ci(d, nm, target, options(200, 3));
        const double c = target.arm0 ? 0.0 : 0.7;
        for (double v : r.replicate_estimates) EXPECT_NEAR(v, c, 1e-15);
        EXPECT_NEAR(r.sigma_hat, 0.0, 1e-15);
        EXPECT_NEAR(r.normal_ci.upper - r.normal_ci.lower, 0.0, 1e-14);
        EXPECT_NEAR(r.percentile_ci.lower, c, 1e-15);
        EXPECT_NEAR(r.percentile_ci.upper, c, 1e-15);
        EXPECT_EQ(r.dropped, 0);
    }
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
    const auto s = fixtures::simulated(300, 8);
    const Target t{1, 0};
    const auto a = bootstrap_ci(s.data, s.nuis, t, options(300, 42, 1));
    const auto b = bootstrap_ci(s.data, s.nuis, t, options(300, 42, 1));
    const auto c = bootstrap_ci(s.data, s.nuis, t, options(300, 42, 4));
    EXPECT_EQ(a.replicate_estimates, b.replicate_estimates);
    EXPECT_EQ(a.replicate_estimates, c.replicate_estimates);
    EXPECT_EQ(a.sigma_hat, c.sigma_hat);
    EXPECT_EQ(a.percentile_ci.lower, c.percentile_ci.lower);
    const auto other = bootstrap_ci(s.data, s.nuis, t, options(300, 43, 1));
    EXPECT_NE(a.replicate_estimates, other.replicate_estimates);
}

TEST(Bootstrap, PointEstimateIsCalibratedEstimator) {
    const auto s = fixtures::simulated(300, 9);
    const auto r = bootstrap_ci(s.data, s.nuis, Target{1, 0}, options(100, 1));
    EXPECT_EQ(r.tau_hat, ate_cdml(s.data, calibrate_nuisances(s.data, s.nuis, {1, 0}), 1, 0).tau_hat);
}

TEST(Bootstrap, NuisancesUntouched) {
    const auto s = fixtures::simulated(200, 10);
    const auto before = fingerprint(s.nuis);
    const auto r = bootstrap_ci(s.data, s.nuis, Target{1, 0}, options(100, 2));
    EXPECT_EQ(r.nuisance_fingerprint, before);
    EXPECT_EQ(fingerprint(s.nuis), before);
}

TEST(Bootstrap, WithinFoldResamplingKeepsFoldSizes) {
    const auto s = fixtures::simulated(103, 11);
    std::vector<std::vector<std::size_t>> fold_rows(5);
    for (std::size_t i = 0; i < 103; ++i) fold_rows[static_cast<std::size_t>(s.data.fold_id[i])].push_back(i);
    const auto sizes = s.data.fold_sizes();
    for (std::uint64_t k = 0; k < 50; ++k) {
        Rng rng = Rng::stream(7, {k});
        const auto counts = within_fold_counts(fold_rows, 103, rng);
        std::vector<double> per(5, 0.0);
        for (std::size_t i = 0; i < 103; ++i) per[static_cast<std::size_t>(s.data.fold_id[i])] += counts[i];
        for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(per[f], static_cast<double>(sizes[f]));
    }
}

TEST(Bootstrap, IntervalForms) {
    const auto s = fixtures::simulated(400, 12);
    const auto r = bootstrap_ci(s.data, s.nuis, Target{1, 0}, options(500, 5));
    const double z = normal_critical_value(0.95);
    EXPECT_NEAR(r.normal_ci.upper - r.tau_hat, z * r.sigma_hat, 1e-15);
    EXPECT_NEAR(r.tau_hat - r.normal_ci.lower, z * r.sigma_hat, 1e-15);

    auto reps = r.replicate_estimates;
    ASSERT_EQ(reps.size(), 500u);
    double mean = 0;
    for (double v : reps) mean += v;
    mean /= 500;
    double ss = 0;
    for (double v : reps) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(r.sigma_hat, std::sqrt(ss / 500), 1e-15);

    std::sort(reps.begin(), reps.end());
    auto q7 = [&](double p) {
        const double h = 499 * p;
        const auto lo = static_cast<std::size_t>(h);
        return reps[lo] + (h - static_cast<double>(lo)) * (reps[lo + 1] - reps[lo]);
    };
    EXPECT_NEAR(r.percentile_ci.lower, r.tau_hat - (q7(0.975) - mean), 1e-14);
    EXPECT_NEAR(r.percentile_ci.upper, r.tau_hat - (q7(0.025) - mean), 1e-14);
    EXPECT_LT(r.percentile_ci.lower, r.percentile_ci.upper);
}

TEST(Bootstrap, QuantileType7) {
    const std::vector<double> v{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(quantile_type7(v, 0.0), 1);
    EXPECT_DOUBLE_EQ(quantile_type7(v, 1.0), 4);
    EXPECT_DOUBLE_EQ(quantile_type7(v, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile_type7(v, 0.25), 1.75);
}

TEST(Bootstrap, TooFewReplicates) {
    const auto s = fixtures::simulated(100, 13);
    EXPECT_THROW(bootstrap_ci(s.data, s.nuis, Target{1, 0}, options(99, 1)), ValueError);
}

TEST(Bootstrap, RareArmTriggersDropPolicy) {
    std::vector<int> a(200, 0);
    a[17] = 1;
    a[150] = 1;
    auto d = fixtures::make_dataset(a, std::vector<double>(200, 0.0), 5);
    for (std::size_t i = 0; i < 200; ++i) d.outcome[i] = (i % 7) / 7.0;
    d.outcome_bound = 1.0;
    const auto nm = fixtures::two_arm(std::vector<double>(200, 0.5), std::vector<double>(200, 0.5), std::vector<double>(200, 0.2));
    EXPECT_THROW(bootstrap_ci(d, nm, Target{1, 0}, options(200, 1)), BootstrapError);
    auto lenient = options(200, 1);
    lenient.max_drop_fraction = 1.0;
    const auto r = bootstrap_ci(d, nm, Target{1, 0}, lenient);
    EXPECT_GT(r.dropped, 0);
    EXPECT_EQ(r.dropped + static_cast<int>(r.replicate_estimates.size()), 200);
}
