#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/oracles.hpp"

TEST(BruteForceIsotonic, MonotoneInputUnchanged) {
    const std::vector<double> v{-1, 0.5, 0.5, 2}, w{1, 2, 1, 3};
    const auto f = oracle::brute_force_isotonic(v, w);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(f[i], v[i], 1e-9);
}

TEST(BruteForceIsotonic, TwoPointViolationAveraged) {
    const auto f = oracle::brute_force_isotonic({2, 1}, {1, 1});
    EXPECT_NEAR(f[0], 1.5, 1e-9);
    EXPECT_NEAR(f[1], 1.5, 1e-9);
}

TEST(BruteForceIsotonic, AgreesWithBlockEnumeration) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> val(-5, 5), wt(0.1, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + gen() % 8;
        std::vector<double> v(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = val(gen);
            w[i] = wt(gen);
        }
        const auto a = oracle::brute_force_isotonic(v, w);
        const auto b = oracle::block_enumeration_isotonic(v, w);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
    }
}

TEST(BruteForceIsotonic, SizeLimit) {
    EXPECT_THROW(oracle::brute_force_isotonic(std::vector<double>(9, 0.0), std::vector<double>(9, 1.0)), oracle::SizeError);
}

TEST(GaussLegendre, ExactForPolynomials) {
    std::vector<double> x, w;
    oracle::gauss_legendre(16, x, w);
    double s0 = 0, s2 = 0, s30 = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        s0 += w[k];
        s2 += w[k] * x[k] * x[k];
        s30 += w[k] * std::pow(x[k], 30);
    }
    EXPECT_NEAR(s0, 2.0, 1e-14);
    EXPECT_NEAR(s2, 2.0 / 3, 1e-14);
    EXPECT_NEAR(s30, 2.0 / 31, 1e-14);
}

TEST(QuadratureTau0, Convergence) {
    EXPECT_NEAR(oracle::quadrature_tau0(64), oracle::quadrature_tau0(128), 1e-12);
    EXPECT_NEAR(oracle::quadrature_tau0(64, 0.0), 0.0, 1e-16);
    EXPECT_THROW(oracle::quadrature_tau0(8), std::invalid_argument);
}

TEST(QuadratureTau0, AnalyticAntiderivative) {
    // Independent closed form: for both W2 values the linear predictor is +/-W1,
    // and log(1 + e^u) integrates the logistic function.
    auto F = [](double u) { return std::log1p(std::exp(u)); };
    const double closed = 0.25 * ((F(2.2) - F(-1.8)) - (F(2.0) - F(-2.0)));
    EXPECT_NEAR(oracle::quadrature_tau0(64), closed, 1e-10);
}

TEST(BruteForceRiesz, BoundsAndPooling) {
    const auto f = oracle::brute_force_riesz({1, 1}, {2, 1}, 0, 10);
    EXPECT_NEAR(f[0], 1.5, 1e-9);
    const auto g = oracle::brute_force_riesz({1}, {50}, 0, 10);
    EXPECT_NEAR(g[0], 10, 1e-12);
}
