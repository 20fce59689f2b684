#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "core_data.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace cdml {

inline double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// ---------------------------------------------------------------------------
// Main-terms logistic regression
// ---------------------------------------------------------------------------

struct LogisticFit {
    Eigen::VectorXd coefficients;  // intercept first
    int iterations = 0;
    bool converged = false;
};

struct LogisticOptions {
    double ridge = 1e-8;
    double tolerance = 1e-10;
    int max_iterations = 100;
};

// Bernoulli maximum likelihood with intercept via Newton/IRLS. A ridge term of
// `ridge` keeps separated data finite. Targets may be fractional in [0, 1].
inline LogisticFit fit_logistic_main_terms(const Eigen::MatrixXd& X, std::span<const double> y,
                                           const LogisticOptions& opt = {}) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols() + 1;
    if (static_cast<std::size_t>(n) != y.size()) throw LearnerError("logistic: X and y differ in length");
    if (n < p) throw LearnerError("logistic: need at least d+1 = " + std::to_string(p) + " rows, got " + std::to_string(n));
    for (double v : y)
        if (!(v >= 0.0 && v <= 1.0)) throw LearnerError("logistic: targets must lie in [0, 1]");

    Eigen::MatrixXd Xt(n, p);
    Xt.col(0).setOnes();
    Xt.rightCols(p - 1) = X;
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

    auto penalized_loglik = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd eta = Xt * beta;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) ll += yv(i) * eta(i) - softplus(eta(i));
        return ll - 0.5 * opt.ridge * beta.squaredNorm();
    };

    LogisticFit fit;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double current = penalized_loglik(beta);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const Eigen::VectorXd eta = Xt * beta;
        Eigen::VectorXd prob(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = expit(eta(i));
            w(i) = prob(i) * (1.0 - prob(i));
        }
        const Eigen::VectorXd grad = Xt.transpose() * (yv - prob) - opt.ridge * beta;
        Eigen::MatrixXd hess = Xt.transpose() * w.asDiagonal() * Xt;
        hess.diagonal().array() += opt.ridge;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        if (!step.allFinite()) throw LearnerError("logistic: non-finite Newton step at iteration " + std::to_string(it));

        double t = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double value = penalized_loglik(candidate);
        for (int halving = 0; halving < 60 && !(value >= current); ++halving) {
            t *= 0.5;
            candidate = beta + t * step;
            value = penalized_loglik(candidate);
        }
        if (!candidate.allFinite() || !std::isfinite(value))
            throw LearnerError("logistic: non-finite iterate at iteration " + std::to_string(it));
        const double change = (t * step).cwiseAbs().maxCoeff();
        beta = candidate;
        current = value;
        fit.iterations = it;
        if (change < opt.tolerance) {
            fit.converged = true;
            break;
        }
    }
    fit.coefficients = beta;
    return fit;
}

inline std::vector<double> predict_logistic(const LogisticFit& fit, const Eigen::MatrixXd& X) {
    if (X.cols() + 1 != fit.coefficients.size()) throw LearnerError("logistic: column count does not match the fit");
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double eta = fit.coefficients(0);
        for (Eigen::Index j = 0; j < X.cols(); ++j) eta += fit.coefficients(j + 1) * X(i, j);
        out[static_cast<std::size_t>(i)] = expit(eta);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified Nadaraya-Watson smoother
// ---------------------------------------------------------------------------

struct KernelStratum {
    std::vector<double> x;  // sorted
    std::vector<double> y;
};

struct KernelFit {
    std::map<std::int64_t, KernelStratum> strata;
    double bandwidth = 1.0;
    std::vector<double> grid;
    std::vector<double> cv_error;  // pooled squared error per grid value
};

inline constexpr double kKernelUnderflow = 1e-300;

// Geometric grid of `count` points spanning [0.05, 2] * sd(x).
inline std::vector<double> default_bandwidth_grid(std::span<const double> x, int count = 20) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    if (!(sd > 0.0)) sd = 1.0;
    std::vector<double> grid(static_cast<std::size_t>(count));
    const double lo = std::log(0.05 * sd), hi = std::log(2.0 * sd);
    for (int k = 0; k < count; ++k)
        grid[static_cast<std::size_t>(k)] = count == 1 ? std::exp(lo) : std::exp(lo + (hi - lo) * k / (count - 1));
    return grid;
}

namespace detail {

// Terms whose kernel weight is below e^-36 (< 2^-51) of the nearest point's
// weight are skipped; they change the ratio only at rounding level.
inline constexpr double kKernelWindow2 = 72.0;

// Gaussian-weighted mean of ys at query q, xs sorted ascending. Falls back to
// the nearest neighbour's y when the kernel mass underflows.
inline double nadaraya_watson(std::span<const double> xs, std::span<const double> ys, double q, double h) {
    const auto it = std::lower_bound(xs.begin(), xs.end(), q);
    std::size_t nearest = static_cast<std::size_t>(it - xs.begin());
    if (nearest == xs.size() || (nearest > 0 && q - xs[nearest - 1] <= xs[nearest] - q)) --nearest;
    const double inv = 1.0 / h;
    const double u0 = (q - xs[nearest]) * inv;
    const double reach = std::sqrt(u0 * u0 + kKernelWindow2) * h;
    const auto lo = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), q - reach) - xs.begin());
    const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), q + reach) - xs.begin());
    double num = 0.0, den = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const double u = (q - xs[i]) * inv;
        const double k = std::exp(-0.5 * u * u);
        num += k * ys[i];
        den += k;
    }
    if (den >= kKernelUnderflow) return num / den;
    return ys[nearest];
}

inline KernelStratum sorted_stratum(std::vector<double> x, std::vector<double> y) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    KernelStratum s;
    s.x.reserve(x.size());
    s.y.reserve(y.size());
    for (auto i : order) {
        s.x.push_back(x[i]);
        s.y.push_back(y[i]);
    }
    return s;
}

}  // namespace detail

// Selects one bandwidth by pooled `cv_folds`-fold squared prediction error
// across strata (ties go to the larger bandwidth) and keeps the training data
// of every stratum.
inline KernelFit fit_kernel_stratified(std::span<const double> x, std::span<const double> y,
                                       std::span<const std::int64_t> strata, std::vector<double> bandwidth_grid,
                                       int cv_folds, Rng& rng) {
    if (x.size() != y.size() || x.size() != strata.size()) throw LearnerError("kernel: input lengths differ");
    if (x.empty()) throw LearnerError("kernel: empty training set");
    if (cv_folds < 2) throw LearnerError("kernel: cv_folds must be at least 2");
    if (bandwidth_grid.empty()) bandwidth_grid = default_bandwidth_grid(x);
    for (double h : bandwidth_grid)
        if (!(h > 0.0) || !std::isfinite(h)) throw LearnerError("kernel: bandwidths must be positive");

    std::map<std::int64_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < x.size(); ++i) members[strata[i]].push_back(i);

    KernelFit fit;
    fit.grid = bandwidth_grid;
    fit.cv_error.assign(bandwidth_grid.size(), 0.0);
    for (const auto& [key, idx] : members) {
        if (idx.size() < static_cast<std::size_t>(cv_folds))
            throw LearnerError("kernel: stratum " + std::to_string(key) + " has " + std::to_string(idx.size()) +
                               " points, fewer than cv_folds = " + std::to_string(cv_folds));
        const auto folds = assign_folds(idx.size(), cv_folds, rng);
        for (int f = 0; f < cv_folds; ++f) {
            std::vector<double> tx, ty, qx, qy;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                if (folds[k] == f) {
                    qx.push_back(x[idx[k]]);
                    qy.push_back(y[idx[k]]);
                } else {
                    tx.push_back(x[idx[k]]);
                    ty.push_back(y[idx[k]]);
                }
            }
            auto train = detail::sorted_stratum(std::move(tx), std::move(ty));
            tx = std::move(train.x);
            ty = std::move(train.y);
            for (std::size_t g = 0; g < bandwidth_grid.size(); ++g) {
                double sse = 0.0;
                for (std::size_t q = 0; q < qx.size(); ++q) {
                    const double r = qy[q] - detail::nadaraya_watson(tx, ty, qx[q], bandwidth_grid[g]);
                    sse += r * r;
                }
                fit.cv_error[g] += sse;
            }
        }
        std::vector<double> sx, sy;
        for (auto i : idx) {
            sx.push_back(x[i]);
            sy.push_back(y[i]);
        }
        fit.strata.emplace(key, detail::sorted_stratum(std::move(sx), std::move(sy)));
    }

    std::size_t best = 0;
    for (std::size_t g = 1; g < bandwidth_grid.size(); ++g) {
        const double e = fit.cv_error[g], b = fit.cv_error[best];
        if (e < b || (e == b && bandwidth_grid[g] > bandwidth_grid[best])) best = g;
    }
    fit.bandwidth = bandwidth_grid[best];
    return fit;
}

inline std::vector<double> predict_kernel(const KernelFit& fit, std::span<const double> x_new,
                                          std::span<const std::int64_t> strata_new) {
    if (x_new.size() != strata_new.size()) throw LearnerError("kernel: query lengths differ");
    std::vector<double> out(x_new.size());
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        auto it = fit.strata.find(strata_new[i]);
        if (it == fit.strata.end()) throw LearnerError("kernel: stratum " + std::to_string(strata_new[i]) + " unseen in training");
        out[i] = detail::nadaraya_watson(it->second.x, it->second.y, x_new[i], fit.bandwidth);
    }
    return out;
}

}  // namespace cdml
