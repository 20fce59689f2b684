#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"

namespace cdml {

enum class Direction { nondecreasing, nonincreasing };

namespace detail {

struct Block {
    double weight;  // quadratic mass
    double sum;     // linear mass
    double value;
    std::size_t first;
    std::size_t last;
};

// Pool-adjacent-violators over ordered groups. Group g carries the convex
// loss weight[g]*c^2 - 2*sum[g]*c; `solve(weight, sum)` returns the minimizer
// of a pooled block. Adjacent blocks are merged until values strictly increase.
template <class Solve>
std::vector<Block> pool_adjacent(std::span<const double> weight, std::span<const double> sum, Solve solve) {
    std::vector<Block> stack;
    stack.reserve(weight.size());
    for (std::size_t g = 0; g < weight.size(); ++g) {
        Block b{weight[g], sum[g], solve(weight[g], sum[g]), g, g};
        while (!stack.empty() && stack.back().value >= b.value) {
            const Block& prev = stack.back();
            b.weight += prev.weight;
            b.sum += prev.sum;
            b.first = prev.first;
            b.value = solve(b.weight, b.sum);
            stack.pop_back();
        }
        stack.push_back(b);
    }
    return stack;
}

}  // namespace detail

// Weighted least-squares projection of `values` onto the monotone cone.
inline std::vector<double> pava_weighted(std::span<const double> values, std::span<const double> weights,
                                         Direction direction = Direction::nondecreasing) {
    if (values.size() != weights.size()) throw ValueError("pava_weighted: values and weights differ in length");
    if (values.empty()) throw ValueError("pava_weighted: empty input");
    const double sign = direction == Direction::nondecreasing ? 1.0 : -1.0;
    std::vector<double> w(values.size()), s(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) throw ValueError("pava_weighted: weights must be positive");
        if (!std::isfinite(values[i])) throw ValueError("pava_weighted: non-finite value");
        w[i] = weights[i];
        s[i] = weights[i] * sign * values[i];
    }
    const auto blocks = detail::pool_adjacent(w, s, [](double wt, double sm) { return sm / wt; });
    std::vector<double> out(values.size());
    for (const auto& b : blocks)
        for (std::size_t i = b.first; i <= b.last; ++i) out[i] = sign * b.value;
    return out;
}

// Right-continuous nondecreasing step function. Each input maps to the level of
// the rightmost breakpoint <= x; inputs outside the breakpoint range take the
// first or last level.
class Calibrator {
public:
    Calibrator() = default;

    Calibrator(std::vector<double> breakpoints, std::vector<double> levels)
        : breakpoints_(std::move(breakpoints)), levels_(std::move(levels)) {
        if (breakpoints_.empty() || breakpoints_.size() != levels_.size())
            throw ValueError("calibrator needs equal-length, nonempty breakpoints and levels");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
            if (!(breakpoints_[i] > breakpoints_[i - 1])) throw ValueError("calibrator breakpoints must be strictly increasing");
            if (levels_[i] < levels_[i - 1]) throw ValueError("calibrator levels must be nondecreasing");
        }
    }

    bool empty() const { return levels_.empty(); }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& levels() const { return levels_; }
    double lower_clamp() const { return levels_.front(); }
    double upper_clamp() const { return levels_.back(); }

    std::size_t distinct_levels() const {
        if (levels_.empty()) return 0;
        std::size_t k = 1;
        for (std::size_t i = 1; i < levels_.size(); ++i) k += levels_[i] != levels_[i - 1];
        return k;
    }

    double operator()(double x) const {
        auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
        if (it == breakpoints_.begin()) return levels_.front();
        return levels_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
    }

    std::vector<double> predict(std::span<const double> x) const {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
        return out;
    }

private:
    std::vector<double> breakpoints_;
    std::vector<double> levels_;
};

inline std::vector<double> predict(const Calibrator& cal, std::span<const double> x) { return cal.predict(x); }

// Predictor values sorted once with exact ties grouped. Refitting on the same
// predictor with different weights (bootstrap counts) reuses the ordering.
class SortedDesign {
public:
    SortedDesign() = default;

    explicit SortedDesign(std::span<const double> x) : group_of_(x.size()) {
        std::vector<std::size_t> order(x.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (double v : x)
            if (!std::isfinite(v)) throw ValueError("isotonic fit: non-finite predictor value");
        std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
        for (std::size_t k = 0; k < order.size(); ++k) {
            const double v = x[order[k]];
            if (group_x_.empty() || v != group_x_.back()) group_x_.push_back(v);
            group_of_[order[k]] = group_x_.size() - 1;
        }
    }

    std::size_t size() const { return group_of_.size(); }
    std::size_t groups() const { return group_x_.size(); }
    double group_x(std::size_t g) const { return group_x_[g]; }
    std::size_t group_of(std::size_t i) const { return group_of_[i]; }

    // Number of groups with x <= q.
    std::size_t rank(double q) const {
        return static_cast<std::size_t>(std::upper_bound(group_x_.begin(), group_x_.end(), q) - group_x_.begin());
    }

    // cal evaluated at every group x, for calibrators whose breakpoints are a
    // subset of the group x values; cal(q) == at_groups[rank(q) - 1] when rank(q) > 0.
    std::vector<double> at_groups(const Calibrator& cal) const {
        const auto& bp = cal.breakpoints();
        const auto& lv = cal.levels();
        std::vector<double> out(groups());
        std::size_t j = 0;
        for (std::size_t g = 0; g < groups(); ++g) {
            while (j + 1 < bp.size() && bp[j + 1] <= group_x_[g]) ++j;
            out[g] = lv[j];
        }
        return out;
    }

    // Least-squares isotonic fit of y on the design. Weights may be empty (all
    // ones) or nonnegative; zero-weight groups get no breakpoint.
    Calibrator fit_ls(std::span<const double> y, std::span<const double> weights = {}) const {
        if (y.size() != size()) throw ValueError("isotonic fit: predictor and target differ in length");
        if (!weights.empty() && weights.size() != size()) throw ValueError("isotonic fit: weights have wrong length");
        std::vector<double> gw(groups(), 0.0), gs(groups(), 0.0);
        for (std::size_t i = 0; i < size(); ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            if (w == 0.0) continue;
            gw[group_of_[i]] += w;
            gs[group_of_[i]] += w * y[i];
        }
        return fit_groups(gw, gs, [](double w, double s) { return s / w; });
    }

    template <class Solve>
    Calibrator fit_groups(const std::vector<double>& gw, const std::vector<double>& gs, Solve solve,
                          bool keep_zero_weight = false) const {
        std::vector<double> xs, w, s;
        xs.reserve(groups());
        w.reserve(groups());
        s.reserve(groups());
        for (std::size_t g = 0; g < groups(); ++g) {
            if (!keep_zero_weight && gw[g] == 0.0) continue;
            xs.push_back(group_x_[g]);
            w.push_back(gw[g]);
            s.push_back(gs[g]);
        }
        if (xs.empty()) throw ValueError("isotonic fit: no observations with positive weight");
        const auto blocks = detail::pool_adjacent(w, s, solve);
        std::vector<double> levels(xs.size());
        for (const auto& b : blocks)
            for (std::size_t i = b.first; i <= b.last; ++i) levels[i] = b.value;
        return Calibrator(std::move(xs), std::move(levels));
    }

private:
    std::vector<double> group_x_;
    std::vector<std::size_t> group_of_;
};

// argmin over nondecreasing f of sum_i w_i (y_i - f(x_i))^2; exact ties in x are
// pooled before PAVA and the step function jumps only at observed x.
inline Calibrator fit_ls_isotonic(std::span<const double> x, std::span<const double> y, std::span<const double> weights = {}) {
    if (x.empty()) throw ValueError("fit_ls_isotonic: empty input");
    if (x.size() != y.size()) throw ValueError("fit_ls_isotonic: x and y differ in length");
    if (!weights.empty()) {
        if (weights.size() != x.size()) throw ValueError("fit_ls_isotonic: weights have wrong length");
        for (double w : weights)
            if (!(w > 0.0) || !std::isfinite(w)) throw ValueError("fit_ls_isotonic: weights must be positive");
    }
    for (double v : y)
        if (!std::isfinite(v)) throw ValueError("fit_ls_isotonic: non-finite target");
    return SortedDesign(x).fit_ls(y, weights);
}

// Per-point contribution w*c^2 - 2*v*c to the Riesz isotonic objective.
struct PointLoss {
    double x;
    double w;
    double v;
};

// Minimizer of the clamped block loss: clip(v/w, lo, hi); blocks without
// quadratic mass sit at the bound the linear term pushes toward.
inline double riesz_block_level(double w, double v, double lo, double hi) {
    if (w > 0.0) return std::clamp(v / w, lo, hi);
    return v > 0.0 ? hi : lo;
}

// argmin over nondecreasing g with levels in [lo, hi] of
// sum_p w_p g(x_p)^2 - 2 sum_p v_p g(x_p). Duplicate x values are aggregated.
inline Calibrator fit_riesz_isotonic(std::span<const PointLoss> points, double lo, double hi) {
    if (!(lo < hi)) throw BoundsError("fit_riesz_isotonic: lower bound must be below upper bound");
    if (points.empty()) throw ValueError("fit_riesz_isotonic: empty input");
    std::vector<double> xs(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!std::isfinite(p.w) || !std::isfinite(p.v) || p.w < 0.0)
            throw ValueError("fit_riesz_isotonic: weights must be finite and w >= 0");
        xs[i] = p.x;
    }
    SortedDesign design(xs);
    std::vector<double> gw(design.groups(), 0.0), gv(design.groups(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        gw[design.group_of(i)] += points[i].w;
        gv[design.group_of(i)] += points[i].v;
    }
    return design.fit_groups(gw, gv, [lo, hi](double w, double v) { return riesz_block_level(w, v, lo, hi); },
                             /*keep_zero_weight=*/true);
}

}  // namespace cdml
