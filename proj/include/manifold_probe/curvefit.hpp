#pragma once

// Logistic maturation curve f(x) = L / (1 + exp(-k (x - x0))) fitted by
// Levenberg-Marquardt.

#include "manifold_probe/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace manifold_probe {

struct LogisticParams {
    double L = 1.0;
    double k = 1.0;  // growth rate per layer
    double x0 = 0.0; // midpoint

    double operator()(double x) const noexcept { return L / (1.0 + std::exp(-k * (x - x0))); }

    /// (df/dL, df/dk, df/dx0)
    std::array<double, 3> gradient(double x) const noexcept {
        const double s = 1.0 / (1.0 + std::exp(-k * (x - x0)));
        const double ds = L * s * (1.0 - s);
        return {s, ds * (x - x0), -ds * k};
    }
};

struct LogisticFit {
    LogisticParams params;
    double r_squared = 0.0;
    double sse = 0.0;
    std::uint32_t iterations = 0;
    bool converged = false;
    bool identifiable = true;   // false for constant data
    bool negative_growth = false; // k < 0: returned, not rejected
};

struct LogisticFitOptions {
    std::uint32_t max_iterations = 500;
    double relative_sse_tolerance = 1e-10;
    double step_tolerance = 1e-8;
    double initial_damping = 1e-3;
};

inline double logistic_sse(const LogisticParams& p, std::span<const double> xs, std::span<const double> ys) {
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - p(xs[i]);
        sse += r * r;
    }
    return sse;
}

/// 1 - SSE/SST with SST about the mean of ys.
inline double r_squared(const LogisticParams& p, std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.empty()) throw invalid_argument("r_squared: xs and ys must be non-empty and aligned");
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
    if (*lo == *hi) throw invalid_argument("r_squared: zero total sum of squares");
    double sst = 0.0;
    for (double y : ys) sst += (y - mean) * (y - mean);
    return 1.0 - logistic_sse(p, xs, ys) / sst;
}

inline double r_squared(const LogisticFit& fit, std::span<const double> xs, std::span<const double> ys) {
    return r_squared(fit.params, xs, ys);
}

/// Starting point: L = 1.05 max(y), x0 where y first crosses max(y)/2
/// (linear interpolation; falls back to the (min+max)/2 crossing, then the
/// mean x), k = 4 / range(x).
inline LogisticParams logistic_initial_guess(std::span<const double> xs, std::span<const double> ys) {
    const double y_max = *std::max_element(ys.begin(), ys.end());
    const double y_min = *std::min_element(ys.begin(), ys.end());
    const double x_min = *std::min_element(xs.begin(), xs.end());
    const double x_max = *std::max_element(xs.begin(), xs.end());
    LogisticParams p;
    p.L = 1.05 * y_max;
    p.k = x_max > x_min ? 4.0 / (x_max - x_min) : 1.0;

    auto crossing = [&](double level) -> std::pair<bool, double> {
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            const double a = ys[i] - level;
            const double b = ys[i + 1] - level;
            if (a == 0) return {true, xs[i]};
            if ((a < 0) != (b < 0)) return {true, xs[i] + (xs[i + 1] - xs[i]) * (-a) / (b - a)};
        }
        return {false, 0.0};
    };
    if (auto [found, x] = crossing(0.5 * y_max); found) {
        p.x0 = x;
    } else if (auto [found2, x2] = crossing(0.5 * (y_min + y_max)); found2) {
        p.x0 = x2;
    } else {
        double sum = 0.0;
        for (double x : xs) sum += x;
        p.x0 = sum / static_cast<double>(xs.size());
    }
    return p;
}

/// Least-squares logistic fit by damped Gauss-Newton with Marquardt scaling
/// (damping x10 on a rejected step, /10 on an accepted one). Points are
/// processed in sorted (x, y) order, so the result does not depend on input
/// order.
inline LogisticFit fit_logistic(std::span<const double> xs_in, std::span<const double> ys_in,
                                const LogisticFitOptions& opt = {}) {
    if (xs_in.size() != ys_in.size()) throw invalid_argument("fit_logistic: xs and ys differ in length");
    if (xs_in.size() < 4) throw invalid_argument("fit_logistic: need at least 4 points");
    for (std::size_t i = 0; i < xs_in.size(); ++i) {
        if (!std::isfinite(xs_in[i]) || !std::isfinite(ys_in[i])) throw invalid_argument("fit_logistic: non-finite input");
        if (ys_in[i] < 0) throw invalid_argument("fit_logistic: ys must be non-negative");
    }

    std::vector<std::pair<double, double>> pts(xs_in.size());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {xs_in[i], ys_in[i]};
    std::sort(pts.begin(), pts.end());
    std::vector<double> xs(pts.size()), ys(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) std::tie(xs[i], ys[i]) = pts[i];

    LogisticFit fit;
    const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
    if (*lo == *hi) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        fit.params = {*lo, 0.0, mean / static_cast<double>(xs.size())};
        fit.identifiable = false;
        fit.converged = false;
        fit.sse = logistic_sse(fit.params, xs, ys);
        fit.r_squared = 0.0;
        return fit;
    }

    LogisticParams p = logistic_initial_guess(xs, ys);
    double sse = logistic_sse(p, xs, ys);
    double damping = opt.initial_damping;
    const auto n = static_cast<Eigen::Index>(xs.size());

    for (std::uint32_t it = 1; it <= opt.max_iterations; ++it) {
        fit.iterations = it;
        Eigen::MatrixXd jac(n, 3);
        Eigen::VectorXd resid(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto g = p.gradient(xs[i]);
            jac.row(i) << g[0], g[1], g[2];
            resid(i) = ys[i] - p(xs[i]);
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d jtr = jac.transpose() * resid;

        Eigen::Matrix3d a = jtj;
        for (int d = 0; d < 3; ++d) a(d, d) += damping * (jtj(d, d) > 0 ? jtj(d, d) : 1.0);
        const Eigen::Vector3d step = a.ldlt().solve(jtr);
        if (!step.allFinite()) break;

        if (step.norm() < opt.step_tolerance) {
            fit.converged = true;
            break;
        }
        const LogisticParams trial{p.L + step(0), p.k + step(1), p.x0 + step(2)};
        const double trial_sse = logistic_sse(trial, xs, ys);
        if (std::isfinite(trial_sse) && trial_sse < sse) {
            const double improvement = (sse - trial_sse) / sse;
            p = trial;
            sse = trial_sse;
            damping = std::max(damping / 10.0, 1e-15);
            if (improvement < opt.relative_sse_tolerance || sse == 0.0) {
                fit.converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if (damping > 1e20) break;
        }
    }

    fit.params = p;
    fit.sse = sse;
    fit.r_squared = r_squared(p, xs, ys);
    fit.negative_growth = p.k < 0;
    return fit;
}

} // namespace manifold_probe
