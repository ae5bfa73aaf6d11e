// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"
#include "lpwanloc/ranging/regression.hpp"

namespace lpwanloc::ranging {

struct PositionFix {
    Position position;
    /// RMS of |p - a_i| - d_i over the anchors used (m).
    double residual_m = 0.0;
    std::size_t anchors_used = 0;
    std::size_t iterations = 0;
};

struct MultilaterationOptions {
    /// Weight each range by 1/d_i^2, the inverse of the RSSI range variance
    /// growth with distance. Off: uniform weights.
    bool variance_weighting = false;
    /// Gauss-Newton converges only linearly when the ranges are inconsistent
    /// (nonzero residual), so the cap leaves room for slow tails near anchors.
    std::size_t max_iterations = 500;
};

namespace detail {

inline double weighted_sse(const Eigen::Vector2d& p, std::span<const Position> anchors, std::span<const double> d,
                           std::span<const double> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double r = std::hypot(p.x() - anchors[i].x, p.y() - anchors[i].y) - d[i];
        s += w[i] * r * r;
    }
    return s;
}

}  // namespace detail

/// Nonlinear least squares on sum_i w_i (|p - a_i| - d_i)^2, Gauss-Newton with
/// step halving, started from the difference-of-squares linear solution.
inline PositionFix multilaterate(std::span<const Position> anchors, std::span<const double> distances,
                                 const MultilaterationOptions& opts = {}) {
    if (anchors.size() < 3) throw ValidationError("multilateration needs at least 3 anchors");
    if (anchors.size() != distances.size()) throw ValidationError("anchor/distance count mismatch");
    for (const auto& a : anchors) {
        require_finite(a.x, "anchor x");
        require_finite(a.y, "anchor y");
    }
    for (double d : distances)
        if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("distances must be finite and >= 0");

    const auto n = static_cast<Eigen::Index>(anchors.size());
    Eigen::MatrixXd centered(n, 2);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& a : anchors) mean += Eigen::Vector2d(a.x, a.y);
    mean /= static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i)
        centered.row(i) = Eigen::Vector2d(anchors[static_cast<std::size_t>(i)].x, anchors[static_cast<std::size_t>(i)].y) - mean;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto sv = svd.singularValues();
    if (sv(0) == 0.0 || sv(1) <= 1e-9 * sv(0)) throw ValidationError("degenerate geometry");

    std::vector<double> w(anchors.size(), 1.0);
    if (opts.variance_weighting)
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::max(distances[i] * distances[i], 1e-6);

    // Linearized start: subtract the first range equation from the others.
    Eigen::MatrixXd lin(n - 1, 2);
    Eigen::VectorXd rhs(n - 1);
    const auto& a0 = anchors[0];
    for (Eigen::Index i = 1; i < n; ++i) {
        const auto& ai = anchors[static_cast<std::size_t>(i)];
        lin(i - 1, 0) = 2.0 * (ai.x - a0.x);
        lin(i - 1, 1) = 2.0 * (ai.y - a0.y);
        rhs(i - 1) = (ai.x * ai.x + ai.y * ai.y) - (a0.x * a0.x + a0.y * a0.y) -
                     (distances[static_cast<std::size_t>(i)] * distances[static_cast<std::size_t>(i)] -
                      distances[0] * distances[0]);
    }
    Eigen::Vector2d p = lin.colPivHouseholderQr().solve(rhs);

    double sse = detail::weighted_sse(p, anchors, distances, w);
    PositionFix fix;
    fix.anchors_used = anchors.size();
    bool converged = sse == 0.0;
    for (; !converged && fix.iterations < opts.max_iterations; ++fix.iterations) {
        Eigen::MatrixXd jac(n, 2);
        Eigen::VectorXd res(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& ai = anchors[static_cast<std::size_t>(i)];
            const double dx = p.x() - ai.x, dy = p.y() - ai.y, r = std::hypot(dx, dy);
            const double sw = std::sqrt(w[static_cast<std::size_t>(i)]);
            jac(i, 0) = r > 0.0 ? sw * dx / r : 0.0;
            jac(i, 1) = r > 0.0 ? sw * dy / r : 0.0;
            res(i) = sw * (r - distances[static_cast<std::size_t>(i)]);
        }
        const Eigen::Vector2d step = jac.colPivHouseholderQr().solve(-res);
        bool improved = false;
        for (double lambda = 1.0; lambda > 1e-10; lambda *= 0.5) {
            const Eigen::Vector2d trial = p + lambda * step;
            const double s = detail::weighted_sse(trial, anchors, distances, w);
            if (s < sse) {
                const double moved = (trial - p).norm();
                p = trial;
                sse = s;
                improved = true;
                if (moved <= 1e-9 * (1.0 + p.norm())) converged = true;
                break;
            }
        }
        if (!improved) converged = true;
    }

    fix.position = {p.x(), p.y()};
    double plain = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double r = distance(fix.position, anchors[i]) - distances[i];
        plain += r * r;
    }
    fix.residual_m = std::sqrt(plain / static_cast<double>(anchors.size()));
    if (!converged || !std::isfinite(fix.residual_m))
        throw ConvergenceError<PositionFix>("multilateration did not converge", fix);
    return fix;
}

}  // namespace lpwanloc::ranging
