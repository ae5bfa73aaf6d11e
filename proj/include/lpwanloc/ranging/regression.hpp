// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc::ranging {

/// One (time-averaged) RSSI observed at a known distance.
struct RangeSample {
    double rssi_dbm = 0.0;
    double distance_m = 0.0;
};

enum class RegressionKind { polynomial, power };

inline std::string to_string(RegressionKind k) { return k == RegressionKind::polynomial ? "polynomial" : "power"; }

/// Distance as a function of x = -rssi_dbm.
///   polynomial: d = a_0 + a_1 x + ... + a_n x^n     (coefficients a_0..a_n)
///   power:      d = a x^b + c                       (coefficients a, b, c)
struct RegressionModel {
    RegressionKind kind = RegressionKind::polynomial;
    std::vector<double> coefficients;
    double fit_rms_m = 0.0;

    std::size_t order() const { return kind == RegressionKind::polynomial ? coefficients.size() - 1 : 0; }

    /// Raw model output, no clamping.
    double evaluate(double rssi_dbm) const {
        const double x = -rssi_dbm;
        if (kind == RegressionKind::power) return coefficients[0] * std::pow(x, coefficients[1]) + coefficients[2];
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
        return acc;
    }
};

/// Thrown when an iterative fit stops without converging; carries the best
/// iterate found.
template <typename Best>
class ConvergenceError : public RuntimeError {
public:
    ConvergenceError(const std::string& what, Best best) : RuntimeError(what), best_(std::move(best)) {}
    const Best& best() const noexcept { return best_; }

private:
    Best best_;
};

/// sqrt(mean((estimate - truth)^2)).
inline double rms_error(std::span<const double> estimates, std::span<const double> truths) {
    if (estimates.size() != truths.size()) throw ValidationError("rms_error: length mismatch");
    if (estimates.empty()) throw ValidationError("rms_error: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double e = estimates[i] - truths[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(estimates.size()));
}

inline double fit_rms(const RegressionModel& model, std::span<const RangeSample> samples) {
    std::vector<double> est, truth;
    for (const auto& s : samples) {
        est.push_back(model.evaluate(s.rssi_dbm));
        truth.push_back(s.distance_m);
    }
    return rms_error(est, truth);
}

namespace detail {

inline void validate_samples(std::span<const RangeSample> samples) {
    for (const auto& s : samples) {
        require_finite(s.rssi_dbm, "rssi_dbm");
        if (!(s.distance_m > 0.0) || !std::isfinite(s.distance_m)) throw ValidationError("distance_m must be > 0");
    }
}

/// Least squares with columns rescaled by powers of two (exact in floating
/// point) so that a Vandermonde design stays well conditioned.
inline Eigen::VectorXd scaled_least_squares(Eigen::MatrixXd design, const Eigen::VectorXd& rhs, Eigen::Index* rank) {
    Eigen::VectorXd scale(design.cols());
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        int e = 0;
        std::frexp(design.col(j).cwiseAbs().maxCoeff(), &e);
        scale(j) = std::ldexp(1.0, -e);
        design.col(j) *= scale(j);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-12);
    if (rank) *rank = qr.rank();
    return qr.solve(rhs).cwiseProduct(scale);
}

}  // namespace detail

/// Least-squares polynomial of the given order in x = -rssi_dbm.
inline RegressionModel fit_polynomial(std::span<const RangeSample> samples, std::size_t order = 3) {
    if (order < 1) throw ValidationError("polynomial order must be >= 1");
    detail::validate_samples(samples);
    std::set<double> distinct;
    for (const auto& s : samples) distinct.insert(s.rssi_dbm);
    if (distinct.size() < order + 1) throw ValidationError("underdetermined fit");

    const auto m = static_cast<Eigen::Index>(samples.size());
    const auto cols = static_cast<Eigen::Index>(order + 1);
    Eigen::MatrixXd design(m, cols);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double x = -samples[static_cast<std::size_t>(i)].rssi_dbm;
        double p = 1.0;
        for (Eigen::Index j = 0; j < cols; ++j, p *= x) design(i, j) = p;
        rhs(i) = samples[static_cast<std::size_t>(i)].distance_m;
    }
    Eigen::Index rank = 0;
    const Eigen::VectorXd coef = detail::scaled_least_squares(design, rhs, &rank);
    if (rank < cols) throw ValidationError("underdetermined fit");

    RegressionModel model;
    model.kind = RegressionKind::polynomial;
    model.coefficients.assign(coef.data(), coef.data() + coef.size());
    model.fit_rms_m = fit_rms(model, samples);
    return model;
}

struct PowerFitOptions {
    /// Fit d = a x^b (c fixed at 0) instead of d = a x^b + c.
    bool two_parameter = false;
    std::size_t max_iterations = 200;
};

namespace detail {

/// For fixed exponent b the power model is linear in (a, c).
inline RegressionModel power_for_exponent(std::span<const RangeSample> samples, double b, bool two_parameter) {
    const auto m = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd design(m, two_parameter ? 1 : 2);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        design(i, 0) = std::pow(-samples[static_cast<std::size_t>(i)].rssi_dbm, b);
        if (!two_parameter) design(i, 1) = 1.0;
        rhs(i) = samples[static_cast<std::size_t>(i)].distance_m;
    }
    const Eigen::VectorXd coef = scaled_least_squares(design, rhs, nullptr);
    RegressionModel model{RegressionKind::power, {coef(0), b, two_parameter ? 0.0 : coef(1)}, 0.0};
    model.fit_rms_m = fit_rms(model, samples);
    return model;
}

inline double sse(const RegressionModel& model, std::span<const RangeSample> samples) {
    double s = 0.0;
    for (const auto& p : samples) {
        const double r = model.evaluate(p.rssi_dbm) - p.distance_m;
        s += r * r;
    }
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Nonlinear least squares for d = a x^b + c with x = -rssi_dbm > 0.
///
/// The start point is the better (lower RMS) of two candidates: the
/// log-log initialization (c0 = min distance, b0/a0 from the slope and
/// intercept of log(d - c0 + eps) against log x), and the best exponent on a
/// grid over [-8, 8] with (a, c) solved linearly. Gauss-Newton then runs
/// with step halving for at most max_iterations iterations.
inline RegressionModel fit_power(std::span<const RangeSample> samples, const PowerFitOptions& opts = {}) {
    detail::validate_samples(samples);
    if (samples.size() < 4) throw ValidationError("power fit needs at least 4 samples");
    for (const auto& s : samples)
        if (!(-s.rssi_dbm > 0.0)) throw ValidationError("power fit needs rssi_dbm < 0");
    std::set<double> distinct;
    for (const auto& s : samples) distinct.insert(s.rssi_dbm);
    if (distinct.size() < 3) throw ValidationError("underdetermined fit");

    const bool two = opts.two_parameter;
    constexpr double eps = 1e-3;

    // Log-log start.
    double c0 = two ? 0.0 : std::numeric_limits<double>::infinity();
    if (!two)
        for (const auto& s : samples) c0 = std::min(c0, s.distance_m);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(samples.size());
    for (const auto& s : samples) {
        const double lx = std::log(-s.rssi_dbm), ly = std::log(s.distance_m - c0 + eps);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    const double b0 = denom != 0.0 ? (n * sxy - sx * sy) / denom : 1.0;
    RegressionModel start{RegressionKind::power, {std::exp((sy - b0 * sx) / n), b0, c0}, 0.0};
    double start_sse = detail::sse(start, samples);

    for (double b = -8.0; b <= 8.0 + 1e-9; b += 0.05) {
        const auto cand = detail::power_for_exponent(samples, b, two);
        const double s = detail::sse(cand, samples);
        if (s < start_sse) {
            start = cand;
            start_sse = s;
        }
    }

    // Iterate on (A, b, c) with a x^b = A (x / xg)^b, xg the geometric mean of
    // x. Steep fits have a tiny a that is nearly collinear with b; the scaled
    // amplitude A stays O(distance) and keeps the normal equations well
    // conditioned.
    double log_xg = 0.0;
    for (const auto& s : samples) log_xg += std::log(-s.rssi_dbm);
    log_xg /= n;
    auto to_model = [&](const Eigen::Vector3d& t) {
        return RegressionModel{RegressionKind::power, {t(0) * std::exp(-t(1) * log_xg), t(1), t(2)}, 0.0};
    };
    Eigen::Vector3d theta(start.coefficients[0] * std::exp(start.coefficients[1] * log_xg), start.coefficients[1],
                          start.coefficients[2]);
    RegressionModel best = start;
    double best_sse = start_sse;
    const std::size_t params = two ? 2 : 3;
    const auto m = static_cast<Eigen::Index>(samples.size());
    bool converged = false;
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        if (best_sse == 0.0) {
            converged = true;
            break;
        }
        Eigen::MatrixXd jac(m, static_cast<Eigen::Index>(params));
        Eigen::VectorXd res(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            const double lu = std::log(-s.rssi_dbm) - log_xg, ub = std::exp(theta(1) * lu);
            jac(i, 0) = ub;
            jac(i, 1) = theta(0) * ub * lu;
            if (!two) jac(i, 2) = 1.0;
            res(i) = best.evaluate(s.rssi_dbm) - s.distance_m;
        }
        const Eigen::VectorXd step = detail::scaled_least_squares(jac, -res, nullptr);
        bool improved = false;
        for (double lambda = 1.0; lambda > 1e-10; lambda *= 0.5) {
            Eigen::Vector3d trial_theta = theta;
            for (std::size_t p = 0; p < params; ++p) trial_theta(static_cast<Eigen::Index>(p)) += lambda * step(static_cast<Eigen::Index>(p));
            const auto trial = to_model(trial_theta);
            const double s = detail::sse(trial, samples);
            if (s < best_sse) {
                const double rel = (best_sse - s) / best_sse;
                theta = trial_theta;
                best = trial;
                best_sse = s;
                improved = true;
                if (rel < 1e-13) converged = true;
                break;
            }
        }
        // No descent along the Gauss-Newton direction: stationary to machine precision.
        if (!improved || converged) {
            converged = true;
            break;
        }
    }
    best.fit_rms_m = std::sqrt(best_sse / n);
    if (!converged || !std::isfinite(best.fit_rms_m))
        throw ConvergenceError<RegressionModel>("power fit did not converge", best);
    return best;
}

/// Distances beyond this are outside the range where RSSI regression is used.
inline constexpr double kRegressionRangeLimitM = 200.0;

struct DistanceEstimate {
    double meters = 0.0;
    /// Set when the estimate exceeds kRegressionRangeLimitM (not an error).
    bool beyond_range_limit = false;
};

/// Evaluates the fitted map at the query RSSI, clamped below at 0.
inline DistanceEstimate estimate_distance(const RegressionModel& model, double rssi_dbm) {
    const double d = std::max(0.0, model.evaluate(rssi_dbm));
    return {d, d > kRegressionRangeLimitM};
}

}  // namespace lpwanloc::ranging
