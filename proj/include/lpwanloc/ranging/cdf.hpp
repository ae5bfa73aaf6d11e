// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "lpwanloc/error.hpp"

namespace lpwanloc::ranging {

struct CdfPoint {
    double error_m = 0.0;
    double probability = 0.0;
};

/// Empirical CDF: sorted errors with probability k/M at the k-th (1-based)
/// sorted value. Tied errors appear once per sample; the last carries the
/// full mass.
inline std::vector<CdfPoint> empirical_cdf(std::span<const double> errors) {
    if (errors.empty()) throw ValidationError("empirical_cdf: empty input");
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<CdfPoint> out(sorted.size());
    const double m = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) out[i] = {sorted[i], static_cast<double>(i + 1) / m};
    return out;
}

/// Right-continuous evaluation F(x) = P(error <= x).
inline double cdf_at(std::span<const CdfPoint> cdf, double x) {
    double p = 0.0;
    for (const auto& pt : cdf) {
        if (pt.error_m > x) break;
        p = pt.probability;
    }
    return p;
}

}  // namespace lpwanloc::ranging
