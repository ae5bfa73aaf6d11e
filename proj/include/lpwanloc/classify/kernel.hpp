// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc::classify {

struct KernelParams {
    double sigma2 = 4.0;

    void validate() const {
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("kernel sigma2 must be > 0");
    }
};

inline double squared_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ValidationError("feature length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
    }
    return s;
}

/// exp(-|u - v|^2 / (2 sigma^2)), in (0, 1].
inline double gaussian_kernel(std::span<const double> u, std::span<const double> v, const KernelParams& params) {
    return std::exp(-squared_distance(u, v) / (2.0 * params.sigma2));
}

/// Substitutes a floor value for receivers that did not hear a message.
struct ImputationPolicy {
    double floor_dbm = -140.0;
};

inline FeatureVector impute(const MaskedFeatures& features, const ImputationPolicy& policy) {
    FeatureVector out(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) out[i] = features[i].value_or(policy.floor_dbm);
    return out;
}

inline std::vector<FeatureVector> impute(const std::vector<MaskedFeatures>& series, const ImputationPolicy& policy) {
    std::vector<FeatureVector> out;
    out.reserve(series.size());
    for (const auto& f : series) out.push_back(impute(f, policy));
    return out;
}

/// A dense feature vector with its class label.
struct LabeledSample {
    FeatureVector features;
    ClassId label;
};

using TrainingSet = std::vector<LabeledSample>;

}  // namespace lpwanloc::classify
