// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lpwanloc/error.hpp"

namespace lpwanloc {

using NodeId = std::string;
using ReceiverId = std::string;
using ClassId = std::string;

/// Dense feature vector, one RSSI value (dBm) per receiver.
using FeatureVector = std::vector<double>;

/// Feature vector where a receiver that did not hear the message is std::nullopt.
using MaskedFeatures = std::vector<std::optional<double>>;

/// Planar local frame, meters.
struct Position {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// One received uplink.
struct RssiMessage {
    NodeId node_id;
    ReceiverId receiver_id;
    std::uint64_t time_index = 0;
    double rssi_dbm = 0.0;

    friend bool operator==(const RssiMessage&, const RssiMessage&) = default;
};

/// A GPS node and the region it represents. The class id doubles as the
/// GPS node's id in message streams.
struct AnchorClass {
    ClassId class_id;
    Position anchor_position;
    std::vector<MaskedFeatures> training_fingerprints;
};

struct ClassificationOutcome {
    ClassId predicted_class;
    ClassId true_class;
    /// Squared distance between the mean training fingerprints of the
    /// predicted and true classes (dB^2).
    double feature_residual = 0.0;
    /// Distance between predicted and true anchors (m).
    double geographic_error = 0.0;
};

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + " must be finite");
}

}  // namespace lpwanloc
