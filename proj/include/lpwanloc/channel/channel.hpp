// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>

#include "lpwanloc/channel/rng.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc::channel {

/// Log-distance path loss with log-normal shadowing.
struct ChannelParams {
    double ref_rssi_dbm = -61.5;
    double ref_distance_m = 10.0;
    double path_loss_exponent = 3.0;
    double shadowing_std_db = 2.0;
    bool quantize_to_integer_dbm = false;

    void validate() const {
        if (!(ref_distance_m > 0.0)) throw ValidationError("ref_distance_m must be > 0");
        if (!(path_loss_exponent > 0.0)) throw ValidationError("path_loss_exponent must be > 0");
        if (!(shadowing_std_db >= 0.0)) throw ValidationError("shadowing_std_db must be >= 0");
        if (!std::isfinite(ref_rssi_dbm)) throw ValidationError("ref_rssi_dbm must be finite");
    }
};

inline constexpr double kSpeedOfLight = 299792458.0;

struct ToaParams {
    double snr_linear = 10.0;
    double bandwidth_hz = 100.0;
    double speed_of_light_mps = kSpeedOfLight;

    void validate() const {
        if (!(snr_linear > 0.0)) throw ValidationError("snr_linear must be > 0");
        if (!(bandwidth_hz > 0.0)) throw ValidationError("bandwidth_hz must be > 0");
    }
};

/// Lower bound on the standard deviation of an unbiased RSSI range estimate:
/// (ln 10 / 10) * (sigma_sh / n_p) * d.
inline double crlb_rssi_std(double d, const ChannelParams& params) {
    if (params.path_loss_exponent == 0.0) throw ValidationError("undefined bound");
    if (!(d >= 0.0)) throw ValidationError("distance must be >= 0");
    return std::numbers::ln10 / 10.0 * (params.shadowing_std_db / params.path_loss_exponent) * d;
}

/// Lower bound on the standard deviation of a time-of-arrival range estimate:
/// c / (2 sqrt(2) pi sqrt(SNR) beta). Independent of distance.
inline double crlb_toa_std(const ToaParams& params) {
    params.validate();
    return params.speed_of_light_mps /
           (2.0 * std::numbers::sqrt2 * std::numbers::pi * std::sqrt(params.snr_linear) * params.bandwidth_hz);
}

inline double expected_rssi(double d, const ChannelParams& params) {
    params.validate();
    if (!(d >= params.ref_distance_m)) throw ValidationError("inside reference distance");
    return params.ref_rssi_dbm - 10.0 * params.path_loss_exponent * std::log10(d / params.ref_distance_m);
}

/// Rounds to the nearest integer dBm, halves away from zero.
inline double quantize_dbm(double rssi_dbm) { return std::round(rssi_dbm); }

/// expected_rssi(d) + N(0, sigma_sh^2) + offset_db, optionally quantized.
/// offset_db carries any static (location-dependent) loss the caller models.
inline double sample_rssi(double d, const ChannelParams& params, Rng& rng, double offset_db = 0.0) {
    double v = expected_rssi(d, params) + offset_db;
    if (params.shadowing_std_db > 0.0) v += rng.normal(0.0, params.shadowing_std_db);
    return params.quantize_to_integer_dbm ? quantize_dbm(v) : v;
}

}  // namespace lpwanloc::channel
