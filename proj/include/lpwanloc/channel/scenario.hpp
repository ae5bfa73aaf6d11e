// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lpwanloc/channel/channel.hpp"
#include "lpwanloc/channel/rng.hpp"
#include "lpwanloc/core/types.hpp"

namespace lpwanloc::channel {

enum class LinkKind { long_range, peer };

/// Channel of one link class. On top of the per-message shadowing in
/// `params`, each receiver sees a static, spatially correlated shadowing
/// field over transmitter positions with covariance
/// static_std^2 * exp(-|p - q| / decorrelation_m).
struct LinkChannel {
    ChannelParams params;
    double static_shadowing_std_db = 0.0;
    double decorrelation_m = 50.0;
    double hearing_radius_m = 40000.0;

    static LinkChannel long_range_default() {
        LinkChannel c;
        c.params = {.ref_rssi_dbm = -90.0,
                    .ref_distance_m = 5000.0,
                    .path_loss_exponent = 3.0,
                    .shadowing_std_db = 4.0,
                    .quantize_to_integer_dbm = true};
        c.hearing_radius_m = 40000.0;
        return c;
    }
    static LinkChannel peer_default() {
        LinkChannel c;
        c.params = {.ref_rssi_dbm = -61.5,
                    .ref_distance_m = 10.0,
                    .path_loss_exponent = 3.0,
                    .shadowing_std_db = 2.0,
                    .quantize_to_integer_dbm = false};
        c.hearing_radius_m = 500.0;
        return c;
    }
};

struct Transmitter {
    NodeId id;
    Position position;
    std::size_t messages = 100;
    /// Extra loss on every link of this transmitter (obstruction, indoor site).
    double site_loss_db = 0.0;
    /// Per-message shadowing std for this transmitter's links; the link
    /// class value applies when unset.
    std::optional<double> shadowing_std_db;
};

struct Receiver {
    ReceiverId id;
    Position position;
    LinkKind link = LinkKind::long_range;
    /// Overrides the link class's hearing radius when set.
    std::optional<double> hearing_radius_m;
};

struct Deployment {
    std::vector<Transmitter> transmitters;
    std::vector<Receiver> receivers;
    LinkChannel long_range = LinkChannel::long_range_default();
    LinkChannel peer = LinkChannel::peer_default();

    const LinkChannel& channel_for(LinkKind kind) const { return kind == LinkKind::peer ? peer : long_range; }

    std::vector<ReceiverId> receiver_ids() const {
        std::vector<ReceiverId> ids;
        for (const auto& r : receivers) ids.push_back(r.id);
        return ids;
    }
};

struct GeneratedData {
    std::vector<RssiMessage> messages;
    std::map<NodeId, Position> truth;
};

namespace detail {

/// Static shadowing draws for every transmitter as seen by one receiver.
inline std::vector<double> static_field(const std::vector<Transmitter>& tx, const LinkChannel& ch, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(tx.size());
    std::vector<double> out(tx.size(), 0.0);
    if (ch.static_shadowing_std_db <= 0.0 || n == 0) return out;
    Eigen::MatrixXd cov(n, n);
    const double var = ch.static_shadowing_std_db * ch.static_shadowing_std_db;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = distance(tx[static_cast<std::size_t>(i)].position, tx[static_cast<std::size_t>(j)].position);
            cov(i, j) = ch.decorrelation_m > 0.0 ? var * std::exp(-d / ch.decorrelation_m) : (i == j ? var : 0.0);
        }
    cov.diagonal().array() += 1e-9 * var;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw RuntimeError("static shadowing covariance is not positive definite");
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
    const Eigen::VectorXd s = llt.matrixL() * z;
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = s(i);
    return out;
}

}  // namespace detail

/// Simulates every transmitter's messages at every receiver within hearing
/// radius. Time indices run 1..messages per transmitter. Per-message noise of
/// transmitter `id` is drawn from derive_seed(seed, "tx/" + id); the static
/// field of receiver `id` from derive_seed(seed, "static/" + id). Links
/// shorter than the reference distance are evaluated at the reference
/// distance.
inline GeneratedData generate_scenario(const Deployment& dep, std::uint64_t seed) {
    if (dep.receivers.empty()) throw ValidationError("scenario has no receivers");
    dep.long_range.params.validate();
    dep.peer.params.validate();
    std::set<std::string> ids;
    for (const auto& t : dep.transmitters)
        if (!ids.insert(t.id).second) throw ValidationError("duplicate transmitter id '" + t.id + "'");
    std::set<std::string> rids;
    for (const auto& r : dep.receivers)
        if (!rids.insert(r.id).second) throw ValidationError("duplicate receiver id '" + r.id + "'");

    std::vector<std::vector<double>> fields;
    fields.reserve(dep.receivers.size());
    for (const auto& r : dep.receivers) {
        Rng rng(derive_seed(seed, "static/" + r.id));
        fields.push_back(detail::static_field(dep.transmitters, dep.channel_for(r.link), rng));
    }

    GeneratedData out;
    for (std::size_t i = 0; i < dep.transmitters.size(); ++i) {
        const auto& tx = dep.transmitters[i];
        out.truth.emplace(tx.id, tx.position);
        Rng rng(derive_seed(seed, "tx/" + tx.id));
        for (std::size_t m = 0; m < tx.messages; ++m) {
            for (std::size_t r = 0; r < dep.receivers.size(); ++r) {
                const auto& rx = dep.receivers[r];
                const auto& ch = dep.channel_for(rx.link);
                const double d = distance(tx.position, rx.position);
                if (d > rx.hearing_radius_m.value_or(ch.hearing_radius_m)) continue;
                ChannelParams params = ch.params;
                if (tx.shadowing_std_db) params.shadowing_std_db = *tx.shadowing_std_db;
                const double rssi =
                    sample_rssi(std::max(d, params.ref_distance_m), params, rng, fields[r][i] - tx.site_loss_db);
                out.messages.push_back({tx.id, rx.id, static_cast<std::uint64_t>(m + 1), rssi});
            }
        }
    }
    return out;
}

}  // namespace lpwanloc::channel
