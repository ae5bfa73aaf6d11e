// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc {

/// RSSI tensor indexed [time row][receiver][anchor class]. Row t of class l is
/// the t-th smallest time index that class l transmitted; rows past a class's
/// own message count are masked.
class FingerprintDatabase {
public:
    FingerprintDatabase() = default;

    FingerprintDatabase(std::vector<ReceiverId> receivers, std::vector<ClassId> classes, std::size_t rows)
        : receiver_ids_(std::move(receivers)),
          class_ids_(std::move(classes)),
          rows_(rows),
          values_(rows_ * receiver_ids_.size() * class_ids_.size()),
          row_time_(class_ids_.size(), std::vector<std::optional<std::uint64_t>>(rows_)) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t receiver_count() const noexcept { return receiver_ids_.size(); }
    std::size_t class_count() const noexcept { return class_ids_.size(); }

    const std::vector<ReceiverId>& receiver_ids() const noexcept { return receiver_ids_; }
    const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }

    const std::optional<double>& at(std::size_t t, std::size_t n, std::size_t l) const {
        return values_.at(index(t, n, l));
    }
    void set(std::size_t t, std::size_t n, std::size_t l, double rssi_dbm) {
        require_finite(rssi_dbm, "rssi_dbm");
        values_.at(index(t, n, l)) = rssi_dbm;
    }

    /// Time index stored in row t for class l, if class l has that many rows.
    const std::optional<std::uint64_t>& row_time_index(std::size_t t, std::size_t l) const {
        return row_time_.at(l).at(t);
    }
    void set_row_time_index(std::size_t t, std::size_t l, std::uint64_t time_index) {
        row_time_.at(l).at(t) = time_index;
    }

    /// Rows of class l that carry a time index, as masked feature vectors.
    std::vector<MaskedFeatures> class_rows(std::size_t l) const {
        std::vector<MaskedFeatures> out;
        for (std::size_t t = 0; t < rows_; ++t) {
            if (!row_time_.at(l)[t]) continue;
            MaskedFeatures row(receiver_count());
            for (std::size_t n = 0; n < receiver_count(); ++n) row[n] = at(t, n, l);
            out.push_back(std::move(row));
        }
        return out;
    }

    std::size_t class_index(const ClassId& id) const {
        auto it = std::find(class_ids_.begin(), class_ids_.end(), id);
        if (it == class_ids_.end()) throw ValidationError("unknown class id '" + id + "'");
        return static_cast<std::size_t>(it - class_ids_.begin());
    }

private:
    std::size_t index(std::size_t t, std::size_t n, std::size_t l) const {
        if (t >= rows_ || n >= receiver_count() || l >= class_count())
            throw std::out_of_range("fingerprint index out of range");
        return (t * receiver_count() + n) * class_count() + l;
    }

    std::vector<ReceiverId> receiver_ids_;
    std::vector<ClassId> class_ids_;
    std::size_t rows_ = 0;
    std::vector<std::optional<double>> values_;
    std::vector<std::vector<std::optional<std::uint64_t>>> row_time_;
};

/// Per-node time series: messages of one node ordered by time index, one
/// masked feature vector per distinct time index.
inline std::vector<MaskedFeatures> node_series(const std::vector<RssiMessage>& messages, const NodeId& node,
                                               const std::vector<ReceiverId>& receivers) {
    std::map<ReceiverId, std::size_t> column;
    for (std::size_t n = 0; n < receivers.size(); ++n) column.emplace(receivers[n], n);
    std::map<std::uint64_t, MaskedFeatures> by_time;
    for (const auto& m : messages) {
        if (m.node_id != node) continue;
        auto c = column.find(m.receiver_id);
        if (c == column.end()) continue;
        auto& row = by_time.try_emplace(m.time_index, receivers.size()).first->second;
        if (row[c->second]) throw ValidationError("duplicate sample");
        row[c->second] = m.rssi_dbm;
    }
    std::vector<MaskedFeatures> out;
    out.reserve(by_time.size());
    for (auto& [t, row] : by_time) out.push_back(std::move(row));
    return out;
}

inline FingerprintDatabase build_fingerprint_db(const std::vector<RssiMessage>& messages,
                                                const std::vector<AnchorClass>& anchors,
                                                const std::vector<ReceiverId>& receivers) {
    if (messages.empty()) throw ValidationError("no training data");
    if (receivers.empty()) throw ValidationError("receiver list is empty");
    if (anchors.empty()) throw ValidationError("anchor list is empty");

    std::map<ClassId, std::size_t> class_col;
    std::vector<ClassId> class_ids;
    for (const auto& a : anchors) {
        if (!class_col.emplace(a.class_id, class_ids.size()).second)
            throw ValidationError("duplicate class id '" + a.class_id + "'");
        class_ids.push_back(a.class_id);
    }
    std::map<ReceiverId, std::size_t> recv_col;
    for (std::size_t n = 0; n < receivers.size(); ++n)
        if (!recv_col.emplace(receivers[n], n).second)
            throw ValidationError("duplicate receiver id '" + receivers[n] + "'");

    std::set<std::tuple<NodeId, ReceiverId, std::uint64_t>> seen;
    std::vector<std::set<std::uint64_t>> times(class_ids.size());
    for (const auto& m : messages) {
        require_finite(m.rssi_dbm, "rssi_dbm");
        auto c = class_col.find(m.node_id);
        if (c == class_col.end()) throw ValidationError("message from unknown anchor '" + m.node_id + "'");
        if (!recv_col.count(m.receiver_id))
            throw ValidationError("message to unknown receiver '" + m.receiver_id + "'");
        if (!seen.emplace(m.node_id, m.receiver_id, m.time_index).second) throw ValidationError("duplicate sample");
        times[c->second].insert(m.time_index);
    }

    std::size_t rows = 0;
    for (const auto& s : times) rows = std::max(rows, s.size());

    FingerprintDatabase db(receivers, class_ids, rows);
    std::vector<std::map<std::uint64_t, std::size_t>> row_of(class_ids.size());
    for (std::size_t l = 0; l < class_ids.size(); ++l) {
        std::size_t t = 0;
        for (auto ti : times[l]) {
            row_of[l][ti] = t;
            db.set_row_time_index(t, l, ti);
            ++t;
        }
    }
    for (const auto& m : messages) {
        std::size_t l = class_col.at(m.node_id);
        db.set(row_of[l].at(m.time_index), recv_col.at(m.receiver_id), l, m.rssi_dbm);
    }
    return db;
}

/// Inverse of build_fingerprint_db: one message per unmasked tensor entry.
inline std::vector<RssiMessage> flatten(const FingerprintDatabase& db) {
    std::vector<RssiMessage> out;
    for (std::size_t l = 0; l < db.class_count(); ++l)
        for (std::size_t t = 0; t < db.rows(); ++t) {
            const auto& ti = db.row_time_index(t, l);
            if (!ti) continue;
            for (std::size_t n = 0; n < db.receiver_count(); ++n)
                if (const auto& v = db.at(t, n, l))
                    out.push_back({db.class_ids()[l], db.receiver_ids()[n], *ti, *v});
        }
    return out;
}

/// Fills each anchor's training fingerprints from its rows in the database.
inline std::vector<AnchorClass> with_training_rows(std::vector<AnchorClass> anchors, const FingerprintDatabase& db) {
    for (auto& a : anchors) a.training_fingerprints = db.class_rows(db.class_index(a.class_id));
    return anchors;
}

/// Replaces consecutive non-overlapping groups of k vectors with their mean.
/// A trailing group shorter than k is dropped. Masked entries are left out of
/// the mean; an output entry is masked only when all k inputs are masked.
inline std::vector<MaskedFeatures> average_k_by_k(const std::vector<MaskedFeatures>& series, std::size_t k) {
    if (k == 0) throw ValidationError("averaging factor k must be >= 1");
    std::vector<MaskedFeatures> out;
    const std::size_t groups = series.size() / k;
    out.reserve(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t width = series[g * k].size();
        MaskedFeatures mean(width);
        for (std::size_t f = 0; f < width; ++f) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i = g * k; i < (g + 1) * k; ++i) {
                if (series[i].size() != width) throw ValidationError("feature length mismatch in series");
                if (series[i][f]) {
                    sum += *series[i][f];
                    ++count;
                }
            }
            if (count > 0) mean[f] = sum / static_cast<double>(count);
        }
        out.push_back(std::move(mean));
    }
    return out;
}

/// Dense overload.
inline std::vector<FeatureVector> average_k_by_k(const std::vector<FeatureVector>& series, std::size_t k) {
    std::vector<MaskedFeatures> masked;
    masked.reserve(series.size());
    for (const auto& v : series) masked.emplace_back(v.begin(), v.end());
    std::vector<FeatureVector> out;
    for (auto& row : average_k_by_k(masked, k)) {
        FeatureVector dense(row.size());
        std::transform(row.begin(), row.end(), dense.begin(), [](const auto& v) { return *v; });
        out.push_back(std::move(dense));
    }
    return out;
}

/// Minimum pairwise distance between anchor positions (m).
inline double class_separation(const std::vector<AnchorClass>& anchors) {
    if (anchors.size() < 2) throw ValidationError("separation undefined");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < anchors.size(); ++i)
        for (std::size_t j = i + 1; j < anchors.size(); ++j)
            best = std::min(best, distance(anchors[i].anchor_position, anchors[j].anchor_position));
    return best;
}

inline const AnchorClass& find_anchor(const std::vector<AnchorClass>& anchors, const ClassId& id) {
    auto it = std::find_if(anchors.begin(), anchors.end(), [&](const AnchorClass& a) { return a.class_id == id; });
    if (it == anchors.end()) throw ValidationError("unknown class id '" + id + "'");
    return *it;
}

inline double geographic_error(const ClassId& predicted, const ClassId& truth, const std::vector<AnchorClass>& anchors) {
    const auto& p = find_anchor(anchors, predicted);
    const auto& t = find_anchor(anchors, truth);
    if (predicted == truth) return 0.0;
    return distance(p.anchor_position, t.anchor_position);
}

}  // namespace lpwanloc
