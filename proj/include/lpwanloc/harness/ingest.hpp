// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"
#include "lpwanloc/harness/csv.hpp"

namespace lpwanloc::harness {

inline const std::vector<std::string>& message_columns() {
    static const std::vector<std::string> cols{"node_id", "receiver_id", "time_index", "rssi_dbm"};
    return cols;
}

namespace detail {

inline void require_header(const CsvDocument& doc, const std::vector<std::string>& expected, const std::string& source) {
    if (doc.header != expected) {
        std::string want;
        for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
        throw ValidationError(source + ":" + std::to_string(doc.header_line) + ": header must be '" + want + "'");
    }
}

}  // namespace detail

/// Parses a message CSV held in memory. When `known_receivers` is non-empty,
/// rows naming any other receiver are rejected.
inline std::vector<RssiMessage> parse_messages(std::string_view text, const std::string& source,
                                               const std::set<ReceiverId>& known_receivers = {}) {
    const auto doc = parse_csv(text, source);
    detail::require_header(doc, message_columns(), source);
    if (doc.rows.empty()) throw ValidationError(source + ": empty file (no data rows)");
    std::vector<RssiMessage> out;
    out.reserve(doc.rows.size());
    for (const auto& row : doc.rows) {
        const auto& f = row.fields;
        auto fail = [&](std::size_t col, const std::string& what) {
            throw ValidationError(csv_location(source, row.line, col, message_columns()[col]) + ": " + what);
        };
        RssiMessage m;
        m.node_id = f[0];
        m.receiver_id = f[1];
        if (m.node_id.empty()) fail(0, "empty id");
        if (m.receiver_id.empty()) fail(1, "empty id");
        if (!known_receivers.empty() && !known_receivers.count(m.receiver_id))
            fail(1, "unknown receiver '" + m.receiver_id + "'");
        if (!parse_u64(f[2], m.time_index)) fail(2, "'" + f[2] + "' is not a non-negative integer");
        if (!parse_double(f[3], m.rssi_dbm)) fail(3, "'" + f[3] + "' is not a finite number");
        out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<RssiMessage> ingest_messages(const std::string& path,
                                                const std::set<ReceiverId>& known_receivers = {}) {
    return parse_messages(read_text_file(path), path, known_receivers);
}

/// Writes messages in the ingest schema; RSSI values round-trip exactly.
inline void export_messages(const std::string& path, const std::vector<RssiMessage>& messages) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write '" + path + "'");
    out << "node_id,receiver_id,time_index,rssi_dbm\n";
    for (const auto& m : messages)
        out << m.node_id << ',' << m.receiver_id << ',' << m.time_index << ',' << format_exact(m.rssi_dbm) << '\n';
    if (!out) throw RuntimeError("write failed for '" + path + "'");
}

enum class PositionKind { node, anchor, receiver };

struct PositionRecord {
    std::string id;
    PositionKind kind = PositionKind::node;
    Position position;
};

inline constexpr double kEarthRadiusM = 6371008.8;

/// Positions CSV `id,kind,x_m,y_m,lat,lon`. Rows with empty x_m/y_m take
/// their position from lat/lon by an equirectangular projection about the
/// mean latitude/longitude of those rows.
inline std::vector<PositionRecord> ingest_positions(const std::string& path) {
    static const std::vector<std::string> cols{"id", "kind", "x_m", "y_m", "lat", "lon"};
    const auto doc = read_csv(path);
    detail::require_header(doc, cols, path);
    if (doc.rows.empty()) throw ValidationError(path + ": empty file (no data rows)");

    struct Geo {
        std::size_t index;
        double lat, lon;
    };
    std::vector<PositionRecord> out;
    std::vector<Geo> geo;
    std::set<std::string> ids;
    for (const auto& row : doc.rows) {
        const auto& f = row.fields;
        auto fail = [&](std::size_t col, const std::string& what) {
            throw ValidationError(csv_location(path, row.line, col, cols[col]) + ": " + what);
        };
        PositionRecord r;
        r.id = f[0];
        if (r.id.empty()) fail(0, "empty id");
        if (!ids.insert(r.id).second) fail(0, "duplicate id '" + r.id + "'");
        if (f[1] == "node") r.kind = PositionKind::node;
        else if (f[1] == "anchor") r.kind = PositionKind::anchor;
        else if (f[1] == "receiver") r.kind = PositionKind::receiver;
        else fail(1, "kind must be node, anchor or receiver");
        if (!f[2].empty() || !f[3].empty()) {
            if (!parse_double(f[2], r.position.x)) fail(2, "'" + f[2] + "' is not a finite number");
            if (!parse_double(f[3], r.position.y)) fail(3, "'" + f[3] + "' is not a finite number");
        } else {
            double lat = 0, lon = 0;
            if (!parse_double(f[4], lat) || std::abs(lat) > 90.0) fail(4, "latitude required when x_m/y_m are absent");
            if (!parse_double(f[5], lon) || std::abs(lon) > 180.0) fail(5, "longitude required when x_m/y_m are absent");
            geo.push_back({out.size(), lat, lon});
        }
        out.push_back(std::move(r));
    }
    if (!geo.empty()) {
        double lat0 = 0, lon0 = 0;
        for (const auto& g : geo) {
            lat0 += g.lat;
            lon0 += g.lon;
        }
        lat0 /= static_cast<double>(geo.size());
        lon0 /= static_cast<double>(geo.size());
        const double rad = std::numbers::pi / 180.0;
        for (const auto& g : geo)
            out[g.index].position = {kEarthRadiusM * (g.lon - lon0) * rad * std::cos(lat0 * rad),
                                     kEarthRadiusM * (g.lat - lat0) * rad};
    }
    return out;
}

}  // namespace lpwanloc::harness
