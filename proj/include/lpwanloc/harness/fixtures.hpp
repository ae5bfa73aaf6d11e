// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lpwanloc/channel/rng.hpp"
#include "lpwanloc/error.hpp"
#include "lpwanloc/harness/csv.hpp"

#ifndef LPWANLOC_FIXTURE_DIR
#define LPWANLOC_FIXTURE_DIR "data/fixtures"
#endif

namespace lpwanloc::harness {

/// A digitized data table shipped with the toolkit.
struct Fixture {
    std::string name;
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(std::string_view column) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == column) return i;
        throw ValidationError("fixture '" + name + "' has no column '" + std::string(column) + "'");
    }

    double number(std::size_t row, std::string_view column) const {
        double v = 0.0;
        const auto& s = rows.at(row).at(column_index(column));
        if (!parse_double(s, v))
            throw ValidationError("fixture '" + name + "' row " + std::to_string(row) + ": '" + s + "' is not numeric");
        return v;
    }

    const std::string& text(std::size_t row, std::string_view column) const {
        return rows.at(row).at(column_index(column));
    }
};

struct FixtureInfo {
    std::string_view name;
    /// FNV-1a 64 of the file bytes.
    std::uint64_t checksum;
};

inline constexpr std::array<FixtureInfo, 5> kFixtures{{
    {"fig2-histograms", 0xbd36fbd8f7bdc24eULL},
    {"fig4-sigma-curves", 0xd519724c1965b058ULL},
    {"fig5-training-curves", 0x8c8c666fad1918d9ULL},
    {"fig6-rssi-vs-distance", 0xa6bebf5cf5114b63ULL},
    {"fig7-cdfs", 0x9d96c96edb8525c2ULL},
}};

inline std::vector<std::string> fixture_names() {
    std::vector<std::string> out;
    for (const auto& f : kFixtures) out.emplace_back(f.name);
    return out;
}

/// $LPWANLOC_FIXTURE_DIR if set, else the directory configured at build time.
inline std::filesystem::path fixture_dir() {
    if (const char* env = std::getenv("LPWANLOC_FIXTURE_DIR"); env && *env) return env;
    return LPWANLOC_FIXTURE_DIR;
}

/// Loads a fixture by name and verifies its checksum.
inline Fixture load_fixture(const std::string& name) {
    const FixtureInfo* info = nullptr;
    for (const auto& f : kFixtures)
        if (f.name == name) info = &f;
    if (!info) {
        std::string list;
        for (const auto& n : fixture_names()) list += (list.empty() ? "" : ", ") + n;
        throw ValidationError("unknown fixture '" + name + "' (available: " + list + ")");
    }
    const auto path = (fixture_dir() / (name + ".csv")).string();
    const std::string bytes = read_text_file(path);
    if (fnv1a64(bytes) != info->checksum) throw RuntimeError("fixture '" + path + "' failed checksum verification");
    auto doc = parse_csv(bytes, path);
    Fixture fx;
    fx.name = name;
    fx.comments = std::move(doc.comments);
    fx.columns = std::move(doc.header);
    for (auto& r : doc.rows) fx.rows.push_back(std::move(r.fields));
    return fx;
}

}  // namespace lpwanloc::harness
