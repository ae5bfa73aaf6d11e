// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lpwanloc/error.hpp"

namespace lpwanloc::harness {

/// Minimal comma-separated reader: no quoting, '#' comment lines and blank
/// lines skipped, trailing CR stripped. Fields keep their 1-based line number.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

struct CsvDocument {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::size_t header_line = 0;
    std::vector<CsvRow> rows;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline CsvDocument parse_csv(std::string_view text, const std::string& source) {
    CsvDocument doc;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (doc.header.empty()) doc.comments.emplace_back(line);
            continue;
        }
        if (doc.header.empty()) {
            doc.header = split_csv_line(line);
            doc.header_line = line_no;
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != doc.header.size())
            throw ValidationError(source + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(doc.header.size()) + " columns, found " +
                                  std::to_string(fields.size()));
        doc.rows.push_back({line_no, std::move(fields)});
    }
    if (doc.header.empty()) throw ValidationError(source + ": empty file");
    return doc;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline CsvDocument read_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

/// Error text "source:line, column c (name): what".
inline std::string csv_location(const std::string& source, std::size_t line, std::size_t column,
                                const std::string& name) {
    return source + ":" + std::to_string(line) + ", column " + std::to_string(column + 1) + " (" + name + ")";
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

/// Shortest text that parses back to exactly `v`.
inline std::string format_exact(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw RuntimeError("number formatting failed");
    return std::string(buf, ptr);
}

}  // namespace lpwanloc::harness
