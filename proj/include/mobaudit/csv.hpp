/*
 * csv.hpp -- minimal CSV/TSV helpers: quoted-field splitting and
 * shortest-round-trip number formatting for byte-stable outputs.
 */
#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mobaudit/core.hpp"

namespace mobaudit {

// RFC-4180 style split: fields may be double-quoted, quotes escaped by doubling.
inline std::vector<std::string> split_csv(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // tolerate CRLF inputs
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string csv_quote(std::string_view field) {
    bool needs = field.find_first_of(",\"\n") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

/// Shortest decimal string that round-trips the double.
inline std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

inline bool parse_double(std::string_view s, double& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline bool parse_i64(std::string_view s, std::int64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace mobaudit
