#pragma once

// Minimal CSV support: comma-separated, optional double-quoted fields with
// "" escapes. Good enough for the pipeline's file formats; embedded newlines
// inside quoted fields are not supported.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "icudyn/errors.hpp"

namespace icudyn::csv {

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

// Calls row(line_number, fields) for every non-empty line, header included.
inline void for_each_row(const std::string& path,
                         const std::function<void(std::size_t, const std::vector<std::string>&)>& row) {
    std::ifstream in(path);
    if (!in) fail_data("E_IO", "cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        row(lineno, split_line(line));
    }
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& path, std::size_t lineno) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        fail_data("E_PARSE", path + ":" + std::to_string(lineno) + ": bad integer '" + s + "'");
    return v;
}

// Shortest representation that round-trips exactly, so identical values give
// identical bytes across runs.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                          const std::string& path) {
    if (got != want) {
        std::string w;
        for (std::size_t i = 0; i < want.size(); ++i) w += (i ? "," : "") + want[i];
        fail_data("E_PARSE", path + ":1: expected header '" + w + "'");
    }
}

}  // namespace icudyn::csv
