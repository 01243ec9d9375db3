#pragma once

// Plain-text tabular files shared by every module:
//
//   # key: value          provenance / metadata lines
//   col_a<TAB>col_b ...   one header line
//   1.5<TAB>2 ...         data rows
//
// Numbers are written in shortest round-trip form so that a write/read cycle
// reproduces every double exactly.

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/version.hpp"

namespace lpbf::io {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // folds -0
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline std::string format_number(long long v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }
inline std::string format_number(std::size_t v) { return std::to_string(v); }

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Splits on commas if the line contains one, otherwise on runs of whitespace.
inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    if (line.find(',') != std::string_view::npos) {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return out;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

struct Provenance {
    std::string config_hash = "none";
    std::uint64_t seed = 0;
    std::string version = std::string(version_string);
};

inline void write_provenance(std::ostream& os, const Provenance& p, std::string_view kind) {
    os << "# lpbf-edge " << p.version << ' ' << kind << '\n';
    os << "# config_hash: " << p.config_hash << '\n';
    os << "# seed: " << p.seed << '\n';
}

inline void write_meta(std::ostream& os, std::string_view key, std::string_view value) {
    os << "# " << key << ": " << value << '\n';
}

inline void write_meta(std::ostream& os, std::string_view key, double value) {
    write_meta(os, key, format_number(value));
}

struct Row {
    std::size_t line = 0;  // 1-based line number in the source
    std::vector<std::string> fields;
};

struct Table {
    std::map<std::string, std::string> meta;
    std::vector<std::string> columns;
    std::vector<Row> rows;

    /// Column index or nullopt.
    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }

    std::size_t require_column(std::string_view name) const {
        auto c = column(name);
        if (!c) throw InputError("missing required column '" + std::string(name) + "'");
        return *c;
    }

    std::optional<double> meta_number(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) return std::nullopt;
        return parse_double(it->second);
    }
};

inline Table read_table(std::istream& is) {
    Table t;
    std::string line;
    std::size_t n = 0;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++n;
        std::string_view v = trim(line);
        if (v.empty()) continue;
        if (v.front() == '#') {
            v.remove_prefix(1);
            const auto colon = v.find(':');
            if (colon != std::string_view::npos)
                t.meta[std::string(trim(v.substr(0, colon)))] = std::string(trim(v.substr(colon + 1)));
            continue;
        }
        if (!have_header) {
            t.columns = split_fields(v);
            have_header = true;
            continue;
        }
        t.rows.push_back({n, split_fields(v)});
    }
    return t;
}

inline Table read_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_table(in);
}

/// Writes `content` only through a fully-formed stream; throws on I/O failure.
inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace lpbf::io
