#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/scanpath.hpp"
#include "lpbf/tabular.hpp"

namespace lpbf::io {

/// One row per segment: layer t_start t_end x0 y0 x1 y1 laser_on.
/// Layer z, angle and the clipping circle travel as metadata lines.
inline std::string format_patterns(const std::vector<ScanPattern>& patterns, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "scan-pattern");
    if (!patterns.empty()) {
        const Circle& c = patterns.front().domain;
        write_meta(os, "domain", format_number(c.center.x) + " " + format_number(c.center.y) + " " +
                                     format_number(c.radius));
    }
    for (const auto& p : patterns)
        write_meta(os, "layer " + std::to_string(p.layer_index),
                   "z=" + format_number(p.z) + " angle=" + format_number(p.angle));
    os << "layer\tt_start\tt_end\tx0\ty0\tx1\ty1\tlaser_on\n";
    for (const auto& p : patterns)
        for (const auto& s : p.segments)
            os << p.layer_index << '\t' << format_number(s.t_start) << '\t' << format_number(s.t_end) << '\t'
               << format_number(s.start.x) << '\t' << format_number(s.start.y) << '\t' << format_number(s.end.x)
               << '\t' << format_number(s.end.y) << '\t' << (s.laser_on ? 1 : 0) << '\n';
    return os.str();
}

inline std::vector<ScanPattern> parse_patterns(const Table& t) {
    const std::size_t c_layer = t.require_column("layer"), c_t0 = t.require_column("t_start"),
                      c_t1 = t.require_column("t_end"), c_x0 = t.require_column("x0"), c_y0 = t.require_column("y0"),
                      c_x1 = t.require_column("x1"), c_y1 = t.require_column("y1"),
                      c_on = t.require_column("laser_on");
    Circle domain;
    if (auto it = t.meta.find("domain"); it != t.meta.end()) {
        auto f = split_fields(it->second);
        if (f.size() == 3) {
            domain.center = {parse_double(f[0]).value_or(0.0), parse_double(f[1]).value_or(0.0)};
            domain.radius = parse_double(f[2]).value_or(0.0);
        }
    }
    std::map<int, ScanPattern> by_layer;
    for (const auto& row : t.rows) {
        auto num = [&](std::size_t c) {
            if (c >= row.fields.size()) throw InputError("line " + std::to_string(row.line) + ": missing field");
            auto v = parse_double(row.fields[c]);
            if (!v) throw InputError("line " + std::to_string(row.line) + ": bad number '" + row.fields[c] + "'");
            return *v;
        };
        const int layer = static_cast<int>(num(c_layer));
        ScanSegment s{{num(c_x0), num(c_y0)}, {num(c_x1), num(c_y1)}, num(c_t0), num(c_t1), num(c_on) != 0.0};
        if (!(s.t_end > s.t_start)) throw InputError("line " + std::to_string(row.line) + ": t_end <= t_start");
        auto& pat = by_layer[layer];
        pat.layer_index = layer;
        pat.domain = domain;
        pat.segments.push_back(s);
    }
    std::vector<ScanPattern> out;
    for (auto& [layer, pat] : by_layer) {
        if (auto it = t.meta.find("layer " + std::to_string(layer)); it != t.meta.end()) {
            for (const auto& kv : split_fields(it->second)) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const auto v = parse_double(kv.substr(eq + 1)).value_or(0.0);
                if (kv.substr(0, eq) == "z") pat.z = v;
                if (kv.substr(0, eq) == "angle") pat.angle = v;
            }
        }
        out.push_back(std::move(pat));
    }
    return out;
}

inline std::vector<ScanPattern> read_patterns_file(const std::string& path) {
    return parse_patterns(read_table_file(path));
}

}  // namespace lpbf::io
