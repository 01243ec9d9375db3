#pragma once

// Field snapshots: flat little-endian binary
//
//   char[8]  "LPBFFLD1"
//   uint64   nx, ny, nz
//   double   dx, time, origin_x, origin_y, origin_z
//   double   T[nx*ny*nz]   x-fastest
//
// plus a sidecar text descriptor with the same header and the boundary spec.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/tabular.hpp"
#include "lpbf/thermal/field.hpp"
#include "lpbf/thermal/probe.hpp"

namespace lpbf::io {

static_assert(std::endian::native == std::endian::little, "field snapshots are written little-endian");

inline constexpr char field_magic[8] = {'L', 'P', 'B', 'F', 'F', 'L', 'D', '1'};

inline std::string face_to_string(const thermal::FaceCondition& f) {
    return f.is_fixed() ? "fixed:" + format_number(f.temperature) : "adiabatic";
}

inline void write_field(const std::string& bin_path, const thermal::ThermalField& f, const Provenance& prov) {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw Error("cannot write '" + bin_path + "'");
    const auto& g = f.grid();
    out.write(field_magic, 8);
    const std::uint64_t dims[3] = {g.nx, g.ny, g.nz};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    const double hdr[5] = {g.dx, f.time, g.origin.x, g.origin.y, g.origin.z};
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    out.write(reinterpret_cast<const char*>(f.T.data()), static_cast<std::streamsize>(f.T.size() * sizeof(double)));
    if (!out) throw Error("write failed for '" + bin_path + "'");

    std::ostringstream os;
    write_provenance(os, prov, "field-descriptor");
    write_meta(os, "binary", bin_path.substr(bin_path.find_last_of('/') + 1));
    write_meta(os, "layout", "magic[8] u64 nx ny nz, f64 dx time ox oy oz, f64 T[nx*ny*nz] x-fastest, little-endian");
    write_meta(os, "nx", format_number(g.nx));
    write_meta(os, "ny", format_number(g.ny));
    write_meta(os, "nz", format_number(g.nz));
    write_meta(os, "dx_m", g.dx);
    write_meta(os, "time_s", f.time);
    write_meta(os, "origin_m", format_number(g.origin.x) + " " + format_number(g.origin.y) + " " +
                                   format_number(g.origin.z));
    static constexpr const char* faces[6] = {"x_min", "x_max", "y_min", "y_max", "bottom", "top"};
    for (std::size_t i = 0; i < 6; ++i) write_meta(os, std::string("face_") + faces[i], face_to_string(f.boundary.faces[i]));
    write_text_file(bin_path + ".txt", os.str());
}

/// Geometry, time and temperatures; boundary and material are not stored in the binary.
inline thermal::ThermalField read_field(const std::string& bin_path) {
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + bin_path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, field_magic, 8) != 0) throw InputError("'" + bin_path + "' is not a field snapshot");
    std::uint64_t dims[3];
    double hdr[5];
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!in) throw InputError("truncated field header");
    thermal::ThermalField f;
    f.geometry = {dims[0], dims[1], dims[2], hdr[0], {hdr[2], hdr[3], hdr[4]}};
    f.time = hdr[1];
    f.T.resize(f.geometry.cells());
    in.read(reinterpret_cast<char*>(f.T.data()), static_cast<std::streamsize>(f.T.size() * sizeof(double)));
    if (!in) throw InputError("truncated field data");
    return f;
}

/// Wide table: t then one temperature column per probe. All probes share times.
inline std::string format_probe_histories(const std::vector<thermal::ProbeHistory>& h,
                                          const std::vector<std::string>& names, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "probe-histories");
    for (std::size_t p = 0; p < h.size(); ++p)
        write_meta(os, "probe " + names[p], format_number(h[p].position.x * 1e3) + " " +
                                                format_number(h[p].position.y * 1e3) + " " +
                                                format_number(h[p].position.z * 1e3) + " mm");
    os << 't';
    for (const auto& n : names) os << '\t' << "T_" << n;
    os << '\n';
    const std::size_t n = h.empty() ? 0 : h.front().times.size();
    for (std::size_t i = 0; i < n; ++i) {
        os << format_number(h.front().times[i]);
        for (const auto& p : h) os << '\t' << format_number(p.temperatures[i]);
        os << '\n';
    }
    return os.str();
}

inline std::string format_probe_metrics(const std::vector<thermal::ProbeHistory>& h,
                                        const std::vector<std::string>& names, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "probe-metrics");
    write_meta(os, "units", "x y z mm, T K, times s, integral K s");
    os << "probe\tx\ty\tz\tT_peak\tpeak_count\tpeak_times\tt_above_liquidus\tlongest_above_liquidus\t"
          "integral_above_liquidus\n";
    for (std::size_t p = 0; p < h.size(); ++p) {
        const auto& m = h[p].metrics;
        std::string times;
        for (double t : m.peak_times) times += (times.empty() ? "" : ",") + format_number(t);
        if (times.empty()) times = "-";
        os << names[p] << '\t' << format_number(h[p].position.x * 1e3) << '\t' << format_number(h[p].position.y * 1e3)
           << '\t' << format_number(h[p].position.z * 1e3) << '\t' << format_number(m.T_peak) << '\t' << m.peak_times.size() << '\t'
           << times << '\t' << format_number(m.t_above_liquidus) << '\t' << format_number(m.longest_above_liquidus)
           << '\t' << format_number(m.integral_above_liquidus) << '\n';
    }
    return os.str();
}

struct NamedProbe {
    std::string name;
    Vec3 position;  // mm, pattern frame (z measured from the bottom of the domain)
};

/// Columns name x y z (mm).
inline std::vector<NamedProbe> parse_probes(const Table& t) {
    const std::size_t cn = t.require_column("name"), cx = t.require_column("x"), cy = t.require_column("y"),
                      cz = t.require_column("z");
    std::vector<NamedProbe> out;
    for (const auto& row : t.rows) {
        auto num = [&](std::size_t c) {
            if (c >= row.fields.size()) throw InputError("line " + std::to_string(row.line) + ": missing field");
            auto v = parse_double(row.fields[c]);
            if (!v) throw InputError("line " + std::to_string(row.line) + ": bad number '" + row.fields[c] + "'");
            return *v;
        };
        if (cn >= row.fields.size()) throw InputError("line " + std::to_string(row.line) + ": missing name");
        out.push_back({row.fields[cn], {num(cx), num(cy), num(cz)}});
    }
    return out;
}

}  // namespace lpbf::io
