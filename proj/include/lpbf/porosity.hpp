#pragma once

// Radial relative-density profiles from pore records:
//
//   RD_ring = (V_ring - sum of V_defect in ring) / V_ring
//
// Pores are assigned wholly to the ring containing their centroid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/stats.hpp"
#include "lpbf/tabular.hpp"

namespace lpbf::porosity {

struct DefectRecord {
    Vec3 centroid;  // mm, part frame
    double volume = 0.0;  // mm^3
    std::optional<double> diameter;  // mm
};

/// Rotation about the z axis followed by translation.
struct FrameTransform {
    double dx = 0.0, dy = 0.0, dz = 0.0;  // mm
    double rotation_deg = 0.0;

    Vec3 apply(Vec3 p) const {
        const Vec2 r = rotate({p.x, p.y}, deg_to_rad(rotation_deg));
        return {r.x + dx, r.y + dy, p.z + dz};
    }
};

struct Reject {
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<DefectRecord> records;
    std::vector<Reject> rejects;
};

/// Headered delimited text with columns x, y, z, volume (mm, mm^3) and an
/// optional diameter. Bad rows go to `rejects`. A file with rows but no valid
/// row is an error; an empty file is not.
inline IngestResult ingest_defects(std::istream& in, const FrameTransform& tf = {}) {
    if (!std::isfinite(tf.dx) || !std::isfinite(tf.dy) || !std::isfinite(tf.dz) || !std::isfinite(tf.rotation_deg))
        throw ConfigError({"frame transform must be finite"});
    const io::Table t = io::read_table(in);
    IngestResult out;
    if (t.columns.empty()) return out;
    const std::size_t cx = t.require_column("x"), cy = t.require_column("y"), cz = t.require_column("z"),
                      cv = t.require_column("volume");
    const auto cd = t.column("diameter");
    for (const auto& row : t.rows) {
        auto field = [&](std::size_t c) -> std::optional<double> {
            if (c >= row.fields.size()) return std::nullopt;
            return io::parse_double(row.fields[c]);
        };
        const auto x = field(cx), y = field(cy), z = field(cz), v = field(cv);
        if (!x || !y || !z || !v) {
            out.rejects.push_back({row.line, "missing or non-numeric field"});
            continue;
        }
        if (!std::isfinite(*x) || !std::isfinite(*y) || !std::isfinite(*z)) {
            out.rejects.push_back({row.line, "non-finite centroid"});
            continue;
        }
        if (!(*v > 0.0) || !std::isfinite(*v)) {
            out.rejects.push_back({row.line, "volume must be > 0"});
            continue;
        }
        DefectRecord d{tf.apply({*x, *y, *z}), *v, std::nullopt};
        if (cd) d.diameter = field(*cd);
        out.records.push_back(d);
    }
    if (out.records.empty() && !t.rows.empty()) throw InputError("no valid defect rows");
    return out;
}

inline IngestResult ingest_defects_file(const std::string& path, const FrameTransform& tf = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return ingest_defects(in, tf);
}

struct HeightBand {
    double z_lo = 0.0, z_hi = 0.0;  // mm, half-open [z_lo, z_hi)

    double height() const { return z_hi - z_lo; }
    bool contains(double z) const { return z >= z_lo && z < z_hi; }
    bool overlaps(const HeightBand& o) const { return z_lo < o.z_hi && o.z_lo < z_hi; }
};

struct Ring {
    double r_inner = 0.0, r_outer = 0.0;  // mm
    double ring_volume = 0.0;             // mm^3
    double defect_volume = 0.0;           // mm^3
    std::size_t defect_count = 0;
    double relative_density = 1.0;
    bool excluded = false;

    double r_mid() const { return 0.5 * (r_inner + r_outer); }
};

struct RingProfile {
    Vec2 center;
    double dr = 0.0;
    HeightBand band;
    std::vector<Ring> rings;
    std::size_t overflow_count = 0;  // in band, beyond radius + tolerance
    double overflow_volume = 0.0;
    std::size_t out_of_band = 0;
};

struct ProfileOptions {
    double tolerance = 1e-6;     // mm beyond the radius still assigned to the last ring
    bool exclude_outer = false;  // flag the outermost ring (surface roughness)
};

inline RingProfile ring_profile(std::span<const DefectRecord> defects, Vec2 center, double radius, double dr,
                                HeightBand band, const ProfileOptions& opt = {}) {
    std::vector<std::string> bad;
    if (!(dr > 0.0)) bad.push_back("ring width must be > 0");
    if (!(band.z_hi > band.z_lo)) bad.push_back("height band needs z_hi > z_lo");
    if (!(radius > 0.0)) bad.push_back("radius must be > 0");
    if (!bad.empty()) throw ConfigError(bad);

    RingProfile p;
    p.center = center;
    p.dr = dr;
    p.band = band;
    const auto n = static_cast<std::size_t>(std::ceil(radius / dr - 1e-9));
    p.rings.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        Ring& r = p.rings[k];
        r.r_inner = static_cast<double>(k) * dr;
        r.r_outer = k + 1 == n ? radius : static_cast<double>(k + 1) * dr;
        r.ring_volume = pi * (r.r_outer * r.r_outer - r.r_inner * r.r_inner) * band.height();
    }
    if (opt.exclude_outer && n > 0) p.rings.back().excluded = true;

    for (const auto& d : defects) {
        if (!band.contains(d.centroid.z)) {
            ++p.out_of_band;
            continue;
        }
        const double r = distance({d.centroid.x, d.centroid.y}, center);
        if (r > radius + opt.tolerance) {
            ++p.overflow_count;
            p.overflow_volume += d.volume;
            continue;
        }
        const auto k = std::min(static_cast<std::size_t>(r / dr), n - 1);
        p.rings[k].defect_volume += d.volume;
        ++p.rings[k].defect_count;
    }
    for (auto& r : p.rings) r.relative_density = (r.ring_volume - r.defect_volume) / r.ring_volume;
    return p;
}

/// One profile per band with shared ring geometry. Bands must be disjoint.
inline std::vector<RingProfile> band_compare(std::span<const DefectRecord> defects, std::span<const HeightBand> bands,
                                             Vec2 center, double radius, double dr, const ProfileOptions& opt = {}) {
    for (std::size_t a = 0; a < bands.size(); ++a)
        for (std::size_t b = a + 1; b < bands.size(); ++b)
            if (bands[a].overlaps(bands[b]))
                throw ConfigError({"height bands " + std::to_string(a) + " and " + std::to_string(b) + " overlap"});
    std::vector<RingProfile> out;
    for (const auto& b : bands) out.push_back(ring_profile(defects, center, radius, dr, b, opt));
    return out;
}

/// Spearman correlation between ring index and RD over rings [first, last],
/// skipping excluded rings.
inline double radial_trend(const RingProfile& p, std::size_t first, std::size_t last) {
    std::vector<double> idx, rd;
    for (std::size_t k = first; k <= last && k < p.rings.size(); ++k) {
        if (p.rings[k].excluded) continue;
        idx.push_back(static_cast<double>(k));
        rd.push_back(p.rings[k].relative_density);
    }
    return stats::spearman(idx, rd);
}

/// Per-location thermal metric over the build plane (for example the
/// accumulated time above liquidus in seconds).
struct MetricMap {
    MapFrame frame;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i + frame.nx * j]; }
};

/// Local pore density p0 * exp(-k * metric) per mm^3, volumes lognormal.
struct RateModel {
    double p0 = 300.0;            // pores / mm^3 at zero metric
    double k = 1000.0;            // 1 / (metric unit)
    double volume_median = 4e-6;  // mm^3
    double volume_sigma = 0.5;    // log-space standard deviation
};

/// Poisson pores inside the disc `part` and the height band, deterministic for
/// a given seed.
inline std::vector<DefectRecord> synth_defects(const MetricMap& metric, const RateModel& rate, const Circle& part,
                                               HeightBand band, std::uint64_t seed) {
    std::vector<std::string> bad;
    const MapFrame& f = metric.frame;
    if (!(f.cell > 0.0) || metric.values.size() != f.size()) bad.push_back("metric map is malformed");
    if (f.x0 > part.center.x - part.radius + 1e-9 || f.y0 > part.center.y - part.radius + 1e-9 ||
        f.x0 + static_cast<double>(f.nx) * f.cell < part.center.x + part.radius - 1e-9 ||
        f.y0 + static_cast<double>(f.ny) * f.cell < part.center.y + part.radius - 1e-9)
        bad.push_back("metric map does not cover the part footprint");
    if (!(rate.p0 >= 0.0) || !(rate.k >= 0.0) || !(rate.volume_median > 0.0) || !(rate.volume_sigma >= 0.0))
        bad.push_back("rate model needs p0 >= 0, k >= 0, volume_median > 0, volume_sigma >= 0");
    if (!(band.z_hi > band.z_lo)) bad.push_back("height band needs z_hi > z_lo");
    if (!bad.empty()) throw ConfigError(bad);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::lognormal_distribution<double> vol(std::log(rate.volume_median), rate.volume_sigma);
    std::vector<DefectRecord> out;
    const double column = f.cell * f.cell * band.height();
    for (std::size_t j = 0; j < f.ny; ++j)
        for (std::size_t i = 0; i < f.nx; ++i) {
            const Vec2 c = f.cell_center(i, j);
            if (distance(c, part.center) > part.radius + f.cell) continue;
            const double lambda = rate.p0 * std::exp(-rate.k * metric.at(i, j)) * column;
            if (!(lambda > 0.0)) continue;
            std::poisson_distribution<long> count(lambda);
            const long n = count(rng);
            for (long q = 0; q < n; ++q) {
                const Vec3 p{f.x0 + (static_cast<double>(i) + unit(rng)) * f.cell,
                             f.y0 + (static_cast<double>(j) + unit(rng)) * f.cell,
                             band.z_lo + unit(rng) * band.height()};
                const double v = vol(rng);
                if (distance({p.x, p.y}, part.center) > part.radius) continue;
                out.push_back({p, v, std::cbrt(6.0 * v / pi)});
            }
        }
    return out;
}

}  // namespace lpbf::porosity

namespace lpbf::io {

inline std::string format_defects(std::span<const porosity::DefectRecord> d, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "defects");
    write_meta(os, "units", "mm mm^3");
    os << "x\ty\tz\tvolume\tdiameter\n";
    for (const auto& r : d)
        os << format_number(r.centroid.x) << '\t' << format_number(r.centroid.y) << '\t' << format_number(r.centroid.z)
           << '\t' << format_number(r.volume) << '\t' << format_number(r.diameter.value_or(std::nan(""))) << '\n';
    return os.str();
}

inline std::string format_profile(const porosity::RingProfile& p, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "ring-profile");
    write_meta(os, "center_mm", format_number(p.center.x) + " " + format_number(p.center.y));
    write_meta(os, "dr_mm", p.dr);
    write_meta(os, "band_mm", format_number(p.band.z_lo) + ":" + format_number(p.band.z_hi));
    write_meta(os, "overflow_count", format_number(p.overflow_count));
    write_meta(os, "overflow_volume_mm3", p.overflow_volume);
    os << "r_mid\trelative_density\tr_inner\tr_outer\tring_volume\tdefect_volume\tdefect_count\texcluded\n";
    for (const auto& r : p.rings)
        os << format_number(r.r_mid()) << '\t' << format_number(r.relative_density) << '\t'
           << format_number(r.r_inner) << '\t' << format_number(r.r_outer) << '\t' << format_number(r.ring_volume)
           << '\t' << format_number(r.defect_volume) << '\t' << r.defect_count << '\t' << (r.excluded ? 1 : 0)
           << '\n';
    return os.str();
}

}  // namespace lpbf::io
