#pragma once

// End-to-end stages wired from a RunConfig: two-pass probe study, multi-layer
// cylinder build with photodiode synthesis, intensity maps, seeded porosity
// profiles and anomaly clustering, plus the `reproduce` driver that writes
// all of them with a pass/fail summary.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/cluster.hpp"
#include "lpbf/config.hpp"
#include "lpbf/porosity.hpp"
#include "lpbf/scanpath.hpp"
#include "lpbf/scanpath_io.hpp"
#include "lpbf/signal.hpp"
#include "lpbf/stats.hpp"
#include "lpbf/tabular.hpp"
#include "lpbf/thermal/io.hpp"
#include "lpbf/thermal/solver.hpp"

namespace lpbf::pipeline {

/// A stage failure; `what()` is "<stage>: <cause>".
class StageError : public Error {
public:
    StageError(std::string stage_name, const std::string& cause)
        : Error(stage_name + ": " + cause), stage(std::move(stage_name)) {}
    std::string stage;
};

struct Check {
    enum class Status { pass, fail, skipped };
    std::string name;
    Status status = Status::skipped;
    std::string detail;
};

inline const char* to_string(Check::Status s) {
    switch (s) {
        case Check::Status::pass: return "PASS";
        case Check::Status::fail: return "FAIL";
        case Check::Status::skipped: return "SKIPPED";
    }
    return "?";
}

inline Check make_check(std::string name, bool ok, std::string detail) {
    return {std::move(name), ok ? Check::Status::pass : Check::Status::fail, std::move(detail)};
}

inline std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

/// splitmix64 step, used to derive independent stream seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline thermal::BoundarySpec boundary(const RunConfig& c) {
    return c.solver.fixed_bottom ? thermal::BoundarySpec::build_plate(c.solver.plate_temperature)
                                 : thermal::BoundarySpec::all_adiabatic();
}

inline thermal::RunSettings run_settings(const RunConfig& c) {
    thermal::RunSettings rs;
    rs.power = c.machine.laser_power;
    rs.spot_radius = c.machine.spot_radius * 1e-6;
    rs.absorptivity = c.absorptivity;
    rs.safety = c.solver.safety;
    rs.source = c.solver.source;
    rs.peak_prominence = c.probe.peak_prominence;
    return rs;
}

/// Box grid (metres) with the given lateral extent in mm.
inline thermal::Grid box_grid(double x_lo, double x_hi, double y_lo, double y_hi, double depth, double dx_um) {
    const double dx = dx_um * 1e-3;  // mm
    thermal::Grid g;
    g.nx = static_cast<std::size_t>(std::llround((x_hi - x_lo) / dx));
    g.ny = static_cast<std::size_t>(std::llround((y_hi - y_lo) / dx));
    g.nz = static_cast<std::size_t>(std::llround(depth / dx));
    g.dx = dx_um * 1e-6;
    g.origin = {x_lo * 1e-3, y_lo * 1e-3, 0.0};
    return g;
}

/// Square box around the part with the configured margin.
inline thermal::Grid build_grid(const RunConfig& c) {
    const double h = c.part.radius + c.solver.margin;
    return box_grid(-h, h, -h, h, c.solver.depth, c.solver.dx_build);
}

// ---------------------------------------------------------------- probe study

struct ProbeStudy {
    ScanPattern pattern;
    thermal::Grid grid;
    std::vector<std::string> names;  // P1..P4
    thermal::RunResult result;
};

/// Two antiparallel passes across the part diameter, one hatch apart, joined
/// by a laser-off traverse at the +x edge.
inline ScanPattern two_pass_pattern(const RunConfig& c) {
    const double R = c.part.radius, h = c.machine.hatch_distance, v = c.machine.scan_speed;
    ScanPattern p;
    p.domain = c.part_circle();
    double t = 0.0;
    auto add = [&](Vec2 a, Vec2 b, bool on) {
        const double d = distance(a, b) / v;
        p.segments.push_back({a, b, t, t + d, on});
        t += d;
    };
    add({-R, 0.0}, {R, 0.0}, true);
    add({R, 0.0}, {R, h}, false);
    add({R, h}, {-R, h}, true);
    return p;
}

/// P1/P4 at the centre of the first/second pass, P2 on the first pass
/// approaching the turn, P3 on the second pass departing from it. Metres,
/// just below the top surface.
inline std::vector<Vec3> probe_positions(const RunConfig& c, const thermal::Grid& g) {
    const double x_edge = (c.part.radius - c.probe.edge_offset) * 1e-3;
    const double h = c.machine.hatch_distance * 1e-3;
    const double z = g.top_z() - 1e-9;
    return {{0.0, 0.0, z}, {x_edge, 0.0, z}, {x_edge, h, z}, {0.0, h, z}};
}

inline ProbeStudy run_probe_study(const RunConfig& c) {
    ProbeStudy s;
    s.pattern = two_pass_pattern(c);
    const double R = c.part.radius, m = c.solver.margin, h = c.machine.hatch_distance;
    const double y_mid = 0.5 * h;
    s.grid = box_grid(-R - m, R + m, y_mid - 0.5 * c.probe.width, y_mid + 0.5 * c.probe.width, c.solver.depth,
                      c.solver.dx_probe);
    const auto field = thermal::make_uniform_field(s.grid, c.solver.initial_temperature, boundary(c), c.material);
    auto rs = run_settings(c);
    rs.cooldown = c.probe.cooldown;
    s.names = {"P1", "P2", "P3", "P4"};
    const auto probes = probe_positions(c, s.grid);
    s.result = thermal::run(std::span<const ScanPattern>(&s.pattern, 1), field, rs, probes);
    return s;
}

/// Lowest temperature strictly between the first two peaks.
inline double inter_peak_minimum(const thermal::ProbeHistory& h) {
    const auto& pk = h.metrics.peak_times;
    if (pk.size() < 2) return std::nan("");
    double lo = HUGE_VAL;
    for (std::size_t i = 0; i < h.times.size(); ++i)
        if (h.times[i] > pk[0] && h.times[i] < pk[1]) lo = std::min(lo, h.temperatures[i]);
    return lo;
}

inline std::vector<Check> probe_checks(const ProbeStudy& s, const thermal::MaterialProps& mat) {
    const auto& p = s.result.probes;
    const auto& m1 = p[0].metrics;
    const auto& m2 = p[1].metrics;
    const auto& m3 = p[2].metrics;
    const auto& m4 = p[3].metrics;
    std::vector<Check> out;
    const double d1 = inter_peak_minimum(p[0]), d4 = inter_peak_minimum(p[3]);
    const bool two = m1.peak_times.size() == 2 && m4.peak_times.size() == 2 && d1 < mat.liquidus && d4 < mat.liquidus;
    out.push_back(make_check("probe.center_two_separated_peaks", two,
                             "P1 peaks=" + std::to_string(m1.peak_times.size()) + " dip=" + fmt(d1) +
                                 " K, P4 peaks=" + std::to_string(m4.peak_times.size()) + " dip=" + fmt(d4) +
                                 " K, T_liq=" + fmt(mat.liquidus) + " K"));
    const bool longest = m2.longest_above_liquidus > m1.longest_above_liquidus &&
                         m2.longest_above_liquidus > m4.longest_above_liquidus;
    out.push_back(make_check("probe.edge_approach_longest_above_liquidus", longest,
                             "P2=" + fmt(m2.longest_above_liquidus * 1e3) + " ms, P1=" +
                                 fmt(m1.longest_above_liquidus * 1e3) + " ms, P4=" +
                                 fmt(m4.longest_above_liquidus * 1e3) + " ms"));
    const bool hottest = m3.T_peak > m1.T_peak && m3.T_peak > m2.T_peak && m3.T_peak > m4.T_peak;
    out.push_back(make_check("probe.edge_departure_highest_peak", hottest,
                             "P3=" + fmt(m3.T_peak) + " K, P1=" + fmt(m1.T_peak) + " K, P2=" + fmt(m2.T_peak) +
                                 " K, P4=" + fmt(m4.T_peak) + " K"));
    return out;
}

// --------------------------------------------------------------------- build

struct BuildRun {
    std::vector<ScanPattern> patterns;
    thermal::Grid grid;
    signal::SignalSeries series;          // focus samples while the laser is on
    porosity::MetricMap longest_melt;     // mean per-layer longest time above liquidus, s
    porosity::MetricMap total_melt;       // total time above liquidus, s
    double dt = 0.0;
    std::size_t steps = 0;
    double absorbed_energy = 0.0;
};

inline porosity::MetricMap surface_map(const thermal::Grid& g, std::vector<double> values) {
    porosity::MetricMap m;
    m.frame.x0 = g.origin.x * 1e3;
    m.frame.y0 = g.origin.y * 1e3;
    m.frame.cell = g.dx * 1e3;
    m.frame.nx = g.nx;
    m.frame.ny = g.ny;
    m.values = std::move(values);
    return m;
}

/// Gain that puts the steady signal of one bare pass through the part centre
/// at 10000 units. The middle 40 % of the pass is averaged.
inline double calibrate_gain(const RunConfig& c, const thermal::Grid& g) {
    const double R = c.part.radius, v = c.machine.scan_speed;
    ScanPattern p;
    p.domain = c.part_circle();
    const double L = 2.0 * R;
    p.segments.push_back({{-R, 0.0}, {R, 0.0}, 0.0, L / v, true});
    const auto field = thermal::make_uniform_field(g, c.solver.initial_temperature, boundary(c), c.material);
    auto rs = run_settings(c);
    const double r_fov = c.signal.r_fov * 1e-6;
    double sum = 0.0;
    std::size_t n = 0;
    rs.observer = [&](const thermal::HeatSolver& s, const thermal::StepInfo& i) {
        if (!i.point.laser_on || std::abs(i.point.position.x) > 0.2 * L) return;
        sum += signal::sample_photodiode(s, {i.point.position.x * 1e-3, i.point.position.y * 1e-3}, r_fov, 1.0);
        ++n;
    };
    thermal::run(std::span<const ScanPattern>(&p, 1), field, rs, {});
    if (n == 0 || !(sum > 0.0)) throw Error("gain calibration produced no signal");
    return 10000.0 * static_cast<double>(n) / sum;
}

inline BuildRun run_build(const RunConfig& c, double gain) {
    BuildRun b;
    b.patterns = generate_build(c.machine, c.part_circle(), c.part.layers, c.part.dead_time);
    b.grid = build_grid(c);
    const auto field = thermal::make_uniform_field(b.grid, c.solver.initial_temperature, boundary(c), c.material);
    auto rs = run_settings(c);
    rs.track_surface_melt = true;
    const double r_fov = c.signal.r_fov * 1e-6;
    b.series.gain = gain;
    rs.observer = [&](const thermal::HeatSolver& s, const thermal::StepInfo& i) {
        if (!i.point.laser_on) return;
        const double v =
            signal::sample_photodiode(s, {i.point.position.x * 1e-3, i.point.position.y * 1e-3}, r_fov, gain);
        b.series.samples.push_back({i.time, v, i.point.position, i.layer});
    };
    auto r = thermal::run(b.patterns, field, rs, {});
    if (c.signal.noise_sigma > 0.0) signal::add_noise(b.series, c.signal.noise_sigma, derive_seed(c.seed, 100));
    b.longest_melt = surface_map(b.grid, std::move(r.surface_longest_melt));
    b.total_melt = surface_map(b.grid, std::move(r.surface_melt_time));
    b.dt = r.dt;
    b.steps = r.steps;
    b.absorbed_energy = r.absorbed_energy;
    return b;
}

// ---------------------------------------------------------------------- maps

struct MapAnalysis {
    signal::IntensityMap accumulated;
    signal::IntensityMap first_layer;
    double outer_inner = 0.0;     // r_outer annulus of the accumulated map
    double outer = 0.0, inner = 0.0;
    std::vector<double> layer_ratios;  // same ratio for each single-layer map
    double worst_layer_ratio = 0.0;
    int worst_layer = 0;
    double peak_ratio = 0.0;  // highest annulus mean / inner mean, annuli one cell wide
    double peak_radius = 0.0;
};

/// Outer annulus [R - 0.2, R], inner disc r <= R / 2.
inline double edge_ratio(const signal::IntensityMap& m, double R, double* outer = nullptr, double* inner = nullptr) {
    const double o = signal::region_mean(m, {0.0, 0.0}, R - 0.2, R);
    const double i = signal::region_mean(m, {0.0, 0.0}, 0.0, 0.5 * R);
    if (outer) *outer = o;
    if (inner) *inner = i;
    return o / i;
}

inline MapAnalysis analyze_maps(const BuildRun& b, const RunConfig& c) {
    const double cell = c.signal.map_cell, R = c.part.radius;
    const MapFrame frame = frame_covering(c.part_circle(), cell);
    MapAnalysis a;
    a.accumulated = signal::accumulate_map(b.series, cell, c.signal.map_stat, frame);
    a.first_layer = signal::accumulate_map(b.series, cell, c.signal.map_stat, frame, 0);
    a.outer_inner = edge_ratio(a.accumulated, R, &a.outer, &a.inner);
    a.worst_layer_ratio = -HUGE_VAL;
    for (int l = 0; l < c.part.layers; ++l) {
        const auto m = signal::accumulate_map(b.series, cell, c.signal.map_stat, frame, l);
        const double r = edge_ratio(m, R);
        a.layer_ratios.push_back(r);
        if (r > a.worst_layer_ratio || std::isnan(r)) {
            a.worst_layer_ratio = r;
            a.worst_layer = l;
        }
    }
    for (double r = 0.5 * R; r + cell <= R + 1e-9; r += cell) {
        const double v = signal::region_mean(a.accumulated, {0.0, 0.0}, r, r + cell) / a.inner;
        if (v > a.peak_ratio) {
            a.peak_ratio = v;
            a.peak_radius = r + 0.5 * cell;
        }
    }
    return a;
}

inline std::vector<Check> map_checks(const MapAnalysis& a) {
    return {make_check("build.accumulated_edge_ring", a.outer_inner > 1.2,
                       "outer/inner=" + fmt(a.outer_inner) + " (outer " + fmt(a.outer) + ", inner " + fmt(a.inner) +
                           "); strongest annulus " + fmt(a.peak_ratio) + " at r=" + fmt(a.peak_radius) + " mm"),
            make_check("build.single_layer_no_ring", a.worst_layer_ratio < 1.2,
                       "max single-layer outer/inner=" + fmt(a.worst_layer_ratio) + " (layer " +
                           std::to_string(a.worst_layer) + ")")};
}

/// Radial profile table of the accumulated and first-layer maps.
inline std::string format_radial(const MapAnalysis& a, double R, double cell, const io::Provenance& prov) {
    std::ostringstream os;
    io::write_provenance(os, prov, "radial-intensity");
    io::write_meta(os, "statistic", signal::to_string(a.accumulated.statistic()));
    os << "r_inner\tr_outer\taccumulated\tfirst_layer\n";
    for (double r = 0.0; r + 0.5 * cell < R; r += cell)
        os << io::format_number(r) << '\t' << io::format_number(r + cell) << '\t'
           << io::format_number(signal::region_mean(a.accumulated, {0.0, 0.0}, r, r + cell)) << '\t'
           << io::format_number(signal::region_mean(a.first_layer, {0.0, 0.0}, r, r + cell)) << '\n';
    return os.str();
}

inline std::string format_metric_map(const porosity::MetricMap& m, std::string_view what, const io::Provenance& prov) {
    std::ostringstream os;
    io::write_provenance(os, prov, "metric-map");
    io::write_meta(os, "metric", what);
    io::write_meta(os, "cell_mm", m.frame.cell);
    io::write_meta(os, "x0_mm", m.frame.x0);
    io::write_meta(os, "y0_mm", m.frame.y0);
    io::write_meta(os, "nx", io::format_number(m.frame.nx));
    io::write_meta(os, "ny", io::format_number(m.frame.ny));
    for (std::size_t j = 0; j < m.frame.ny; ++j) {
        for (std::size_t i = 0; i < m.frame.nx; ++i) {
            if (i) os << ' ';
            os << io::format_number(m.at(i, j));
        }
        os << '\n';
    }
    return os.str();
}

// ------------------------------------------------------------------ porosity

struct PorosityAnalysis {
    std::vector<std::vector<porosity::DefectRecord>> defects;  // per band
    std::vector<porosity::RingProfile> profiles;
    std::vector<double> trends;  // rank correlation over the trend rings
    std::size_t mc_seeds = 0;
    std::size_t mc_positive = 0;  // seeds with a positive trend in the first band
};

inline porosity::ProfileOptions profile_options(const RunConfig& c) {
    porosity::ProfileOptions o;
    o.exclude_outer = c.porosity.exclude_outer;
    return o;
}

inline double trend_of(const porosity::RingProfile& p, const RunConfig& c) {
    return porosity::radial_trend(p, static_cast<std::size_t>(c.porosity.trend_first - 1),
                                  static_cast<std::size_t>(c.porosity.trend_last - 1));
}

/// One seeded defect set per band, plus `mc_seeds` extra seeds for the first
/// band to estimate how often the trend is positive. Zero laser power seeds
/// nothing.
inline PorosityAnalysis analyze_porosity(const BuildRun& b, const RunConfig& c, std::size_t mc_seeds = 100) {
    PorosityAnalysis a;
    const bool seed_defects = c.machine.laser_power > 0.0;
    const auto opt = profile_options(c);
    const Circle part = c.part_circle();
    for (std::size_t k = 0; k < c.porosity.bands.size(); ++k) {
        const auto& band = c.porosity.bands[k];
        std::vector<porosity::DefectRecord> d;
        if (seed_defects) d = porosity::synth_defects(b.longest_melt, c.porosity.rate, part, band, derive_seed(c.seed, k));
        a.profiles.push_back(porosity::ring_profile(d, part.center, part.radius, c.porosity.dr, band, opt));
        a.trends.push_back(trend_of(a.profiles.back(), c));
        a.defects.push_back(std::move(d));
    }
    if (seed_defects) {
        a.mc_seeds = mc_seeds;
        for (std::size_t s = 0; s < mc_seeds; ++s) {
            const auto d = porosity::synth_defects(b.longest_melt, c.porosity.rate, part, c.porosity.bands.front(),
                                                   derive_seed(c.seed, 1000 + s));
            const auto p = porosity::ring_profile(d, part.center, part.radius, c.porosity.dr, c.porosity.bands.front(), opt);
            if (trend_of(p, c) > 0.0) ++a.mc_positive;
        }
    }
    return a;
}

inline std::vector<Check> porosity_checks(const PorosityAnalysis& a, const RunConfig& c) {
    std::vector<Check> out;
    const std::string rings =
        "rings " + std::to_string(c.porosity.trend_first) + "-" + std::to_string(c.porosity.trend_last);
    for (std::size_t k = 0; k < a.trends.size(); ++k) {
        const auto& band = c.porosity.bands[k];
        out.push_back(make_check("porosity.radial_trend_band" + std::to_string(k + 1), a.trends[k] > 0.0,
                                 "band " + fmt(band.z_lo) + ":" + fmt(band.z_hi) + " mm, " + rings +
                                     " rank correlation=" + fmt(a.trends[k]) + ", defects=" +
                                     std::to_string(a.defects[k].size())));
    }
    const double frac = a.mc_seeds ? static_cast<double>(a.mc_positive) / static_cast<double>(a.mc_seeds) : 0.0;
    out.push_back(make_check("porosity.radial_trend_seeds", frac >= 0.95,
                             std::to_string(a.mc_positive) + "/" + std::to_string(a.mc_seeds) +
                                 " seeds with positive " + rings + " rank correlation (need >= 95%)"));
    return out;
}

// ------------------------------------------------------------------- cluster

struct ClusterAnalysis {
    std::vector<double> events;
    cluster::WindowSet windows;
    cluster::ClusterResult result;
};

inline ClusterAnalysis analyze_clusters(const signal::SignalSeries& series, std::span<const ScanPattern> patterns,
                                        const RunConfig& c) {
    ClusterAnalysis a;
    const auto W = static_cast<std::size_t>(c.cluster.window);
    a.events = signal::threshold_events(series, c.signal.threshold, c.signal.direction, W);
    a.windows = cluster::extract_windows(series, a.events, W, c.cluster.normalization);
    a.result = cluster::cluster_windows(a.windows.windows, c.cluster.eps, static_cast<std::size_t>(c.cluster.min_samples));
    cluster::ClassifyOptions opt;
    opt.turn_radius = c.cluster.turn_radius;
    opt.member_fraction = c.cluster.member_fraction;
    opt.min_decay = c.cluster.min_decay;
    cluster::coregister_and_classify(a.result, a.windows.windows, patterns, opt);
    return a;
}

struct ClusterSummary {
    int label = 0;
    std::size_t size = 0;
    cluster::ClassLabel cls = cluster::ClassLabel::residual;
    double mean_boundary_distance = 0.0;  // mm
};

inline std::vector<ClusterSummary> summarize_clusters(const ClusterAnalysis& a, const Circle& part) {
    std::map<int, ClusterSummary> m;
    for (std::size_t i = 0; i < a.result.labels.size(); ++i) {
        const int l = a.result.labels[i];
        if (l == cluster::noise) continue;
        auto& s = m[l];
        s.label = l;
        ++s.size;
        s.mean_boundary_distance += part.radius - distance(a.windows.windows[i].position, part.center);
    }
    std::vector<ClusterSummary> out;
    for (auto& [l, s] : m) {
        s.mean_boundary_distance /= static_cast<double>(s.size);
        s.cls = a.result.class_of(l);
        out.push_back(s);
    }
    return out;
}

inline std::string format_cluster_summary(const std::vector<ClusterSummary>& s, const io::Provenance& prov) {
    std::ostringstream os;
    io::write_provenance(os, prov, "cluster-summary");
    os << "label\tsize\tclass\tmean_boundary_distance\n";
    for (const auto& x : s)
        os << x.label << '\t' << x.size << '\t' << cluster::to_string(x.cls) << '\t'
           << io::format_number(x.mean_boundary_distance) << '\n';
    return os.str();
}

// ----------------------------------------------------------------- reproduce

struct ReproduceResult {
    ProbeStudy probe;
    double gain = 0.0;
    BuildRun build;
    MapAnalysis maps;
    PorosityAnalysis porosity;
    ClusterAnalysis clusters;
    std::vector<ClusterSummary> cluster_summary;
    std::vector<Check> checks;
    std::vector<std::filesystem::path> files;  // relative to the output directory
};

inline std::string format_summary(const ReproduceResult& r, const RunConfig& c, const io::Provenance& prov) {
    std::ostringstream os;
    io::write_provenance(os, prov, "summary");
    std::size_t pass = 0, fail = 0, skip = 0;
    for (const auto& k : r.checks) {
        if (k.status == Check::Status::pass) ++pass;
        else if (k.status == Check::Status::fail) ++fail;
        else ++skip;
    }
    os << "checks: " << pass << " pass, " << fail << " fail, " << skip << " skipped\n";
    for (const auto& k : r.checks) os << to_string(k.status) << '\t' << k.name << '\t' << k.detail << '\n';
    os << "\nsignal: gain=" << io::format_number(r.gain) << ", samples=" << r.build.series.size();
    if (!r.build.series.empty()) {
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        for (const auto& s : r.build.series.samples) {
            lo = std::min(lo, s.value);
            hi = std::max(hi, s.value);
        }
        os << ", min=" << fmt(lo) << ", max=" << fmt(hi) << (hi - lo <= 1e-9 * std::abs(hi) ? " (flat)" : "");
    }
    os << "\nthermal: build dt=" << fmt(r.build.dt) << " s, steps=" << r.build.steps
       << ", absorbed=" << fmt(r.build.absorbed_energy) << " J\n";
    for (std::size_t k = 0; k < r.porosity.profiles.size(); ++k) {
        double lo = 1.0;
        for (const auto& ring : r.porosity.profiles[k].rings) lo = std::min(lo, ring.relative_density);
        os << "porosity band " << k + 1 << ": defects=" << r.porosity.defects[k].size() << ", min RD=" << fmt(lo, 8)
           << '\n';
    }
    os << "events: " << r.clusters.events.size() << " (" << signal::to_string(c.signal.direction) << " "
       << fmt(c.signal.threshold) << "), windows=" << r.clusters.windows.windows.size()
       << ", dropped=" << r.clusters.windows.dropped << '\n';
    for (const auto& s : r.cluster_summary)
        os << "cluster " << s.label << ": size=" << s.size << ", class=" << cluster::to_string(s.cls)
           << ", mean boundary distance=" << fmt(s.mean_boundary_distance) << " mm\n";
    return os.str();
}

/// Runs every stage and writes probe_study/, build/, porosity/, clusters/ and summary.txt
/// under `out`. A failing stage throws StageError; files already written stay.
inline ReproduceResult reproduce(const RunConfig& c, const std::filesystem::path& out,
                                 std::size_t mc_seeds = 100) {
    namespace fs = std::filesystem;
    if (auto v = c.validate(); !v.empty()) throw ConfigError(v);
    const auto prov = provenance(c);
    ReproduceResult r;
    std::string stage = "setup";
    auto write = [&](const fs::path& rel, const std::string& text) {
        fs::create_directories((out / rel).parent_path());
        io::write_text_file((out / rel).string(), text);
        r.files.push_back(rel);
    };
    const bool powered = c.machine.laser_power > 0.0;
    auto skipped = [](std::string name) {
        return Check{std::move(name), Check::Status::skipped, "laser power is zero"};
    };
    try {
        write("config.txt", serialize(c));

        stage = "probe study";
        r.probe = run_probe_study(c);
        write("probe_study/pattern.tsv", io::format_patterns({r.probe.pattern}, prov));
        write("probe_study/histories.tsv", io::format_probe_histories(r.probe.result.probes, r.probe.names, prov));
        write("probe_study/metrics.tsv", io::format_probe_metrics(r.probe.result.probes, r.probe.names, prov));
        if (powered)
            for (auto& k : probe_checks(r.probe, c.material)) r.checks.push_back(std::move(k));
        else
            for (const char* n : {"probe.center_two_separated_peaks", "probe.edge_approach_longest_above_liquidus",
                                  "probe.edge_departure_highest_peak"})
                r.checks.push_back(skipped(n));

        stage = "build";
        const auto grid = build_grid(c);
        if (c.signal.gain > 0.0) r.gain = c.signal.gain;
        else r.gain = powered ? calibrate_gain(c, grid) : 1.0;
        r.build = run_build(c, r.gain);
        write("build/pattern.tsv", io::format_patterns(r.build.patterns, prov));
        write("build/series.tsv", io::format_series(r.build.series, prov));
        write("build/melt_longest.txt", format_metric_map(r.build.longest_melt, "mean per-layer longest time above liquidus, s", prov));
        write("build/melt_total.txt", format_metric_map(r.build.total_melt, "total time above liquidus, s", prov));

        stage = "maps";
        r.maps = analyze_maps(r.build, c);
        write("build/map_accumulated.txt", io::format_map(r.maps.accumulated, prov));
        write("build/map_layer0.txt", io::format_map(r.maps.first_layer, prov));
        write("build/radial.tsv", format_radial(r.maps, c.part.radius, c.signal.map_cell, prov));
        if (powered)
            for (auto& k : map_checks(r.maps)) r.checks.push_back(std::move(k));
        else
            for (const char* n : {"build.accumulated_edge_ring", "build.single_layer_no_ring"}) r.checks.push_back(skipped(n));

        stage = "porosity";
        r.porosity = analyze_porosity(r.build, c, mc_seeds);
        for (std::size_t k = 0; k < r.porosity.profiles.size(); ++k) {
            const std::string tag = "band" + std::to_string(k + 1);
            write("porosity/defects_" + tag + ".tsv", io::format_defects(r.porosity.defects[k], prov));
            write("porosity/profile_" + tag + ".tsv", io::format_profile(r.porosity.profiles[k], prov));
        }
        if (powered)
            for (auto& k : porosity_checks(r.porosity, c)) r.checks.push_back(std::move(k));
        else {
            for (std::size_t k = 0; k < c.porosity.bands.size(); ++k)
                r.checks.push_back(skipped("porosity.radial_trend_band" + std::to_string(k + 1)));
            r.checks.push_back(skipped("porosity.radial_trend_seeds"));
        }

        stage = "cluster";
        r.clusters = analyze_clusters(r.build.series, r.build.patterns, c);
        r.cluster_summary = summarize_clusters(r.clusters, c.part_circle());
        write("clusters/windows.tsv", io::format_windows(r.clusters.windows.windows, r.clusters.result, prov));
        write("clusters/clusters.tsv", format_cluster_summary(r.cluster_summary, prov));

        stage = "summary";
        write("summary.txt", format_summary(r, c, prov));
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
    return r;
}

}  // namespace lpbf::pipeline
