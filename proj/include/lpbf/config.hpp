#pragma once

// Run configuration as a flat key = value text file.
//
//   # comment
//   machine.laser_power = 170
//   porosity.bands = 14:20.5, 44:50.5
//
// Every key has a default, so an empty file is a complete configuration.
// Parsing reports every problem at once: unknown or repeated keys, malformed
// values and violated invariants.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lpbf/cluster.hpp"
#include "lpbf/common.hpp"
#include "lpbf/porosity.hpp"
#include "lpbf/scanpath.hpp"
#include "lpbf/signal.hpp"
#include "lpbf/tabular.hpp"
#include "lpbf/thermal/field.hpp"
#include "lpbf/thermal/material.hpp"
#include "lpbf/thermal/solver.hpp"

namespace lpbf {

struct PartSettings {
    double radius = 1.5;     // mm
    int layers = 20;
    double dead_time = 0.0;  // s between layers
};

struct SolverSettings {
    double dx_probe = 10.0;  // um, two-pass probe study
    double dx_build = 25.0;  // um, multi-layer cylinder
    double safety = 0.4;     // fraction of the explicit stability limit
    double depth = 0.2;      // mm
    double margin = 0.3;     // mm of unscanned material around the part
    double initial_temperature = thermal::build_plate_temperature;
    bool fixed_bottom = true;
    double plate_temperature = thermal::build_plate_temperature;
    thermal::SourceMode source = thermal::SourceMode::surface;
};

struct ProbeSettings {
    double edge_offset = 0.2;  // mm from the turning point to the edge probes
    double width = 1.0;        // mm across the hatch lines
    double cooldown = 0.003;   // s after the second pass
    double peak_prominence = thermal::default_peak_prominence;  // K
};

struct SignalSettings {
    double r_fov = 240.0;    // um
    double gain = 0.0;       // 0 selects calibration on a bare single pass
    double noise_sigma = 0.0;
    double threshold = 12000.0;
    signal::Direction direction = signal::Direction::above;
    double map_cell = 0.05;  // mm
    signal::Statistic map_stat = signal::Statistic::max;
};

struct PorositySettings {
    double dr = 0.2;  // mm
    std::vector<porosity::HeightBand> bands{{14.0, 20.5}, {44.0, 50.5}};
    porosity::RateModel rate;
    int trend_first = 3;  // ring numbers counted from 1 at the centre
    int trend_last = 7;
    bool exclude_outer = false;
};

struct ClusterSettings {
    double eps = 0.55;
    int min_samples = 5;
    int window = 10;
    double turn_radius = 0.2;  // mm
    cluster::Normalization normalization = cluster::Normalization::minmax;
    double member_fraction = 0.8;
    double min_decay = 0.3;
};

struct RunConfig {
    std::uint64_t seed = 20211;
    MachineParams machine;
    double absorptivity = 1.0;
    thermal::MaterialProps material;
    PartSettings part;
    SolverSettings solver;
    ProbeSettings probe;
    SignalSettings signal;
    PorositySettings porosity;
    ClusterSettings cluster;

    std::vector<std::string> validate() const;
    Circle part_circle() const { return {{0.0, 0.0}, part.radius}; }
    std::size_t ring_count() const {
        return static_cast<std::size_t>(std::ceil(part.radius / porosity.dr - 1e-9));
    }
};

namespace config_detail {

struct Field {
    std::string key;
    std::function<std::string()> get;
    std::function<bool(std::string_view)> set;
};

inline std::string show(double v) { return io::format_number(v); }

inline Field number(std::string key, double& x) {
    return {std::move(key), [&x] { return show(x); }, [&x](std::string_view s) {
                auto v = io::parse_double(s);
                if (!v) return false;
                x = *v;
                return true;
            }};
}

inline Field integer(std::string key, int& x) {
    return {std::move(key), [&x] { return std::to_string(x); }, [&x](std::string_view s) {
                auto v = io::parse_int(s);
                if (!v || *v < -2147483647LL || *v > 2147483647LL) return false;
                x = static_cast<int>(*v);
                return true;
            }};
}

inline Field boolean(std::string key, bool& x) {
    return {std::move(key), [&x] { return std::string(x ? "true" : "false"); }, [&x](std::string_view s) {
                s = io::trim(s);
                if (s == "true") x = true;
                else if (s == "false") x = false;
                else return false;
                return true;
            }};
}

template <class E>
Field choice(std::string key, E& x, std::function<const char*(E)> name, std::function<std::optional<E>(std::string_view)> parse) {
    return {std::move(key), [&x, name] { return std::string(name(x)); }, [&x, parse](std::string_view s) {
                auto v = parse(io::trim(s));
                if (!v) return false;
                x = *v;
                return true;
            }};
}

inline std::string show_bands(const std::vector<porosity::HeightBand>& b) {
    std::string out;
    for (const auto& x : b) {
        if (!out.empty()) out += ", ";
        out += show(x.z_lo) + ":" + show(x.z_hi);
    }
    return out;
}

inline std::optional<porosity::HeightBand> parse_band(std::string_view s) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto lo = io::parse_double(s.substr(0, colon));
    auto hi = io::parse_double(s.substr(colon + 1));
    if (!lo || !hi) return std::nullopt;
    return porosity::HeightBand{*lo, *hi};
}

inline std::vector<Field> schema(RunConfig& c) {
    using namespace thermal;
    std::vector<Field> f;
    f.push_back({"seed", [&c] { return std::to_string(c.seed); }, [&c](std::string_view s) {
                     s = io::trim(s);
                     std::uint64_t v = 0;
                     auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                     if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return false;
                     c.seed = v;
                     return true;
                 }});
    f.push_back(number("machine.laser_power", c.machine.laser_power));
    f.push_back(number("machine.scan_speed", c.machine.scan_speed));
    f.push_back(number("machine.hatch_distance", c.machine.hatch_distance));
    f.push_back(number("machine.layer_thickness", c.machine.layer_thickness));
    f.push_back(number("machine.rotation_increment", c.machine.rotation_increment));
    f.push_back(number("machine.spot_radius", c.machine.spot_radius));
    f.push_back(number("machine.base_angle", c.machine.base_angle));
    f.push_back(number("machine.absorptivity", c.absorptivity));

    f.push_back(number("material.density", c.material.density));
    f.push_back(number("material.conductivity", c.material.conductivity));
    f.push_back(number("material.heat_capacity", c.material.heat_capacity));
    f.push_back(number("material.solidus", c.material.solidus));
    f.push_back(number("material.liquidus", c.material.liquidus));
    f.push_back(number("material.latent_heat", c.material.latent_heat));

    f.push_back(number("part.radius", c.part.radius));
    f.push_back(integer("part.layers", c.part.layers));
    f.push_back(number("part.dead_time", c.part.dead_time));

    f.push_back(number("solver.dx_probe", c.solver.dx_probe));
    f.push_back(number("solver.dx_build", c.solver.dx_build));
    f.push_back(number("solver.safety", c.solver.safety));
    f.push_back(number("solver.depth", c.solver.depth));
    f.push_back(number("solver.margin", c.solver.margin));
    f.push_back(number("solver.initial_temperature", c.solver.initial_temperature));
    f.push_back({"solver.bottom", [&c] { return std::string(c.solver.fixed_bottom ? "fixed" : "adiabatic"); },
                 [&c](std::string_view s) {
                     s = io::trim(s);
                     if (s == "fixed") c.solver.fixed_bottom = true;
                     else if (s == "adiabatic") c.solver.fixed_bottom = false;
                     else return false;
                     return true;
                 }});
    f.push_back(number("solver.plate_temperature", c.solver.plate_temperature));
    f.push_back({"solver.source",
                 [&c] { return std::string(c.solver.source == SourceMode::surface ? "surface" : "volumetric"); },
                 [&c](std::string_view s) {
                     s = io::trim(s);
                     if (s == "surface") c.solver.source = SourceMode::surface;
                     else if (s == "volumetric") c.solver.source = SourceMode::volumetric;
                     else return false;
                     return true;
                 }});

    f.push_back(number("probe.edge_offset", c.probe.edge_offset));
    f.push_back(number("probe.width", c.probe.width));
    f.push_back(number("probe.cooldown", c.probe.cooldown));
    f.push_back(number("probe.peak_prominence", c.probe.peak_prominence));

    f.push_back(number("signal.r_fov", c.signal.r_fov));
    f.push_back({"signal.gain", [&c] { return c.signal.gain > 0.0 ? show(c.signal.gain) : std::string("auto"); },
                 [&c](std::string_view s) {
                     if (io::trim(s) == "auto") {
                         c.signal.gain = 0.0;
                         return true;
                     }
                     auto v = io::parse_double(s);
                     if (!v) return false;
                     c.signal.gain = *v;
                     return true;
                 }});
    f.push_back(number("signal.noise_sigma", c.signal.noise_sigma));
    f.push_back(number("signal.threshold", c.signal.threshold));
    f.push_back(choice<signal::Direction>("signal.direction", c.signal.direction,
                                          [](signal::Direction d) { return signal::to_string(d); },
                                          signal::parse_direction));
    f.push_back(number("signal.map_cell", c.signal.map_cell));
    f.push_back(choice<signal::Statistic>("signal.map_stat", c.signal.map_stat,
                                          [](signal::Statistic s) { return signal::to_string(s); },
                                          signal::parse_statistic));

    f.push_back(number("porosity.dr", c.porosity.dr));
    f.push_back({"porosity.bands", [&c] { return show_bands(c.porosity.bands); }, [&c](std::string_view s) {
                     std::vector<porosity::HeightBand> out;
                     std::size_t start = 0;
                     while (start <= s.size()) {
                         const auto comma = s.find(',', start);
                         const auto part = io::trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start));
                         auto b = parse_band(part);
                         if (!b) return false;
                         out.push_back(*b);
                         if (comma == std::string_view::npos) break;
                         start = comma + 1;
                     }
                     c.porosity.bands = std::move(out);
                     return true;
                 }});
    f.push_back(number("porosity.p0", c.porosity.rate.p0));
    f.push_back(number("porosity.k", c.porosity.rate.k));
    f.push_back(number("porosity.volume_median", c.porosity.rate.volume_median));
    f.push_back(number("porosity.volume_sigma", c.porosity.rate.volume_sigma));
    f.push_back(integer("porosity.trend_first", c.porosity.trend_first));
    f.push_back(integer("porosity.trend_last", c.porosity.trend_last));
    f.push_back(boolean("porosity.exclude_outer", c.porosity.exclude_outer));

    f.push_back(number("cluster.eps", c.cluster.eps));
    f.push_back(integer("cluster.min_samples", c.cluster.min_samples));
    f.push_back(integer("cluster.window", c.cluster.window));
    f.push_back(number("cluster.turn_radius", c.cluster.turn_radius));
    f.push_back(choice<cluster::Normalization>("cluster.normalization", c.cluster.normalization,
                                               [](cluster::Normalization n) { return cluster::to_string(n); },
                                               cluster::parse_normalization));
    f.push_back(number("cluster.member_fraction", c.cluster.member_fraction));
    f.push_back(number("cluster.min_decay", c.cluster.min_decay));
    return f;
}

}  // namespace config_detail

inline std::vector<std::string> RunConfig::validate() const {
    std::vector<std::string> v;
    auto add = [&](const std::string& prefix, const std::vector<std::string>& inner) {
        for (const auto& s : inner) v.push_back(prefix + s);
    };
    auto need = [&](bool ok, const char* msg) {
        if (!ok) v.emplace_back(msg);
    };
    add("machine.", machine.validate());
    need(absorptivity > 0.0 && absorptivity <= 1.0, "machine.absorptivity must lie in (0, 1]");
    add("material.", material.validate());

    need(part.radius > machine.hatch_distance && std::isfinite(part.radius),
         "part.radius must exceed machine.hatch_distance");
    need(part.layers >= 1, "part.layers must be >= 1");
    need(part.dead_time >= 0.0 && std::isfinite(part.dead_time), "part.dead_time must be >= 0");

    need(solver.dx_probe > 0.0 && std::isfinite(solver.dx_probe), "solver.dx_probe must be > 0");
    need(solver.dx_build > 0.0 && std::isfinite(solver.dx_build), "solver.dx_build must be > 0");
    need(solver.safety > 0.0 && solver.safety <= 1.0, "solver.safety must lie in (0, 1]");
    need(solver.depth > 0.0 && std::isfinite(solver.depth), "solver.depth must be > 0");
    need(solver.depth * 1e3 >= 2.0 * std::max(solver.dx_probe, solver.dx_build),
         "solver.depth must span at least two cells");
    need(solver.margin >= 0.0 && std::isfinite(solver.margin), "solver.margin must be >= 0");
    need(solver.initial_temperature > 0.0 && std::isfinite(solver.initial_temperature),
         "solver.initial_temperature must be > 0");
    need(solver.plate_temperature > 0.0 && std::isfinite(solver.plate_temperature),
         "solver.plate_temperature must be > 0");

    need(probe.edge_offset > 0.0 && probe.edge_offset < part.radius,
         "probe.edge_offset must lie in (0, part.radius)");
    need(probe.width > machine.hatch_distance, "probe.width must exceed machine.hatch_distance");
    need(probe.cooldown >= 0.0 && std::isfinite(probe.cooldown), "probe.cooldown must be >= 0");
    need(probe.peak_prominence >= 0.0, "probe.peak_prominence must be >= 0");

    need(signal.r_fov > 0.0 && std::isfinite(signal.r_fov), "signal.r_fov must be > 0");
    need(signal.gain >= 0.0 && std::isfinite(signal.gain), "signal.gain must be auto or > 0");
    need(signal.noise_sigma >= 0.0 && std::isfinite(signal.noise_sigma), "signal.noise_sigma must be >= 0");
    need(std::isfinite(signal.threshold), "signal.threshold must be finite");
    need(signal.map_cell > 0.0 && std::isfinite(signal.map_cell), "signal.map_cell must be > 0");

    need(porosity.dr > 0.0 && std::isfinite(porosity.dr), "porosity.dr must be > 0");
    need(!porosity.bands.empty(), "porosity.bands must list at least one band");
    for (std::size_t i = 0; i < porosity.bands.size(); ++i) {
        const auto& b = porosity.bands[i];
        if (!(b.z_hi > b.z_lo)) v.push_back("porosity.bands entry " + std::to_string(i + 1) + " needs z_hi > z_lo");
        for (std::size_t j = 0; j < i; ++j)
            if (b.overlaps(porosity.bands[j]))
                v.push_back("porosity.bands entries " + std::to_string(j + 1) + " and " + std::to_string(i + 1) +
                            " overlap");
    }
    need(porosity.rate.p0 >= 0.0 && porosity.rate.k >= 0.0 && porosity.rate.volume_median > 0.0 &&
             porosity.rate.volume_sigma >= 0.0,
         "porosity rate model needs p0 >= 0, k >= 0, volume_median > 0, volume_sigma >= 0");
    need(porosity.trend_first >= 1 && porosity.trend_first < porosity.trend_last,
         "porosity.trend_first/trend_last must satisfy 1 <= first < last");

    need(cluster.eps > 0.0 && std::isfinite(cluster.eps), "cluster.eps must be > 0");
    need(cluster.min_samples >= 1, "cluster.min_samples must be >= 1");
    need(cluster.window >= 2, "cluster.window must be >= 2");
    need(cluster.turn_radius > 0.0, "cluster.turn_radius must be > 0");
    need(cluster.member_fraction > 0.0 && cluster.member_fraction <= 1.0,
         "cluster.member_fraction must lie in (0, 1]");
    need(cluster.min_decay >= 0.0 && cluster.min_decay <= 1.0, "cluster.min_decay must lie in [0, 1]");
    return v;
}

/// Canonical text: every key in schema order, one per line.
inline std::string serialize(const RunConfig& c) {
    RunConfig copy = c;
    std::ostringstream os;
    std::string section;
    for (const auto& f : config_detail::schema(copy)) {
        const auto dot = f.key.find('.');
        const std::string s = dot == std::string::npos ? "" : f.key.substr(0, dot);
        if (s != section) {
            os << '\n';
            section = s;
        }
        os << f.key << " = " << f.get() << '\n';
    }
    return os.str();
}

inline std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a(serialize(c))); }

/// Parses without validating invariants; syntax problems are collected.
inline RunConfig parse_config_text(std::string_view text, std::vector<std::string>& problems) {
    RunConfig c;
    auto fields = config_detail::schema(c);
    std::vector<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = io::trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back(where + "expected 'key = value'");
            continue;
        }
        const std::string key(io::trim(line.substr(0, eq)));
        const std::string_view value = io::trim(line.substr(eq + 1));
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
        if (it == fields.end()) {
            problems.push_back(where + "unknown key '" + key + "'");
            continue;
        }
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
            problems.push_back(where + "duplicate key '" + key + "'");
            continue;
        }
        seen.push_back(key);
        if (!it->set(value)) problems.push_back(where + "invalid value '" + std::string(value) + "' for " + key);
    }
    return c;
}

/// Parses and validates; throws ConfigError listing every problem.
inline RunConfig parse_config(std::string_view text) {
    std::vector<std::string> problems;
    RunConfig c = parse_config_text(text, problems);
    for (auto& s : c.validate()) problems.push_back(std::move(s));
    if (!problems.empty()) throw ConfigError(problems);
    return c;
}

inline RunConfig read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Applies `key=value` overrides on top of `c`.
inline RunConfig apply_overrides(const RunConfig& c, const std::vector<std::string>& overrides) {
    std::string text = serialize(c);
    std::vector<std::string> problems;
    RunConfig base = parse_config_text(text, problems);
    auto fields = config_detail::schema(base);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) {
            problems.push_back("override '" + o + "': expected key=value");
            continue;
        }
        const std::string key(io::trim(std::string_view(o).substr(0, eq)));
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
        if (it == fields.end()) problems.push_back("override: unknown key '" + key + "'");
        else if (!it->set(std::string_view(o).substr(eq + 1)))
            problems.push_back("override: invalid value for " + key);
    }
    for (auto& s : base.validate()) problems.push_back(std::move(s));
    if (!problems.empty()) throw ConfigError(problems);
    return base;
}

inline io::Provenance provenance(const RunConfig& c) {
    io::Provenance p;
    p.config_hash = config_hash(c);
    p.seed = c.seed;
    return p;
}

}  // namespace lpbf
