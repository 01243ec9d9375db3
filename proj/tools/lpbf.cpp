// lpbf: command-line front end for the edge-effect pipeline.
//
// Exit codes: 0 success, 1 usage, 2 invalid configuration, 3 runtime failure.
// Failures print one JSON object on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lpbf/pipeline.hpp"
#include "lpbf/version.hpp"

namespace fs = std::filesystem;
using namespace lpbf;

namespace {

enum Exit { ok = 0, usage = 1, config_invalid = 2, runtime = 3 };

int fail(int code, const std::string& command, const std::string& stage, const std::string& message,
         const std::vector<std::string>& problems = {}) {
    static constexpr const char* kinds[] = {"ok", "usage", "config", "runtime"};
    nlohmann::json j = {{"error", kinds[code]}, {"code", code}, {"command", command}, {"message", message}};
    if (!stage.empty()) j["stage"] = stage;
    if (!problems.empty()) j["problems"] = problems;
    std::cerr << j.dump() << '\n';
    return code;
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key = value configuration file");
        app->add_option("--set", overrides, "override one key, e.g. --set machine.laser_power=150")->take_all();
    }
    RunConfig load() const {
        RunConfig c = config_path.empty() ? RunConfig{} : read_config_file(config_path);
        return overrides.empty() ? c : apply_overrides(c, overrides);
    }
};

template <class T>
void set_if(std::optional<T> v, T& dst) {
    if (v) dst = *v;
}

RunConfig checked(RunConfig c) {
    if (auto v = c.validate(); !v.empty()) throw ConfigError(v);
    return c;
}

porosity::HeightBand parse_band_flag(const std::string& s) {
    if (auto b = config_detail::parse_band(s)) return *b;
    throw ConfigError({"band '" + s + "' must read z_lo:z_hi with z_hi > z_lo"});
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error("cannot create directory '" + p.string() + "': " + ec.message());
}

thermal::Grid grid_around(const std::vector<ScanPattern>& p, const RunConfig& c) {
    double lo_x = HUGE_VAL, lo_y = HUGE_VAL, hi_x = -HUGE_VAL, hi_y = -HUGE_VAL;
    for (const auto& layer : p)
        for (const auto& s : layer.segments)
            for (Vec2 q : {s.start, s.end}) {
                lo_x = std::min(lo_x, q.x);
                lo_y = std::min(lo_y, q.y);
                hi_x = std::max(hi_x, q.x);
                hi_y = std::max(hi_y, q.y);
            }
    if (lo_x > hi_x) throw InputError("pattern file has no segments");
    const double m = c.solver.margin;
    return pipeline::box_grid(lo_x - m, hi_x + m, lo_y - m, hi_y + m, c.solver.depth, c.solver.dx_build);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Laser powder bed fusion edge-effect laboratory"};
    app.set_version_flag("--version", std::string(version_string));
    app.require_subcommand(1);
    std::string command;
    std::string stage;

    // scan gen
    auto* scan = app.add_subcommand("scan", "scan pattern tools")->require_subcommand(1);
    auto* scan_gen = scan->add_subcommand("gen", "generate rotated line-hatch layers");
    Common scan_common;
    scan_common.attach(scan_gen);
    std::optional<double> g_radius, g_hatch, g_speed, g_rotation;
    std::optional<int> g_layers;
    std::string g_out;
    scan_gen->add_option("--radius", g_radius, "part radius, mm");
    scan_gen->add_option("--hatch", g_hatch, "hatch distance, mm");
    scan_gen->add_option("--speed", g_speed, "scan speed, mm/s");
    scan_gen->add_option("--rotation", g_rotation, "rotation per layer, degrees");
    scan_gen->add_option("--layers", g_layers, "layer count");
    scan_gen->add_option("--out", g_out, "pattern file")->required();

    // thermal run
    auto* thermal_cmd = app.add_subcommand("thermal", "heat conduction")->require_subcommand(1);
    auto* thermal_run = thermal_cmd->add_subcommand("run", "run the solver along a pattern and record probes");
    Common thermal_common;
    thermal_common.attach(thermal_run);
    std::string t_pattern, t_material, t_probes, t_out;
    std::optional<double> t_dx, t_cooldown;
    thermal_run->add_option("--pattern", t_pattern, "pattern file")->required()->check(CLI::ExistingFile);
    thermal_run->add_option("--material", t_material, "configuration file with material and solver keys")
        ->check(CLI::ExistingFile);
    thermal_run->add_option("--probes", t_probes, "probe table: name x y z (mm, z from the domain bottom)")
        ->check(CLI::ExistingFile);
    thermal_run->add_option("--dx", t_dx, "cell size, um");
    thermal_run->add_option("--cooldown", t_cooldown, "laser-off time after the last segment, s");
    thermal_run->add_option("--out-dir", t_out, "output directory")->required();

    // signal map
    auto* signal_cmd = app.add_subcommand("signal", "photodiode signal tools")->require_subcommand(1);
    auto* signal_map = signal_cmd->add_subcommand("map", "bin signal series into an intensity map");
    Common signal_common;
    signal_common.attach(signal_map);
    std::vector<std::string> s_series;
    std::optional<double> s_cell;
    std::optional<std::string> s_stat;
    std::optional<int> s_layer;
    std::string s_out;
    signal_map->add_option("--series", s_series, "series files")->required()->check(CLI::ExistingFile);
    signal_map->add_option("--cell", s_cell, "cell size, mm");
    signal_map->add_option("--stat", s_stat, "max or mean");
    signal_map->add_option("--layer", s_layer, "only this layer");
    signal_map->add_option("--out", s_out, "map file")->required();

    // porosity profile
    auto* porosity_cmd = app.add_subcommand("porosity", "defect analysis")->require_subcommand(1);
    auto* porosity_profile = porosity_cmd->add_subcommand("profile", "ring relative-density profile");
    Common porosity_common;
    porosity_common.attach(porosity_profile);
    std::string p_defects, p_out;
    std::optional<double> p_radius, p_dr;
    std::optional<std::string> p_band;
    bool p_exclude_outer = false;
    porosity_profile->add_option("--defects", p_defects, "defect table: x y z volume [diameter]")
        ->required()
        ->check(CLI::ExistingFile);
    porosity_profile->add_option("--radius", p_radius, "part radius, mm");
    porosity_profile->add_option("--dr", p_dr, "ring width, mm");
    porosity_profile->add_option("--band", p_band, "height band z_lo:z_hi, mm");
    porosity_profile->add_flag("--exclude-outer", p_exclude_outer, "flag the outermost ring");
    porosity_profile->add_option("--out", p_out, "profile file")->required();

    // cluster run
    auto* cluster_cmd = app.add_subcommand("cluster", "anomaly clustering")->require_subcommand(1);
    auto* cluster_run = cluster_cmd->add_subcommand("run", "threshold, window, cluster and classify");
    Common cluster_common;
    cluster_common.attach(cluster_run);
    std::string c_series, c_pattern, c_out;
    std::optional<double> c_threshold, c_eps;
    std::optional<std::string> c_direction;
    std::optional<int> c_min_samples, c_window;
    cluster_run->add_option("--series", c_series, "series file")->required()->check(CLI::ExistingFile);
    cluster_run->add_option("--pattern", c_pattern, "pattern file")->required()->check(CLI::ExistingFile);
    cluster_run->add_option("--threshold", c_threshold, "event threshold");
    cluster_run->add_option("--direction", c_direction, "above or below");
    cluster_run->add_option("--eps", c_eps, "neighbourhood radius");
    cluster_run->add_option("--min-samples", c_min_samples, "core point size");
    cluster_run->add_option("--window", c_window, "window length, samples");
    cluster_run->add_option("--out-dir", c_out, "output directory")->required();

    // reproduce
    auto* repro = app.add_subcommand("reproduce", "run every stage and write the figure datasets");
    Common repro_common;
    repro_common.attach(repro);
    std::string r_out = "reproduce_out";
    std::size_t r_seeds = 100;
    repro->add_option("--out-dir", r_out, "output directory")->capture_default_str();
    repro->add_option("--seeds", r_seeds, "porosity seeds for the trend fraction")->capture_default_str();

    // config show
    auto* config_cmd = app.add_subcommand("config", "configuration tools")->require_subcommand(1);
    auto* config_show = config_cmd->add_subcommand("show", "print the effective configuration");
    Common show_common;
    show_common.attach(config_show);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return fail(usage, "", "", e.what());
    }

    try {
        if (*scan_gen) {
            command = "scan gen";
            stage = "config";
            RunConfig c = scan_common.load();
            set_if(g_radius, c.part.radius);
            set_if(g_hatch, c.machine.hatch_distance);
            set_if(g_speed, c.machine.scan_speed);
            set_if(g_rotation, c.machine.rotation_increment);
            set_if(g_layers, c.part.layers);
            c = checked(c);
            stage = "scan";
            const auto p = generate_build(c.machine, c.part_circle(), c.part.layers, c.part.dead_time);
            io::write_text_file(g_out, io::format_patterns(p, provenance(c)));
        } else if (*thermal_run) {
            command = "thermal run";
            stage = "config";
            RunConfig c = t_material.empty() ? thermal_common.load() : read_config_file(t_material);
            if (!t_material.empty() && !thermal_common.overrides.empty()) c = apply_overrides(c, thermal_common.overrides);
            set_if(t_dx, c.solver.dx_build);
            c = checked(c);
            stage = "input";
            const auto patterns = io::read_patterns_file(t_pattern);
            std::vector<io::NamedProbe> named;
            if (!t_probes.empty()) named = io::parse_probes(io::read_table_file(t_probes));
            stage = "thermal";
            const auto grid = grid_around(patterns, c);
            const auto field = thermal::make_uniform_field(grid, c.solver.initial_temperature, pipeline::boundary(c),
                                                           c.material);
            auto rs = pipeline::run_settings(c);
            rs.track_surface_melt = true;
            if (t_cooldown) rs.cooldown = *t_cooldown;
            std::vector<Vec3> probes;
            std::vector<std::string> names;
            for (const auto& p : named) {
                probes.push_back({p.position.x * 1e-3, p.position.y * 1e-3, p.position.z * 1e-3});
                names.push_back(p.name);
            }
            auto r = thermal::run(patterns, field, rs, probes);
            stage = "output";
            ensure_dir(t_out);
            const auto prov = provenance(c);
            const fs::path out(t_out);
            io::write_text_file((out / "probes.tsv").string(), io::format_probe_histories(r.probes, names, prov));
            io::write_text_file((out / "metrics.tsv").string(), io::format_probe_metrics(r.probes, names, prov));
            io::write_field((out / "field.bin").string(), r.final_field, prov);
            io::write_text_file((out / "melt_longest.txt").string(),
                                pipeline::format_metric_map(pipeline::surface_map(grid, r.surface_longest_melt),
                                                            "mean per-layer longest time above liquidus, s", prov));
            io::write_text_file((out / "melt_total.txt").string(),
                                pipeline::format_metric_map(pipeline::surface_map(grid, r.surface_melt_time),
                                                            "total time above liquidus, s", prov));
        } else if (*signal_map) {
            command = "signal map";
            stage = "config";
            RunConfig c = signal_common.load();
            set_if(s_cell, c.signal.map_cell);
            if (s_stat) {
                auto st = signal::parse_statistic(*s_stat);
                if (!st) throw ConfigError({"--stat must be max or mean, got '" + *s_stat + "'"});
                c.signal.map_stat = *st;
            }
            c = checked(c);
            stage = "input";
            std::vector<signal::SignalSeries> series;
            for (const auto& f : s_series) series.push_back(io::read_series_file(f));
            stage = "signal";
            std::optional<int> layer;
            if (s_layer) layer = *s_layer;
            const auto map = signal::accumulate_map(series, c.signal.map_cell, c.signal.map_stat, std::nullopt, layer);
            io::write_text_file(s_out, io::format_map(map, provenance(c)));
        } else if (*porosity_profile) {
            command = "porosity profile";
            stage = "config";
            RunConfig c = porosity_common.load();
            set_if(p_radius, c.part.radius);
            set_if(p_dr, c.porosity.dr);
            if (p_band) c.porosity.bands = {parse_band_flag(*p_band)};
            if (p_exclude_outer) c.porosity.exclude_outer = true;
            c = checked(c);
            stage = "input";
            const auto in = porosity::ingest_defects_file(p_defects);
            for (const auto& r : in.rejects)
                std::cerr << "warning: " << p_defects << ":" << r.line << ": " << r.reason << '\n';
            stage = "porosity";
            const auto prof = porosity::ring_profile(in.records, {0.0, 0.0}, c.part.radius, c.porosity.dr,
                                                     c.porosity.bands.front(), pipeline::profile_options(c));
            io::write_text_file(p_out, io::format_profile(prof, provenance(c)));
        } else if (*cluster_run) {
            command = "cluster run";
            stage = "config";
            RunConfig c = cluster_common.load();
            set_if(c_threshold, c.signal.threshold);
            set_if(c_eps, c.cluster.eps);
            set_if(c_min_samples, c.cluster.min_samples);
            set_if(c_window, c.cluster.window);
            if (c_direction) {
                auto d = signal::parse_direction(*c_direction);
                if (!d) throw ConfigError({"--direction must be above or below, got '" + *c_direction + "'"});
                c.signal.direction = *d;
            }
            c = checked(c);
            stage = "input";
            const auto series = io::read_series_file(c_series);
            const auto patterns = io::read_patterns_file(c_pattern);
            stage = "cluster";
            const auto a = pipeline::analyze_clusters(series, patterns, c);
            Circle part = patterns.empty() ? c.part_circle() : patterns.front().domain;
            if (!(part.radius > 0.0)) part = c.part_circle();
            const auto summary = pipeline::summarize_clusters(a, part);
            stage = "output";
            ensure_dir(c_out);
            const auto prov = provenance(c);
            io::write_text_file((fs::path(c_out) / "windows.tsv").string(),
                                io::format_windows(a.windows.windows, a.result, prov));
            io::write_text_file((fs::path(c_out) / "clusters.tsv").string(),
                                pipeline::format_cluster_summary(summary, prov));
        } else if (*repro) {
            command = "reproduce";
            stage = "config";
            const RunConfig c = checked(repro_common.load());
            ensure_dir(r_out);
            const auto r = pipeline::reproduce(c, r_out, r_seeds);
            for (const auto& k : r.checks)
                std::cout << pipeline::to_string(k.status) << '\t' << k.name << '\t' << k.detail << '\n';
            std::cout << "wrote " << r.files.size() << " files to " << r_out << '\n';
        } else if (*config_show) {
            command = "config show";
            stage = "config";
            std::cout << serialize(checked(show_common.load()));
        }
    } catch (const ConfigError& e) {
        return fail(config_invalid, command, stage, e.what(), e.violations);
    } catch (const pipeline::StageError& e) {
        return fail(runtime, command, e.stage, e.what());
    } catch (const std::exception& e) {
        return fail(runtime, command, stage, e.what());
    }
    return ok;
}
