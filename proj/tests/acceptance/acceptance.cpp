// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// usage: acceptance [work_dir]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "lpbf/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lpbf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double rel(double a, double b) { return std::abs(a / b - 1.0); }

Outcome latent_heat() {
    const thermal::MaterialProps m;
    const double I = oracle::simpson(
        [&](double T) { return thermal::apparent_heat_capacity(T, m) - m.heat_capacity; }, 1677.0, 1713.0, 20000);
    return {rel(I, 247000.0) <= 0.005, "integral " + num(I, 7) + " J/kg"};
}

Outcome energy_conservation() {
    thermal::Grid g;
    g.nx = g.ny = 100;
    g.nz = 20;
    g.dx = 10e-6;
    g.origin = {-0.5e-3, -0.5e-3, 0.0};
    const auto f = thermal::make_uniform_field(g, thermal::build_plate_temperature,
                                               thermal::BoundarySpec::all_adiabatic());
    ScanPattern p;
    p.domain = {{0.0, 0.0}, 10.0};
    p.segments.push_back({{-0.25, 0.0}, {0.25, 0.0}, 0.0, 0.5 / 1085.0, true});
    const thermal::RunSettings rs;
    const auto r = thermal::run(std::span<const ScanPattern>(&p, 1), f, rs, {});
    const double expected = rs.absorptivity * 170.0 * 0.5 / 1085.0;
    const double gain = thermal::total_enthalpy(r.final_field, f.material) - thermal::total_enthalpy(f, f.material);
    return {rel(gain, expected) <= 0.01, "gain " + num(gain, 6) + " J vs " + num(expected, 6) + " J"};
}

Outcome point_source() {
    thermal::Grid g;
    g.nx = g.ny = g.nz = 61;
    g.dx = 10e-6;
    auto f = thermal::make_uniform_field(g, 300.0, thermal::BoundarySpec::all_adiabatic());
    thermal::HeatSolver s(f);
    const double E = 2e-6;
    s.add_cell_energy(30, 30, 30, E);
    const auto& m = s.material();
    double worst = 0.0;
    std::size_t n_checked = 0;
    bool sub_solidus = true;
    for (int n = 1; n <= 200; ++n) {
        s.step();
        if (n != 50 && n != 100 && n != 200) continue;
        const double t = n * s.dt();
        const double diffusion_length = std::sqrt(4.0 * m.diffusivity() * t);
        for (int a = 3; a <= 8; ++a)
            for (int b = 0; b <= a; ++b) {
                const double r = std::hypot(a, b) * g.dx;
                if (r > 1.5 * diffusion_length) continue;
                const double T = s.temperature(30 + a, 30 + b, 30);
                sub_solidus = sub_solidus && T < m.solidus;
                const double ref = oracle::point_source_rise(E, m.density, m.heat_capacity, m.conductivity, r, t);
                worst = std::max(worst, rel(T - 300.0, ref));
                ++n_checked;
            }
    }
    return {sub_solidus && n_checked > 30 && worst < 0.05,
            std::to_string(n_checked) + " samples, worst relative error " + num(worst, 3)};
}

Outcome checks_outcome(const std::vector<pipeline::Check>& checks, const std::string& prefix) {
    Outcome o{true, ""};
    std::size_t n = 0;
    for (const auto& c : checks) {
        if (c.name.rfind(prefix, 0) != 0) continue;
        ++n;
        o.pass = o.pass && c.status == pipeline::Check::Status::pass;
        if (!o.detail.empty()) o.detail += "; ";
        o.detail += c.name.substr(prefix.size()) + " " + pipeline::to_string(c.status) + " (" + c.detail + ")";
    }
    o.pass = o.pass && n > 0;
    return o;
}

Outcome probe_orderings(const RunConfig& c) {
    const auto s = pipeline::run_probe_study(c);
    return checks_outcome(pipeline::probe_checks(s, c.material), "probe.");
}

Outcome ring_exactness() {
    using namespace porosity;
    const HeightBand band{14.0, 20.5};
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> coord(-1500, 1499);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<DefectRecord> d;
        std::vector<oracle::Defect> o;
        const std::size_t n = 1 + rng() % 400;
        while (d.size() < n) {
            const double x = (coord(rng) + 0.5) * 1e-3, y = (coord(rng) + 0.5) * 1e-3;
            if (std::hypot(x, y) > 1.5) continue;
            const double z = 13.0 + 8.0 * u(rng), v = 1e-7 + 1e-4 * u(rng);
            d.push_back({{x, y, z}, v, std::nullopt});
            o.push_back({x, y, z, v});
        }
        const auto p = ring_profile(d, {0.0, 0.0}, 1.5, 0.2, band);
        const auto ref = oracle::voxel_ring_density(o, 1.5, 0.2, band.z_lo, band.z_hi);
        for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, rel(p.rings[k].relative_density, ref[k]));
    }
    const std::vector<DefectRecord> one{{{0.1, 0.0, 15.0}, 1e-4, std::nullopt}};
    const double V = std::numbers::pi * 0.2 * 0.2 * 6.5;
    const double hand = (V - 1e-4) / V;
    const double got = ring_profile(one, {0.0, 0.0}, 1.5, 0.2, band).rings[0].relative_density;
    return {worst <= 1e-9 && rel(got, hand) <= 1e-12,
            "worst voxel deviation " + num(worst, 3) + ", single defect RD " + num(got, 10)};
}

Outcome dbscan_equivalence() {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 0.12);
    std::size_t mismatches = 0, clusters = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 20 + rng() % 181, blobs = 1 + rng() % 4;
        std::vector<std::vector<double>> centers(blobs, std::vector<double>(10)), pts;
        for (auto& c : centers)
            for (double& v : c) v = u(rng);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> p(10);
            const bool background = rng() % 5 == 0;
            const auto& c = centers[rng() % blobs];
            for (std::size_t k = 0; k < 10; ++k) p[k] = background ? u(rng) : c[k] + gauss(rng);
            pts.push_back(std::move(p));
        }
        const auto labels = cluster::dbscan(pts, 0.55, 5);
        const auto ref = oracle::brute_force_dbscan(pts, 0.55, 5);
        bool same = true;
        std::set<std::size_t> noise_set;
        std::set<int> distinct;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == cluster::noise) noise_set.insert(i);
            else distinct.insert(labels[i]);
        }
        same = same && noise_set == ref.noise && distinct.size() == ref.clusters.size();
        std::set<int> used;
        for (const auto& core : ref.clusters) {
            const int l = labels[*core.begin()];
            for (std::size_t i : core) same = same && labels[i] == l;
            same = same && used.insert(l).second;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto& opts = ref.border_options[i];
            if (opts.empty()) continue;
            bool ok = false;
            for (std::size_t rep : opts) ok = ok || labels[rep] == labels[i];
            same = same && ok;
        }
        mismatches += !same;
        clusters += ref.clusters.size();
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 100 sets differ, " + std::to_string(clusters) +
                                 " reference clusters"};
}

Outcome t4_law() {
    thermal::Grid g;
    g.nx = g.ny = 40;
    g.nz = 3;
    g.dx = 10e-6;
    g.origin = {-200e-6, -200e-6, 0.0};
    const auto a = thermal::make_uniform_field(g, 900.0);
    const auto b = thermal::make_uniform_field(g, 1800.0);
    const double sa = signal::sample_photodiode(a, {0.0, 0.0}, 240e-6, 1.0);
    const double sb = signal::sample_photodiode(b, {0.0, 0.0}, 240e-6, 1.0);
    return {sa > 0.0 && rel(sb, 16.0 * sa) <= 1e-9, "ratio " + num(sb / sa, 15)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const RunConfig& c, const pipeline::ReproduceResult& first, const fs::path& a,
                    const fs::path& b, std::size_t seeds) {
    const auto second = pipeline::reproduce(c, b.string(), seeds);
    std::size_t differ = 0;
    std::string first_diff;
    for (const auto& f : first.files) {
        if (slurp(a / f) != slurp(b / f)) {
            if (!differ) first_diff = fs::path(f).string();
            ++differ;
        }
    }
    const bool same_count = first.files.size() == second.files.size();
    return {differ == 0 && same_count, std::to_string(first.files.size()) + " files compared" +
                                           (differ ? ", first difference in " + first_diff : "")};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    const RunConfig c;
    const std::size_t seeds = 100;
    int failures = 0;
    std::optional<pipeline::ReproduceResult> full;

    auto report = [&](int id, const std::string& title, const std::function<Outcome()>& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << title << " [" << num(secs, 3) << " s]: "
                  << o.detail << std::endl;
    };
    auto reproduced = [&]() -> const pipeline::ReproduceResult& {
        if (!full) {
            fs::remove_all(work / "run1");
            fs::create_directories(work / "run1");
            full = pipeline::reproduce(c, (work / "run1").string(), seeds);
        }
        return *full;
    };

    report(1, "latent heat quadrature", latent_heat);
    report(2, "adiabatic energy conservation", energy_conservation);
    report(3, "instantaneous point source", point_source);
    report(4, "two-pass probe orderings", [&] { return probe_orderings(c); });
    report(5, "accumulated edge ring", [&] { return checks_outcome(reproduced().checks, "build."); });
    report(6, "ring density exactness", ring_exactness);
    report(7, "dbscan reference equivalence", dbscan_equivalence);
    report(8, "radial density trend", [&] { return checks_outcome(reproduced().checks, "porosity."); });
    report(9, "fourth-power emission law", t4_law);
    report(10, "reproduce determinism", [&] {
        const auto& first = reproduced();
        fs::remove_all(work / "run2");
        fs::create_directories(work / "run2");
        return determinism(c, first, work / "run1", work / "run2", seeds);
    });

    std::cout << (10 - failures) << " of 10 criteria pass" << std::endl;
    return failures ? 1 : 0;
}
