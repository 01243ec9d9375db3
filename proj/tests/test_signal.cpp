#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <sstream>

#include "lpbf/pipeline.hpp"
#include "lpbf/signal.hpp"

using namespace lpbf;
using namespace lpbf::signal;
using Catch::Matchers::WithinRel;

namespace {

thermal::ThermalField flat_field(double T, std::size_t n = 20, double dx = 10e-6) {
    thermal::Grid g;
    g.nx = g.ny = n;
    g.nz = 3;
    g.dx = dx;
    g.origin = {-0.5 * n * dx, -0.5 * n * dx, 0.0};
    return thermal::make_uniform_field(g, T);
}

SignalSeries ramp_series(std::size_t n, double base = 100.0) {
    SignalSeries s;
    for (std::size_t i = 0; i < n; ++i)
        s.samples.push_back({i * 1e-5, base, {0.001 * static_cast<double>(i), 0.0}, 0});
    return s;
}

}  // namespace

TEST_CASE("uniform field gives gain * T^4 * covered area") {
    const auto f = flat_field(1000.0);
    const double big = 1.0;  // covers every top cell
    const double area = 20 * 20 * 1e-10;
    CHECK_THAT(sample_photodiode(f, {0.0, 0.0}, big, 2.0), WithinRel(2.0 * 1e12 * area, 1e-12));
    // A disc inside the grid sees exactly its own area wherever it sits on the lattice.
    for (Vec2 c : {Vec2{0.0, 0.0}, Vec2{3e-6, -7e-6}, Vec2{-21e-6, 13.5e-6}})
        CHECK_THAT(sample_photodiode(f, c, 40e-6, 1.0), WithinRel(1e12 * pi * 16e-10, 1e-12));
}

TEST_CASE("cell overlap areas match numerical integration") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        double x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        const double r = 2.0;
        // Chord of the disc inside [y0, y1] at x = r sin(th), integrated in th to
        // remove the square-root endpoint singularity.
        auto slice = [&](double th) {
            const double h = r * std::cos(th);
            return std::max(0.0, std::min(h, y1) - std::max(-h, y0)) * h;
        };
        const double a = std::asin(std::clamp(x0 / r, -1.0, 1.0)), b = std::asin(std::clamp(x1 / r, -1.0, 1.0));
        double num = 0.0;
        const int n = 20000;
        for (int k = 0; k < n; ++k) num += slice(a + (k + 0.5) * (b - a) / n);
        num *= (b - a) / n;
        CHECK_THAT(signal::detail::disc_rect_area(x0, x1, y0, y1, r), Catch::Matchers::WithinAbs(num, 1e-6));
    }
    CHECK_THAT(signal::detail::disc_rect_area(-5, 5, -5, 5, 2.0), WithinRel(4.0 * pi, 1e-14));
}

TEST_CASE("doubling temperatures multiplies the sample by 16") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(300.0, 3000.0);
    auto f = flat_field(0.0);
    for (double& T : f.T) T = u(rng);
    auto g = f;
    for (double& T : g.T) T *= 2.0;
    const double a = sample_photodiode(f, {3e-6, -11e-6}, 60e-6, 1.7);
    const double b = sample_photodiode(g, {3e-6, -11e-6}, 60e-6, 1.7);
    CHECK_THAT(b, WithinRel(16.0 * a, 1e-9));
}

TEST_CASE("raising an in-view cell never lowers the sample") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(300.0, 2000.0);
    auto f = flat_field(0.0);
    for (double& T : f.T) T = u(rng);
    const auto& g = f.geometry;
    double prev = sample_photodiode(f, {0.0, 0.0}, 50e-6, 1.0);
    for (int k = 0; k < 200; ++k) {
        const std::size_t c = g.index(rng() % g.nx, rng() % g.ny, g.nz - 1);
        f.T[c] += 50.0 * u(rng) / 2000.0;
        const double now = sample_photodiode(f, {0.0, 0.0}, 50e-6, 1.0);
        CHECK(now >= prev);
        prev = now;
    }
}

TEST_CASE("edge-departure field reads brighter than a centre pass") {
    RunConfig c;
    const double R = c.part.radius, v = c.machine.scan_speed, h = c.machine.hatch_distance;
    const double x = R - c.probe.edge_offset;
    const ScanPattern p = pipeline::two_pass_pattern(c);
    const auto g = pipeline::box_grid(-R - 0.3, R + 0.3, -0.45, 0.55, 0.2, c.solver.dx_probe);
    const auto f0 = thermal::make_uniform_field(g, c.solver.initial_temperature, pipeline::boundary(c), c.material);
    const double t_centre = R / v, t_departure = (2.0 * R + h + (R - x)) / v;
    double centre = 0.0, departure = 0.0;
    auto rs = pipeline::run_settings(c);
    rs.observer = [&](const thermal::HeatSolver& hs, const thermal::StepInfo& i) {
        const Vec2 focus{i.point.position.x * 1e-3, i.point.position.y * 1e-3};
        if (centre == 0.0 && i.time >= t_centre) centre = sample_photodiode(hs, focus, 240e-6, 1.0);
        if (departure == 0.0 && i.time >= t_departure) departure = sample_photodiode(hs, focus, 240e-6, 1.0);
    };
    thermal::run(std::span<const ScanPattern>(&p, 1), f0, rs, {});
    CHECK(centre > 0.0);
    CHECK(departure > centre);
}

TEST_CASE("single sample lights one cell; max is idempotent under duplication") {
    SignalSeries s;
    s.samples.push_back({0.0, 5.0, {0.12, -0.33}, 0});
    const auto frame = frame_covering({{0.0, 0.0}, 1.5}, 0.05);
    const auto m = accumulate_map(s, 0.05, Statistic::max, frame);
    std::size_t lit = 0;
    for (std::size_t j = 0; j < frame.ny; ++j)
        for (std::size_t i = 0; i < frame.nx; ++i) lit += m.value(i, j) != 0.0;
    CHECK(lit == 1);

    const auto series = ramp_series(300);
    const std::vector<SignalSeries> once{series}, twice{series, series};
    const auto a = accumulate_map(once, 0.05, Statistic::max);
    const auto b = accumulate_map(twice, 0.05, Statistic::max);
    for (std::size_t j = 0; j < a.frame().ny; ++j)
        for (std::size_t i = 0; i < a.frame().nx; ++i) CHECK(a.value(i, j) == b.value(i, j));
}

TEST_CASE("empty series gives an empty map") {
    const auto m = accumulate_map(SignalSeries{}, 0.05, Statistic::mean);
    CHECK(m.empty());
    CHECK(m.frame().cell == 0.05);
    CHECK_THROWS_AS(accumulate_map(SignalSeries{}, 0.0, Statistic::mean), ConfigError);
}

TEST_CASE("sum maps add over concatenation and ignore series order") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<SignalSeries> parts(4);
    SignalSeries all;
    double t = 0.0;
    for (auto& p : parts)
        for (int i = 0; i < 500; ++i) {
            SignalSample x{t += 1e-5, 100.0 + 50.0 * u(rng), {u(rng), u(rng)}, i % 3};
            p.samples.push_back(x);
            all.samples.push_back(x);
        }
    const auto frame = frame_covering({{0.0, 0.0}, 1.5}, 0.1);
    const auto whole = accumulate_map(all, 0.1, Statistic::sum, frame);
    auto merged = accumulate_map(parts[0], 0.1, Statistic::sum, frame);
    for (std::size_t k = 1; k < parts.size(); ++k) merged.merge(accumulate_map(parts[k], 0.1, Statistic::sum, frame));
    auto shuffled = parts;
    std::reverse(shuffled.begin(), shuffled.end());
    for (Statistic st : {Statistic::sum, Statistic::max, Statistic::mean}) {
        const auto a = accumulate_map(parts, 0.1, st, frame);
        const auto b = accumulate_map(shuffled, 0.1, st, frame);
        for (std::size_t j = 0; j < frame.ny; ++j)
            for (std::size_t i = 0; i < frame.nx; ++i) CHECK_THAT(a.value(i, j), WithinRel(b.value(i, j), 1e-12));
    }
    for (std::size_t j = 0; j < frame.ny; ++j)
        for (std::size_t i = 0; i < frame.nx; ++i) CHECK_THAT(merged.value(i, j), WithinRel(whole.value(i, j), 1e-12));
}

TEST_CASE("single-layer maps only see their layer") {
    SignalSeries s;
    s.samples.push_back({0.0, 1.0, {0.0, 0.0}, 0});
    s.samples.push_back({1.0, 9.0, {0.0, 0.0}, 1});
    const auto frame = frame_covering({{0.0, 0.0}, 0.5}, 0.1);
    std::size_t i, j;
    frame.locate({0.0, 0.0}, i, j);
    CHECK(accumulate_map(s, 0.1, Statistic::max, frame, 0).value(i, j) == 1.0);
    CHECK(accumulate_map(s, 0.1, Statistic::max, frame).value(i, j) == 9.0);
    CHECK(accumulate_map(s, 0.1, Statistic::mean, frame).value(i, j) == 5.0);
}

TEST_CASE("threshold events") {
    auto s = ramp_series(400);
    CHECK(threshold_events(s, 12000.0, Direction::above).empty());

    s.samples[40].value = 20000.0;
    s.samples[41].value = 15000.0;
    auto e = threshold_events(s, 12000.0, Direction::above);
    REQUIRE(e.size() == 1);
    CHECK(e[0] == s.samples[40].t);

    auto three = ramp_series(400);
    for (std::size_t k : {100, 150, 200}) three.samples[k].value = 13000.0 + static_cast<double>(k);
    CHECK(threshold_events(three, 12000.0, Direction::above).size() == 3);

    auto dip = ramp_series(100, 14000.0);
    dip.samples[50].value = 11000.0;
    dip.samples[52].value = 9000.0;
    e = threshold_events(dip, 12000.0, Direction::below);
    REQUIRE(e.size() == 1);
    CHECK(e[0] == dip.samples[52].t);
}

TEST_CASE("noise is seeded and clipped at zero") {
    auto a = ramp_series(200, 1.0), b = a;
    add_noise(a, 5.0, 42);
    add_noise(b, 5.0, 42);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].value == b.samples[i].value);
        CHECK(a.samples[i].value >= 0.0);
    }
}

TEST_CASE("series and map files") {
    auto s = ramp_series(20);
    s.gain = 0.25;
    std::istringstream in(io::format_series(s, {}));
    const auto back = io::parse_series(io::read_table(in));
    CHECK(back.gain == 0.25);
    REQUIRE(back.size() == s.size());
    CHECK(back.samples[7].position == s.samples[7].position);

    std::istringstream bad("t\tvalue\tx\ty\tlayer\n0\t1\t0\t0\t0\n0\t1\t0\t0\t0\n");
    CHECK_THROWS_AS(io::parse_series(io::read_table(bad)), InputError);

    const auto m = accumulate_map(s, 0.05, Statistic::max);
    const auto text = io::format_map(m, {});
    CHECK(text.find("# statistic: max") != std::string::npos);
}
