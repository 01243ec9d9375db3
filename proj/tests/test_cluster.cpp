#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "lpbf/cluster.hpp"
#include "lpbf/pipeline.hpp"
#include "oracles.hpp"

using namespace lpbf;
using namespace lpbf::cluster;
using Catch::Matchers::WithinAbs;

namespace {

using Points = std::vector<std::vector<double>>;

// Gaussian blobs in 10-D plus uniform background, sized so that some points are
// borders and some are noise.
Points random_set(std::mt19937_64& rng) {
    const std::size_t n = 20 + rng() % 181;
    const std::size_t blobs = 1 + rng() % 4;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 0.12);
    Points centers(blobs, std::vector<double>(10));
    for (auto& c : centers)
        for (double& v : c) v = u(rng);
    Points pts;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(10);
        if (rng() % 5 == 0) {
            for (double& v : p) v = u(rng);
        } else {
            const auto& c = centers[rng() % blobs];
            for (std::size_t k = 0; k < 10; ++k) p[k] = c[k] + g(rng);
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

// Groups indices by label, noise excluded.
std::set<std::set<std::size_t>> partition(const std::vector<int>& labels) {
    std::map<int, std::set<std::size_t>> m;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != noise) m[labels[i]].insert(i);
    std::set<std::set<std::size_t>> out;
    for (auto& [l, s] : m) out.insert(s);
    return out;
}

SignalWindow window_at(Vec2 pos, std::vector<double> raw, int layer = 0) {
    SignalWindow w;
    w.position = pos;
    w.layer = layer;
    w.raw = raw;
    w.normalized = normalize(raw).values;
    return w;
}

std::vector<double> spike(double jitter) {
    return {1.0 + jitter, 1.0, 1.0 - jitter, 1.0, 1.0, 10.0, 6.0 + jitter, 3.0, 1.5, 1.0};
}

}  // namespace

TEST_CASE("min-max normalisation") {
    const std::vector<double> a{2, 4, 6};
    const auto n = normalize(a);
    CHECK(n.values == std::vector<double>{0.0, 0.5, 1.0});
    CHECK_FALSE(n.flat);

    const std::vector<double> flat{3, 3, 3, 3};
    const auto f = normalize(flat);
    CHECK(f.flat);
    CHECK(f.values == std::vector<double>(4, 0.5));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(10);
        for (double& v : x) v = u(rng);
        const auto once = normalize(x);
        const auto twice = normalize(once.values);
        for (std::size_t k = 0; k < x.size(); ++k) CHECK_THAT(twice.values[k], WithinAbs(once.values[k], 1e-12));
    }
}

TEST_CASE("z-score normalisation") {
    const std::vector<double> a{1, 2, 3, 4};
    const auto z = normalize_zscore(a);
    const double mean = std::accumulate(z.values.begin(), z.values.end(), 0.0) / 4.0;
    double var = 0.0;
    for (double v : z.values) var += (v - mean) * (v - mean);
    CHECK_THAT(mean, WithinAbs(0.0, 1e-12));
    CHECK_THAT(var / 4.0, WithinAbs(1.0, 1e-12));
    const std::vector<double> flat{7, 7};
    CHECK(normalize_zscore(flat).flat);
    CHECK(normalize_zscore(flat).values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("window extraction") {
    signal::SignalSeries s;
    for (int i = 0; i < 30; ++i) s.samples.push_back({i * 1e-5, static_cast<double>(i), {0.0, 0.0}, 0});

    const std::vector<double> events{2e-5, 10e-5, 12e-5, 26e-5, 1.0};
    const auto w = extract_windows(s, events, 10);
    CHECK(w.dropped == 3);  // too close to the start, too close to the end, outside the series
    REQUIRE(w.windows.size() == 2);
    CHECK(w.windows[0].raw.size() == 10);
    CHECK(w.windows[0].raw.front() == 5.0);
    CHECK(w.windows[0].raw[5] == 10.0);
    CHECK(w.windows[0].center_time == 10e-5);
    // Overlapping windows are both kept.
    CHECK(w.windows[1].raw.front() == 7.0);
    CHECK(w.windows[0].normalized.front() == 0.0);
    CHECK(w.windows[0].normalized.back() == 1.0);

    CHECK_THROWS_AS(extract_windows(s, events, 1), ConfigError);
}

TEST_CASE("dbscan on small fixtures") {
    const Points same(6, std::vector<double>{0.2, 0.2});
    const auto a = dbscan(same, 0.1, 5);
    CHECK(std::all_of(a.begin(), a.end(), [](int l) { return l == 0; }));

    Points two;
    for (int i = 0; i < 6; ++i) two.push_back({0.01 * i, 0.0});
    for (int i = 0; i < 6; ++i) two.push_back({5.0 + 0.01 * i, 0.0});
    two.push_back({2.5, 2.5});
    const auto b = dbscan(two, 0.1, 5);
    CHECK(b[0] != noise);
    CHECK(b[6] != noise);
    CHECK(b[0] != b[6]);
    CHECK(b[12] == noise);
    for (int i = 0; i < 6; ++i) {
        CHECK(b[static_cast<std::size_t>(i)] == b[0]);
        CHECK(b[static_cast<std::size_t>(i + 6)] == b[6]);
    }

    const Points few(4, std::vector<double>{0.0});
    const auto c = dbscan(few, 1.0, 5);
    CHECK(std::all_of(c.begin(), c.end(), [](int l) { return l == noise; }));

    CHECK_THROWS_AS(dbscan(few, 0.0, 5), ConfigError);
}

TEST_CASE("dbscan agrees with the brute-force reference") {
    std::mt19937_64 rng(99);
    std::size_t borders_seen = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto pts = random_set(rng);
        const auto labels = dbscan(pts, 0.55, 5);
        const auto ref = oracle::brute_force_dbscan(pts, 0.55, 5);

        std::set<std::size_t> noise_set;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == noise) noise_set.insert(i);
        CHECK(noise_set == ref.noise);

        // Each reference core component maps to exactly one label, one to one.
        std::set<int> used;
        for (const auto& core : ref.clusters) {
            const int l = labels[*core.begin()];
            CHECK(l != noise);
            for (std::size_t i : core) CHECK(labels[i] == l);
            CHECK(used.insert(l).second);
        }
        CHECK(partition(labels).size() == ref.clusters.size());

        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& opts = ref.border_options[i];
            if (opts.empty()) continue;
            ++borders_seen;
            CHECK(std::any_of(opts.begin(), opts.end(), [&](std::size_t rep) { return labels[rep] == labels[i]; }));
        }
    }
    CHECK(borders_seen > 0);
}

TEST_CASE("dbscan is invariant to uniform scaling and input order") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = random_set(rng);
        const auto base = dbscan(pts, 0.55, 5);

        auto scaled = pts;
        for (auto& p : scaled)
            for (double& v : p) v *= 4.0;
        CHECK(dbscan(scaled, 4.0 * 0.55, 5) == base);

        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Points shuffled;
        for (std::size_t k : perm) shuffled.push_back(pts[k]);
        const auto sl = dbscan(shuffled, 0.55, 5);
        std::vector<int> back(pts.size());
        for (std::size_t k = 0; k < perm.size(); ++k) back[perm[k]] = sl[k];

        // Noise and core membership are order free; borders may switch between
        // adjacent clusters, so compare core partitions only.
        const auto ref = oracle::brute_force_dbscan(pts, 0.55, 5);
        for (std::size_t i = 0; i < pts.size(); ++i) CHECK((back[i] == noise) == (base[i] == noise));
        for (const auto& core : ref.clusters)
            for (std::size_t i : core) CHECK(back[i] == back[*core.begin()]);
    }
}

TEST_CASE("classification against the scan pattern") {
    MachineParams m;
    const Circle part{{0.0, 0.0}, 1.5};
    const ScanPattern p = generate_layer(m, part, 0);
    std::vector<TurnEvent> reentry;
    for (const auto& e : turning_points(p))
        if (e.kind == TurnKind::re_entry) reentry.push_back(e);
    REQUIRE(reentry.size() >= 22);

    std::vector<SignalWindow> w;
    for (int k = 0; k < 8; ++k) w.push_back(window_at(reentry[static_cast<std::size_t>(3 * k)].position, spike(0.02 * k)));
    for (int k = 0; k < 8; ++k) w.push_back(window_at({0.05 * k - 0.2, 0.03 * k}, spike(0.02 * k)));
    w.push_back(window_at({0.0, 0.0}, {0, 9, 0, 9, 0, 9, 0, 9, 0, 9}));

    // Two spatially distinct groups with the same shape; cluster by hand.
    ClusterResult r;
    r.labels.assign(w.size(), noise);
    for (int k = 0; k < 8; ++k) {
        r.labels[static_cast<std::size_t>(k)] = 0;
        r.labels[static_cast<std::size_t>(k + 8)] = 1;
    }
    const std::span<const ScanPattern> pats(&p, 1);
    const auto cls = coregister_and_classify(r, w, pats);
    CHECK(cls.at(0) == ClassLabel::class1_turning);
    CHECK(cls.at(1) == ClassLabel::residual);
    CHECK(r.class_of(noise) == ClassLabel::residual);

    // The spikes share one density cluster in window space.
    std::vector<SignalWindow> spikes(w.begin(), w.begin() + 16);
    const auto db = cluster_windows(spikes, 0.55, 5);
    CHECK(partition(db.labels).size() == 1);

    auto stray = w;
    stray.push_back(window_at({0.0, 0.0}, spike(0.0), 3));
    ClusterResult r2;
    r2.labels.assign(stray.size(), noise);
    CHECK_THROWS_AS(coregister_and_classify(r2, stray, pats), Error);
    auto outside = w;
    outside.push_back(window_at({3.0, 0.0}, spike(0.0)));
    r2.labels.assign(outside.size(), noise);
    CHECK_THROWS_AS(coregister_and_classify(r2, outside, pats), Error);
}

TEST_CASE("smooth rises near the boundary are class 2") {
    const Circle part{{0.0, 0.0}, 1.5};
    const ScanPattern p = generate_layer(MachineParams{}, part, 0);
    std::vector<SignalWindow> w;
    for (int k = 0; k < 6; ++k) {
        const double a = 0.2 + 0.9 * k;
        w.push_back(window_at({1.45 * std::cos(a), 1.45 * std::sin(a)}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9.0 + 0.1 * k}));
    }
    ClusterResult r;
    r.labels.assign(w.size(), 0);
    ClassifyOptions opt;
    opt.turn_radius = 0.1;
    CHECK(coregister_and_classify(r, w, std::span<const ScanPattern>(&p, 1), opt).at(0) ==
          ClassLabel::class2_boundary);
}

TEST_CASE("dips on a reduced cylinder cluster near the re-entry points") {
    RunConfig c;
    c.part.radius = 1.0;
    c.part.layers = 4;
    c.signal.direction = signal::Direction::below;
    const auto grid = pipeline::build_grid(c);
    const double gain = pipeline::calibrate_gain(c, grid);
    const auto b = pipeline::run_build(c, gain);
    const auto a = pipeline::analyze_clusters(b.series, b.patterns, c);
    const auto s = pipeline::summarize_clusters(a, c.part_circle());
    bool found = false;
    for (const auto& x : s)
        if (x.cls == ClassLabel::class1_turning) {
            found = true;
            CHECK(x.mean_boundary_distance < 2.0 * c.machine.hatch_distance);
        }
    CHECK(found);
}
