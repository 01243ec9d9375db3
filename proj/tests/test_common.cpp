#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "lpbf/common.hpp"
#include "lpbf/stats.hpp"
#include "lpbf/tabular.hpp"

using namespace lpbf;

TEST_CASE("numbers survive a format/parse cycle exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 2000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 30) - 15);
        const auto back = io::parse_double(io::format_number(v));
        REQUIRE(back);
        CHECK(*back == v);
    }
    CHECK(io::format_number(-0.0) == "0");
    CHECK(io::format_number(1.5) == "1.5");
    CHECK(std::isnan(*io::parse_double("nan")));
    CHECK_FALSE(io::parse_double("1.5x"));
    CHECK_FALSE(io::parse_double(""));
}

TEST_CASE("tables keep metadata, header and row line numbers") {
    std::istringstream in("# kind: test\n# gain: 2.5\n\na\tb\n1\t2\n\n3\t4\n");
    const auto t = io::read_table(in);
    CHECK(t.meta.at("kind") == "test");
    CHECK(*t.meta_number("gain") == 2.5);
    REQUIRE(t.columns.size() == 2);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1].line == 7);
    CHECK(t.rows[1].fields[1] == "4");
    CHECK_THROWS_AS(t.require_column("c"), InputError);
}

TEST_CASE("provenance header carries hash, seed and version") {
    std::ostringstream os;
    io::write_provenance(os, {"abc", 42}, "thing");
    CHECK(os.str() == "# lpbf-edge " + std::string(version_string) + " thing\n# config_hash: abc\n# seed: 42\n");
}

TEST_CASE("fnv1a matches published test vectors") {
    CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(io::hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
}

TEST_CASE("spearman handles ties and constant inputs") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 4, 6, 8, 100};
    CHECK(stats::spearman(a, b) == Catch::Approx(1.0));
    const std::vector<double> c{5, 4, 3, 2, 1};
    CHECK(stats::spearman(a, c) == Catch::Approx(-1.0));
    const std::vector<double> tied{1, 1, 2, 2, 3};
    const auto r = stats::ranks(tied);
    CHECK(r == std::vector<double>{1.5, 1.5, 3.5, 3.5, 5.0});
    const std::vector<double> flat{7, 7, 7, 7, 7};
    CHECK(std::isnan(stats::spearman(a, flat)));
}

TEST_CASE("frame_covering spans the circle on cell multiples") {
    const auto f = frame_covering({{0.0, 0.0}, 1.5}, 0.05);
    CHECK(f.nx == 60);
    CHECK(f.ny == 60);
    CHECK(f.x0 == Catch::Approx(-1.5));
    std::size_t i, j;
    CHECK(f.locate({1.499, -1.499}, i, j));
    CHECK(i == 59);
    CHECK(j == 0);
    CHECK_FALSE(f.locate({1.5001, 0.0}, i, j));
}

TEST_CASE("half-turn reduction") {
    CHECK(reduce_half_turn(201.0) == Catch::Approx(21.0));
    CHECK(reduce_half_turn(-10.0) == Catch::Approx(170.0));
    CHECK(reduce_half_turn(180.0) == 0.0);
}
