#include "catch_amalgamated.hpp"

#include "reachguard/io.hpp"
#include "reachguard/verify/acceptance.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace reachguard;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

fs::path fixture(const std::string& name) { return fs::path(REACHGUARD_FIXTURES) / name; }

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("reachguard-test-" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p);
    f << s;
}

Config tiny_config(const fs::path& cache) {
    Config c;
    c.relative_grid = {6.0, {21, 21, 12}};
    c.frs_grid = {2.0, {21, 21, 12}};
    c.frs_horizon = 2.0;
    c.frs_frame_interval = 0.5;
    c.cache_dir = cache;
    return c;
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing", "[cli]") {
    const Config d = load_config(fixture("default_config.json"));
    CHECK(d.relative_grid.extent == 15.0);
    CHECK(d.relative_grid.nodes == std::array<std::size_t, 3>{61, 61, 45});
    CHECK(d.outsider_grid.extent == 10.0);
    CHECK(d.outsider_grid.nodes == std::array<std::size_t, 3>{81, 81, 45});
    CHECK(d.Rc == 3.0);
    CHECK(d.Te == 2.0);
    CHECK(d.K == 2.0);
    CHECK(d.params.speed == 1.0);
    CHECK(d.params.max_turn == 1.0);
    CHECK(d.cache_dir == fs::path("cache"));

    const Config c = parse_config(json::parse(R"({"K": 1.5, "solver": {"cfl": 0.4}, "jobs": 2})"));
    CHECK(c.K == 1.5);
    CHECK(c.solver.cfl == 0.4);
    CHECK(c.jobs == 2);
    CHECK(c.relative_grid.nodes[0] == 61);

    CHECK_THROWS_AS(parse_config(json::parse(R"({"relative_grid": {"nodes": [10, 61, 45]}})")), ArgumentError);
    CHECK_THROWS_AS(parse_config(json::parse(R"({"relative_grid": {"extent": 3.0}})")), ArgumentError);
    CHECK_THROWS_AS(parse_config(json::parse(R"({"K": "two"})")), ArgumentError);

    const auto dir = scratch_dir("config");
    write_text(dir / "empty.json", "  \n");
    CHECK_THROWS_AS(load_config(dir / "empty.json"), ArgumentError);
    write_text(dir / "broken.json", "{\"K\": ");
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ArgumentError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}

TEST_CASE("scenario parsing", "[cli]") {
    const Scenario s = load_scenario(fixture("stage2_four_vehicle.json"));
    REQUIRE(s.vehicles.size() == 4);
    CHECK(s.vehicles[1].initial.theta == Approx(kPi));
    CHECK(s.vehicles[0].goal.radius == 1.0);
    CHECK(s.dt == 0.05);
    CHECK_FALSE(s.force_unguaranteed);
    CHECK(load_scenario(fixture("forced_removal.json")).force_unguaranteed);

    const auto dir = scratch_dir("scenario");
    write_text(dir / "empty.json", "");
    CHECK_THROWS_AS(load_scenario(dir / "empty.json"), ArgumentError);
    CHECK_THROWS_AS(parse_scenario(json::parse(R"({"name": "x"})")), ArgumentError);
    CHECK_THROWS_AS(parse_scenario(json::parse(R"({"vehicles": [{"start": [0, 0], "goal": [1, 1]}]})")),
                    ArgumentError);
    CHECK_THROWS_AS(parse_scenario(json::parse(
                        R"({"vehicles": [{"start": [0, 0, 0], "goal": [9, 0]}, {"start": [5, 5, 0], "goal": [9, 9]}],
                            "dt": 0.5})")),
                    ArgumentError);
}

TEST_CASE("grids derived from the config", "[cli]") {
    Config c;
    const Grid rel = relative_grid(c);
    CHECK(rel.axis(0).min == -15.0);
    CHECK(rel.nodes(2) == 45);
    CHECK(rel.periodic(2));
    const Scenario s = load_scenario(fixture("two_vehicle_headon.json"));
    const Grid og = outsider_grid(c, s);
    CHECK(og.axis(0).min == Approx(-25.0));
    CHECK(og.axis(0).max == Approx(25.0));
    CHECK(og.axis(1).min == Approx(-10.0));
    CHECK(og.nodes(0) == 81);
    CHECK(frs_grid(c).axis(0).max == Approx(23.0));
}

TEST_CASE("cache hashing", "[cli]") {
    Config a;
    Config b = a;
    CHECK(tables_hash(a) == tables_hash(b));
    CHECK(frs_hash(a) == frs_hash(b));
    b.K = 0.5;
    CHECK(tables_hash(a) == tables_hash(b));
    CHECK(frs_hash(a) == frs_hash(b));
    b.Te = 2.5;
    CHECK(tables_hash(a) != tables_hash(b));
    CHECK(frs_hash(a) == frs_hash(b));
    b = a;
    b.relative_grid.nodes[2] = 44;
    CHECK(tables_hash(a) != tables_hash(b));
    b = a;
    b.solver.cfl = 0.4;
    CHECK(tables_hash(a) != tables_hash(b));
    CHECK(frs_hash(a) != frs_hash(b));
    CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("precompute is idempotent and round-trips", "[cli]") {
    const auto dir = scratch_dir("precompute");
    const Config c = tiny_config(dir / "cache");
    std::ostringstream log1, log2, log3;
    const auto first = precompute(c, log1);
    CHECK_FALSE(first.tables_hit);
    CHECK_FALSE(first.frs_hit);
    CHECK(log1.str().find("computed") != std::string::npos);

    const auto paths = cache_paths(c);
    for (const auto& p : {paths.exit, paths.pc, paths.frs}) {
        CHECK(fs::exists(p));
        CHECK(fs::exists(sidecar_path(p)));
    }
    const auto second = precompute(c, log2);
    CHECK(second.tables_hit);
    CHECK(second.frs_hit);
    CHECK(log2.str().find("computed") == std::string::npos);
    CHECK(second.tables.v_pc.grid() == first.tables.v_pc.grid());
    CHECK(std::equal(second.tables.v_pc.data().begin(), second.tables.v_pc.data().end(),
                     first.tables.v_pc.data().begin()));
    CHECK(std::equal(second.tables.v_exit.data().begin(), second.tables.v_exit.data().end(),
                     first.tables.v_exit.data().begin()));
    REQUIRE(second.frs.table.frame_count() == first.frs.table.frame_count());
    CHECK(second.frs.table.times() == first.frs.table.times());

    Config k = c;
    k.K = 1.0;
    const auto third = precompute(k, log3);
    CHECK(third.tables_hit);
    CHECK(third.tables.K == 1.0);
    CHECK(read_sidecar(sidecar_path(paths.pc)).at("role") == "pc");

    Config bad = c;
    write_text(dir / "plain-file", "x");
    bad.cache_dir = dir / "plain-file" / "cache";
    std::ostringstream sink;
    CHECK_THROWS_AS(precompute(bad, sink), IoError);
}

TEST_CASE("tampered cache fails containment", "[cli]") {
    const auto dir = scratch_dir("tamper");
    const Config c = tiny_config(dir / "cache");
    std::ostringstream log;
    const auto clean = precompute(c, log);
    const acceptance::Inputs in{c, &clean, REACHGUARD_FIXTURES};
    CHECK(acceptance::containment(in).pass);

    // flip the sign bit of every stored value of the exit table
    const auto path = cache_paths(c).exit;
    auto bytes = read_bytes(path);
    const auto grid = clean.tables.v_exit.grid();
    const std::size_t values = grid.size();
    const std::size_t data_end = bytes.size();
    const std::size_t data_begin = data_end - values * 8;
    for (std::size_t off = data_begin + 7; off < data_end; off += 8) bytes[off] = static_cast<char>(bytes[off] ^ 0x80);
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    const auto tampered = precompute(c, log);
    CHECK(tampered.tables_hit);
    const acceptance::Inputs bad{c, &tampered, REACHGUARD_FIXTURES};
    const auto r = acceptance::containment(bad);
    INFO(r.measured);
    CHECK_FALSE(r.pass);
}

TEST_CASE("zero-contour slices", "[cli]") {
    const Grid g = make_pose_grid(-5, 5, -5, 5, 51, 51, 8);
    const double dx = g.spacing(0);

    SECTION("disk gives a circle of the right radius") {
        const auto disk = make_signed_distance_disk(g, {1.0, -0.5}, 2.5);
        const std::size_t k = nearest_theta_index(g, 0.3);
        const auto segs = zero_contour(disk, k);
        REQUIRE(segs.size() > 20);
        for (const auto& s : segs) {
            REQUIRE(std::abs(std::hypot(s.x0 - 1.0, s.y0 + 0.5) - 2.5) <= 2 * dx);
            REQUIRE(std::abs(std::hypot(s.x1 - 1.0, s.y1 + 0.5) - 2.5) <= 2 * dx);
        }
        const std::string svg = slice_svg(disk, 0.3, "disk");
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(svg.find("class=\"contour\"") != std::string::npos);
        CHECK(svg.find("class=\"axis\"") != std::string::npos);
    }
    SECTION("empty set gives axes and no contour") {
        const ValueFunction empty(g, std::vector<double>(g.size(), 1.0));
        CHECK(zero_contour(empty, 0).empty());
        const std::string svg = slice_svg(empty, 0.0, "empty");
        CHECK(svg.find("class=\"contour\"") == std::string::npos);
        CHECK(svg.find("class=\"axis\"") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
    }
    SECTION("heading index wraps") {
        CHECK(nearest_theta_index(g, -kPi) == 0);
        CHECK(nearest_theta_index(g, kPi) == 0);
        CHECK(nearest_theta_index(g, kPi / 4) == 5);
        CHECK(nearest_theta_index(g, -kPi / 4) == 3);
    }
}

TEST_CASE("minimal-BRS slice of the stage 2 fixture", "[cli][fixture]") {
    Config c = load_config(fixture("default_config.json"));
    c.cache_dir = REACHGUARD_TEST_CACHE;
    const Scenario sc = load_scenario(fixture("stage2_four_vehicle.json"));
    c = config_for(c, sc);
    const auto pre = precompute(c, std::cerr);
    const auto rec = run_scenario(sc, pre.tables, run_config(c, sc, pre.frs));
    REQUIRE_FALSE(rec.episodes.empty());
    const auto& ep = rec.episodes.front();
    REQUIRE(ep.brs_minus_start);
    const ValueFunction& b = *ep.brs_minus_start;
    const Grid& g = b.grid();
    const auto segs = zero_contour(b, nearest_theta_index(g, ep.outsider_state.theta));
    REQUIRE_FALSE(segs.empty());

    // closed boundary strictly inside the grid
    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (const auto& s : segs) {
        x0 = std::min({x0, s.x0, s.x1});
        x1 = std::max({x1, s.x0, s.x1});
        y0 = std::min({y0, s.y0, s.y1});
        y1 = std::max({y1, s.y0, s.y1});
    }
    CHECK(x0 > g.axis(0).min);
    CHECK(x1 < g.axis(0).max);
    CHECK(y0 > g.axis(1).min);
    CHECK(y1 < g.axis(1).max);
    std::map<std::pair<long long, long long>, int> ends;
    auto key = [](double x, double y) { return std::pair{std::llround(x * 1e6), std::llround(y * 1e6)}; };
    for (const auto& s : segs) {
        ++ends[key(s.x0, s.y0)];
        ++ends[key(s.x1, s.y1)];
    }
    for (const auto& [p, count] : ends) REQUIRE(count % 2 == 0);

    // the outsider starts outside the set
    const auto& xo = ep.outsider_state;
    CHECK(interpolate(b, Point{xo.px, xo.py, xo.theta, 0.0}) > 0.0);
}
