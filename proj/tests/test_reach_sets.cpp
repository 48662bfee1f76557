#include "catch_amalgamated.hpp"

#include "reachguard/reach_sets.hpp"
#include "reachguard/verify/oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace reachguard;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;
const DubinsParams kPaper{1.0, 1.0};

const PairwiseTables& coarse_tables() {
    static const PairwiseTables t = compute_pairwise_tables(make_pose_grid(-15, 15, -15, 15, 31, 31, 24), kPaper, 3.0,
                                                            2.0, 2.0, SolveConfig{});
    return t;
}

Trajectory straight(const DubinsState& s0, double horizon, double dt) {
    Trajectory tr;
    DubinsState s = s0;
    const auto steps = static_cast<std::size_t>(std::lround(horizon / dt));
    for (std::size_t i = 0; i <= steps; ++i) {
        tr.times.push_back(static_cast<double>(i) * dt);
        tr.states.push_back(s);
        s = midpoint_step(s, {0.0}, kPaper, dt);
    }
    return tr;
}

Grid outsider_grid() { return make_pose_grid(-15, 15, -15, 15, 31, 31, 16); }

template <typename H>
void audit_alpha(const H& ham, const Grid& g, std::mt19937& rng, int samples) {
    std::uniform_int_distribution<std::size_t> node(0, g.size() - 1);
    std::uniform_real_distribution<double> lam(-3.0, 3.0);
    const auto global = ham.alpha(g);
    const auto f = ham.at(0.0);
    for (int s = 0; s < samples; ++s) {
        const std::size_t n = node(rng);
        const auto idx = g.unravel(n);
        const Point x = g.node_point(n);
        const NodeRef ref{n, idx, x};
        const Point p{lam(rng), lam(rng), lam(rng), 0.0};
        const Point local = ham.local_alpha(ref);
        for (std::size_t k = 0; k < 3; ++k) {
            const double h = 1e-7;
            Point a = p;
            Point b = p;
            a[k] += h;
            b[k] -= h;
            const double d = std::abs(f(ref, a) - f(ref, b)) / (2 * h);
            REQUIRE(d <= global[k] * (1 + 1e-6) + 1e-7);
            REQUIRE(d <= local[k] * (1 + 1e-6) + 1e-7);
            REQUIRE(local[k] <= global[k] + 1e-12);
        }
    }
}

}  // namespace

TEST_CASE("dissipation bounds dominate the hamiltonian slopes", "[reach_sets][hj_solver]") {
    std::mt19937 rng(7);
    const Grid g = make_pose_grid(-15, 15, -15, 15, 31, 31, 24);
    audit_alpha(PairwiseHamiltonian(g, kPaper, PairwiseHamiltonian::Game::avoid), g, rng, 10000);
    audit_alpha(PairwiseHamiltonian(g, kPaper, PairwiseHamiltonian::Game::exit), g, rng, 10000);
    audit_alpha(DubinsMaxHamiltonian(g, kPaper), g, rng, 10000);
    std::vector<std::int8_t> modes(g.size());
    std::uniform_int_distribution<int> m(-1, 1);
    for (auto& x : modes) x = static_cast<std::int8_t>(m(rng));
    audit_alpha(OutsiderMinusHamiltonian(g, kPaper, {0.0}, {modes}), g, rng, 10000);
}

TEST_CASE("pairwise tables nest danger, buffer and conflict sets", "[reach_sets]") {
    const auto& t = coarse_tables();
    const Grid& g = t.v_pc.grid();
    const auto disk = make_signed_distance_disk(g, {0, 0}, 3.0);
    for (std::size_t n = 0; n < g.size(); ++n) {
        if (disk[n] <= 0.0) REQUIRE(t.v_exit[n] <= 1e-9);
        if (t.v_exit[n] <= 0.0) REQUIRE(t.v_pc[n] <= t.K + 1e-9);
    }
    CHECK(pcs_value(t, {0, 0, 0}) <= 0.0);
    // PCS must be strictly interior for the off-grid sentinel to be sound
    for (std::size_t n = 0; n < g.size(); ++n) {
        const auto m = g.unravel(n);
        if (m[0] == 0 || m[1] == 0 || m[0] == g.nodes(0) - 1 || m[1] == g.nodes(1) - 1) REQUIRE(t.v_pc[n] > t.K);
    }
}

TEST_CASE("very short exit horizon keeps the danger disk", "[reach_sets]") {
    const Grid g = make_pose_grid(-15, 15, -15, 15, 31, 31, 24);
    const auto t = compute_pairwise_tables(g, kPaper, 3.0, 1e-3, 2.0, SolveConfig{});
    const auto disk = make_signed_distance_disk(g, {0, 0}, 3.0);
    double worst = 0.0;
    for (std::size_t n = 0; n < g.size(); ++n) worst = std::max(worst, std::abs(t.v_exit[n] - disk[n]));
    CHECK(worst <= g.max_spacing_nonperiodic());
}

TEST_CASE("head-on at 20 units is outside the conflict set and avoidable", "[reach_sets][oracle]") {
    const Grid g = make_pose_grid(-25, 25, -25, 25, 51, 51, 24);
    const auto t = compute_pairwise_tables(g, kPaper, 3.0, 2.0, 2.0, SolveConfig{});
    CHECK(pcs_value(t, {20, 0, -kPi}) > t.K);

    // closed loop: i avoids when inside its PCS, j pursues with the worst-case reply
    DubinsState xi{0, 0, 0};
    DubinsState xj{20, 0, -kPi};
    const double dt = 0.01;
    double closest = planar_distance(xi, xj);
    for (int s = 0; s < 3000; ++s) {
        const auto r = relative_state_of(xi, xj);
        Control ui{0.0};
        Control uj{0.0};
        if (pcs_value(t, r) <= t.K) {
            const Point gr = gradient(t.v_pc, Point{r.x, r.y, r.theta, 0});
            ui = opt_control_pc(r, {gr[0], gr[1], gr[2]}, kPaper);
            uj = worst_control_pc({gr[0], gr[1], gr[2]}, kPaper);
        }
        xi = midpoint_step(xi, ui, kPaper, dt);
        xj = midpoint_step(xj, uj, kPaper, dt);
        closest = std::min(closest, planar_distance(xi, xj));
    }
    INFO("closest approach " << closest);
    CHECK(closest > t.Rc);
}

TEST_CASE("pcs membership", "[reach_sets]") {
    const auto& t = coarse_tables();
    const DubinsState a{1.0, 2.0, 0.3};
    auto m = pcs_membership(t, a, a);
    CHECK(m.member);
    CHECK(m.value <= 0.0);
    m = pcs_membership(t, a, {101.0, 2.0, 0.3});
    CHECK_FALSE(m.member);
    CHECK(std::isinf(m.value));

    // closed sublevel set at the threshold
    const DubinsState b{6.0, 1.0, 2.0};
    PairwiseTables tie = t;
    tie.K = pcs_value(t, relative_state_of(a, b));
    CHECK(pcs_membership(tie, a, b).member);
    tie.K -= 1e-9;
    CHECK_FALSE(pcs_membership(tie, a, b).member);
}

TEST_CASE("OUR frames", "[reach_sets]") {
    const auto& t = coarse_tables();
    const Grid og = outsider_grid();

    SECTION("distant vehicles give an empty region") {
        const auto f = compute_our_frame(t, {{200, 0, 0}, {-200, 0, 0}}, og);
        CHECK(f.min_value() > 0.0);
    }
    SECTION("coincident vehicles share their conflict set") {
        const auto f = compute_our_frame(t, {{0, 0, 0}, {0, 0, 0}}, og);
        CHECK(interpolate(f, Point{0, 0, 0, 0}) <= 0.0);
    }
    SECTION("three vehicles match the pairwise brute force") {
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> pos(-6, 6);
        std::uniform_real_distribution<double> ang(-kPi, kPi);
        const std::vector<DubinsState> veh{{pos(rng), pos(rng), ang(rng)},
                                           {pos(rng), pos(rng), ang(rng)},
                                           {pos(rng), pos(rng), ang(rng)}};
        const auto f = compute_our_frame(t, veh, og);
        for (std::size_t n = 0; n < og.size(); ++n) {
            const Point p = og.node_point(n);
            REQUIRE(f[n] == Approx(oracle::our_value(t, {p[0], p[1], p[2]}, veh)).margin(1e-9));
        }
        // permutation symmetry
        const auto g = compute_our_frame(t, {veh[2], veh[0], veh[1]}, og);
        for (std::size_t n = 0; n < og.size(); ++n) REQUIRE(g[n] == f[n]);
        // enlarging K enlarges the region
        PairwiseTables bigger = t;
        bigger.K = t.K + 1.0;
        const auto h = compute_our_frame(bigger, veh, og);
        for (std::size_t n = 0; n < og.size(); ++n) REQUIRE(h[n] <= f[n]);
    }
    SECTION("time lists must agree") {
        auto a = straight({0, 0, 0}, 1.0, 0.1);
        auto b = straight({5, 0, kPi / 2}, 1.2, 0.1);
        CHECK_THROWS_AS(compute_our(t, {a, b}, og), ArgumentError);
        CHECK_THROWS_AS(compute_our(t, {a}, og), ArgumentError);
    }
}

TEST_CASE("outsider FRS", "[reach_sets][oracle]") {
    const Grid g = make_pose_grid(-8, 8, -8, 8, 49, 49, 36);
    const auto frs = compute_frs_origin(g, kPaper, 2.0, SolveConfig{}, 0.25);
    const double dx = g.spacing(0);

    SECTION("starts at the seed") {
        const auto& f0 = frs.table.frame(0);
        for (std::size_t n = 0; n < g.size(); ++n) {
            const Point p = g.node_point(n);
            if (f0[n] <= 0.0) REQUIRE(std::hypot(p[0], p[1]) <= 1.5 * dx + 1e-9);
        }
        CHECK(frs.value(0.0, {3, 1, 0.5}, {3, 1, 0.5}) <= 0.0);
    }
    SECTION("speed bound and rollout containment at t = 1") {
        const auto& f1 = frs.frame_near(1.0);
        for (std::size_t n = 0; n < g.size(); ++n) {
            const Point p = g.node_point(n);
            if (f1[n] <= 0.0) REQUIRE(std::hypot(p[0], p[1]) <= 1.0 + 2 * dx);
        }
        std::mt19937 rng(3);
        int inside = 0;
        for (int i = 0; i < 500; ++i) {
            const auto e = oracle::random_rollout({0, 0, 0}, kPaper, 1.0, 0.25, rng);
            if (interpolate(f1, Point{e.px, e.py, e.theta, 0}) <= 0.0) ++inside;
        }
        CHECK(inside >= 495);
    }
    SECTION("never shrinks") {
        for (std::size_t f = 0; f + 1 < frs.table.frame_count(); ++f)
            for (std::size_t n = 0; n < g.size(); ++n) REQUIRE(frs.table.frame(f + 1)[n] <= frs.table.frame(f)[n]);
    }
    SECTION("seed transform is a rigid motion") {
        const DubinsState seed{1.0, -2.0, kPi / 2};
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int i = 0; i < 200; ++i) {
            const DubinsState q{u(rng), u(rng), u(rng) * 2};
            // rotate q by +pi/2 and translate to the seed
            const DubinsState world{seed.px - q.py, seed.py + q.px, wrap_angle(q.theta + kPi / 2)};
            REQUIRE(frs.value(1.0, seed, world) ==
                    Approx(interpolate(frs.frame_near(1.0), Point{q.px, q.py, q.theta, 0})).margin(1e-9));
        }
        CHECK(frs.value(5.0, seed, seed) == -kFarValue);
    }
}

TEST_CASE("FRS/OUR intersection matches exhaustive scan", "[reach_sets][oracle]") {
    std::mt19937 rng(17);
    const Grid g = make_pose_grid(-1, 1, -1, 1, 4, 4, 4);
    std::uniform_real_distribution<double> val(-0.3, 2.0);
    auto random_family = [&](std::size_t frames, double t0) {
        std::vector<double> ts;
        std::vector<ValueFunction> fs;
        double t = t0;
        for (std::size_t f = 0; f < frames; ++f) {
            t += std::uniform_real_distribution<double>(0.1, 1.0)(rng);
            ts.push_back(f == 0 ? 0.0 : t);
            std::vector<double> d(g.size());
            for (auto& x : d) x = val(rng);
            fs.emplace_back(g, std::move(d));
        }
        return TimeIndexedValueFunction(ts, fs);
    };
    int hits = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto a = random_family(1 + trial % 5, 0.0);
        const auto b = random_family(1 + (trial / 2) % 6, 0.0);
        const auto got = frs_intersects_our(a, b);
        const auto want = oracle::first_intersection(a, b);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            ++hits;
            REQUIRE(*got == *want);
        }
    }
    CHECK(hits > 0);
    CHECK(hits < 40);

    const auto a = random_family(2, 0.0);
    CHECK_THROWS_AS(frs_intersects_our(a, TimeIndexedValueFunction({0.0}, {make_signed_distance_disk(
                                                                                 make_pose_grid(-1, 1, -1, 1, 5, 5, 4),
                                                                                 {0, 0}, 0.5)})),
                    ArgumentError);
    // identical families intersect at the first time anything is inside
    const auto seeded = TimeIndexedValueFunction({0.0}, {make_signed_distance_disk(g, {0, 0}, 1.0)});
    CHECK(frs_intersects_our(seeded, seeded) == std::optional<double>(0.0));
}

TEST_CASE("minimal BRS from OUR", "[reach_sets]") {
    const auto& t = coarse_tables();
    const Grid og = outsider_grid();
    const double Tr = 4.0;

    SECTION("nothing to reach") {
        const std::vector<Trajectory> trajs{straight({200, 0, 0}, Tr, 0.05), straight({-200, 0, 0}, Tr, 0.05)};
        const auto our = compute_our(t, trajs, og, 20);
        const auto brs = compute_brs_minus(our, trajs, t, kPaper, Tr, SolveConfig{});
        for (const auto& f : brs.frames()) CHECK(f.min_value() > 0.0);
    }
    SECTION("contains OUR at every frame") {
        const std::vector<Trajectory> trajs{straight({-6, -1, 0}, Tr, 0.05), straight({6, 1, kPi}, Tr, 0.05)};
        const auto our = compute_our(t, trajs, og, 20);
        const auto brs = compute_brs_minus(our, trajs, t, kPaper, Tr, SolveConfig{});
        REQUIRE(brs.times() == our.times());
        bool nonempty = false;
        for (std::size_t f = 0; f < our.frame_count(); ++f)
            for (std::size_t n = 0; n < og.size(); ++n)
                if (our.frame(f)[n] <= 0.0) {
                    nonempty = true;
                    REQUIRE(brs.frame(f)[n] <= our.frame(f)[n] + 1e-9);
                }
        CHECK(nonempty);
        CHECK_THROWS_AS(compute_brs_minus(our, trajs, t, kPaper, Tr + 1.0, SolveConfig{}), ArgumentError);
    }
}

TEST_CASE("FRS clearance implies minimal-BRS clearance", "[reach_sets][oracle]") {
    const auto& t = coarse_tables();
    const Grid og = outsider_grid();
    const double Tr = 3.0;
    const auto origin = compute_frs_origin(make_pose_grid(-5, 5, -5, 5, 41, 41, 24), kPaper, Tr, SolveConfig{}, 0.5);
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> pos(-8, 8);
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    int clear = 0;
    for (int s = 0; s < 20; ++s) {
        const std::vector<Trajectory> trajs{straight({pos(rng), pos(rng), ang(rng)}, Tr, 0.1),
                                            straight({pos(rng), pos(rng), ang(rng)}, Tr, 0.1)};
        const auto our = compute_our(t, trajs, og, 5);
        const auto brs = compute_brs_minus(our, trajs, t, kPaper, Tr, SolveConfig{});
        for (int k = 0; k < 5; ++k) {
            const DubinsState seed{pos(rng), pos(rng), ang(rng)};
            const auto frs = compute_frs_outsider(origin, seed, og, our.times());
            if (frs_intersects_our(frs, our)) continue;
            ++clear;
            REQUIRE(interpolate(brs.frame(0), Point{seed.px, seed.py, seed.theta, 0}) > -cell_slack(og));
        }
    }
    CHECK(clear >= 20);
}
