#include "catch_amalgamated.hpp"

#include "reachguard/io.hpp"
#include "reachguard/sim.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

using namespace reachguard;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;
const DubinsParams kPaper{1.0, 1.0};

/// Default-config tables, shared with the acceptance run through the build cache.
const Precomputed& default_tables() {
    static const Precomputed pre = [] {
        Config c = load_config(fs::path(REACHGUARD_FIXTURES) / "default_config.json");
        c.cache_dir = REACHGUARD_TEST_CACHE;
        return precompute(c, std::cerr);
    }();
    return pre;
}

struct Run {
    Scenario sc;
    RunRecord rec;
};

Run run_fixture(const std::string& file) {
    const auto& pre = default_tables();
    Config c = load_config(fs::path(REACHGUARD_FIXTURES) / "default_config.json");
    Run r;
    r.sc = load_scenario(fs::path(REACHGUARD_FIXTURES) / file);
    c = config_for(c, r.sc);
    r.rec = run_scenario(r.sc, pre.tables, run_config(c, r.sc, pre.frs));
    return r;
}

std::string bytes(const RunRecord& r) {
    std::ostringstream os;
    write_run_csv(os, r);
    write_event_log(os, r.events);
    return os.str();
}

Trajectory rollout(DubinsState s, const std::vector<double>& omegas, double dt) {
    Trajectory tr;
    for (std::size_t k = 0; k <= omegas.size(); ++k) {
        tr.times.push_back(static_cast<double>(k) * dt);
        tr.states.push_back(s);
        if (k < omegas.size()) s = midpoint_step(s, {omegas[k]}, kPaper, dt);
    }
    return tr;
}

/// Distance from a point to the reference polyline.
double cross_track(const Trajectory& ref, const DubinsState& s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < ref.states.size(); ++k) {
        const auto& a = ref.states[k];
        const auto& b = ref.states[k + 1];
        const double ex = b.px - a.px, ey = b.py - a.py;
        const double len2 = ex * ex + ey * ey;
        const double u = len2 > 0 ? std::clamp(((s.px - a.px) * ex + (s.py - a.py) * ey) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, std::hypot(s.px - a.px - u * ex, s.py - a.py - u * ey));
    }
    return best;
}

void check_record_invariants(const Run& r) {
    const auto& rec = r.rec;
    const std::size_t n = rec.paths.size();
    for (const auto& p : rec.paths) REQUIRE(p.size() == rec.times.size());
    REQUIRE(rec.stages.size() == rec.times.size());

    // monitor soundness: recompute min separation over non-removed pairs
    double sep = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rec.times.size(); ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (!rec.removed[k][i] && !rec.removed[k][j])
                    sep = std::min(sep, planar_distance(rec.paths[i][k], rec.paths[j][k]));
    CHECK(rec.min_separation == sep);

    // stage log validity
    for (std::size_t k = 0; k + 1 < rec.stages.size(); ++k) REQUIRE(transition_allowed(rec.stages[k], rec.stages[k + 1]));

    // planar displacement per step equals v dt for moving vehicles, zero otherwise
    const double vdt = r.sc.params.speed * r.sc.dt;
    for (std::size_t k = 0; k + 1 < rec.times.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = planar_distance(rec.paths[i][k], rec.paths[i][k + 1]);
            const bool moving = !rec.arrived[k][i] && !rec.removed[k][i];
            REQUIRE(d == Approx(moving ? vdt : 0.0).margin(std::pow(r.sc.dt, 3)));
        }
}

}  // namespace

TEST_CASE("goal controller", "[sim]") {
    CHECK(goal_controller({0, 0, 0}, {10, 0, 1}, kPaper).omega == 0.0);
    CHECK(std::abs(goal_controller({0, 0, 0}, {-10, 1e-9, 1}, kPaper).omega) == kPaper.max_turn);
    CHECK(goal_controller({0, 0, 0}, {10, 0.5, 1}, kPaper).omega == Approx(2.0 * std::atan2(0.5, 10.0)));
    CHECK(goal_controller({0, 0, 0}, {0, -10, 1}, kPaper).omega == -kPaper.max_turn);

    const Goal goal{10, 0, 0.5};
    DubinsState s{0, 0, 0};
    double t = 0.0;
    const double dt = 0.05;
    while (!goal_reached(s, goal) && t < 20.0) {
        s = midpoint_step(s, goal_controller(s, goal, kPaper), kPaper, dt);
        t += dt;
    }
    CHECK(goal_reached(s, goal));
    CHECK(t <= 10.5);
}

TEST_CASE("trajectory tracker", "[sim]") {
    const double dt = 0.05;
    const double look = 3 * dt;
    const auto line = rollout({0, 0, 0}, std::vector<double>(200, 0.0), dt);

    CHECK(std::abs(trajectory_tracker(line, line.at(2.0), 2.0, kPaper, look).omega) <= kHeadingGain * dt);
    CHECK(trajectory_tracker(line, {2.0, 0.5, 0.0}, 2.0, kPaper, look).omega < 0.0);
    CHECK(trajectory_tracker(line, {2.0, -0.5, 0.0}, 2.0, kPaper, look).omega > 0.0);
    CHECK_THROWS_AS(trajectory_tracker(line, {0, 0, 0}, 11.0, kPaper, look), ArgumentError);
    CHECK_THROWS_AS(trajectory_tracker(Trajectory{}, {0, 0, 0}, 0.0, kPaper, look), ArgumentError);

    SECTION("self tracking of feasible references") {
        std::mt19937 rng(21);
        std::uniform_real_distribution<double> w(-0.8, 0.8);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> om;
            double hold = 0.0;
            for (int k = 0; k < 200; ++k) {
                if (k % 20 == 0) hold = w(rng);
                om.push_back(hold);
            }
            const auto ref = rollout({1.0, -2.0, 0.3 * trial}, om, dt);
            DubinsState s = ref.states.front();
            double worst = 0.0;
            for (std::size_t k = 0; k + 1 < ref.times.size(); ++k) {
                s = midpoint_step(s, trajectory_tracker(ref, s, ref.times[k], kPaper, look), kPaper, dt);
                worst = std::max(worst, cross_track(ref, s));
            }
            INFO("trial " << trial);
            REQUIRE(worst <= 0.1);
        }
    }
}

TEST_CASE("scenario validation", "[sim]") {
    Scenario sc;
    sc.vehicles = {{{0, 0, 0}, {10, 0, 1}}, {{50, 50, 0}, {60, 50, 1}}};
    CHECK_NOTHROW(sc.validate());
    Scenario one = sc;
    one.vehicles.pop_back();
    CHECK_THROWS_AS(one.validate(), ArgumentError);
    Scenario coarse = sc;
    coarse.dt = 0.2;
    CHECK_THROWS_AS(coarse.validate(), ArgumentError);
    Scenario capture = sc;
    capture.vehicles[0].goal.radius = 0.0;
    CHECK_THROWS_AS(capture.validate(), ArgumentError);

    const auto& pre = default_tables();
    RunConfig rc;
    rc.outsider.frs = &pre.frs;
    Scenario fast = sc;
    fast.params.speed = 2.0;
    CHECK_THROWS_AS(run_scenario(fast, pre.tables, rc), ArgumentError);
    Scenario wide = sc;
    wide.Rc = 4.0;
    CHECK_THROWS_AS(run_scenario(wide, pre.tables, rc), ArgumentError);
}

TEST_CASE("conflict-free pair is pure goal pursuit", "[sim]") {
    const auto& pre = default_tables();
    Scenario sc;
    sc.vehicles = {{{0, 0, 0}, {10, 0, 0.5}}, {{0, 60, kPi}, {-10, 60, 0.5}}};
    sc.horizon = 15.0;
    RunConfig rc;
    rc.outsider.frs = &pre.frs;
    const Run r{sc, run_scenario(sc, pre.tables, rc)};
    CHECK(r.rec.events.empty());
    CHECK(r.rec.episodes.empty());
    CHECK(r.rec.goals_reached == std::vector<bool>{true, true});
    CHECK_FALSE(r.rec.violation_time);
    check_record_invariants(r);
    // the run stops once everyone has arrived
    CHECK(r.rec.times.back() <= 10.5);
}

TEST_CASE("two-vehicle head-on fixture", "[sim][fixture]") {
    const auto a = run_fixture("two_vehicle_headon.json");
    INFO(run_summary(a.sc, a.rec));
    CHECK(a.rec.min_separation > 3.0);
    CHECK_FALSE(a.rec.violation_time);
    CHECK(a.rec.goals_reached == std::vector<bool>{true, true});
    for (auto s : a.rec.stages) CHECK(s == StageKind::stage0);
    check_record_invariants(a);

    const auto b = run_fixture("two_vehicle_headon.json");
    CHECK(bytes(a.rec) == bytes(b.rec));
}

TEST_CASE("four-vehicle stage 2 fixture", "[sim][fixture]") {
    const auto r = run_fixture("stage2_four_vehicle.json");
    const std::string summary = run_summary(r.sc, r.rec);
    INFO(summary);
    bool stage2 = false;
    for (auto s : r.rec.stages) stage2 |= s == StageKind::stage2;
    CHECK(stage2);
    REQUIRE_FALSE(r.rec.episodes.empty());
    const auto& e = r.rec.episodes.front();
    CHECK(e.stage == StageKind::stage2);
    CHECK(e.guarantee == Guarantee::brs_minus_clear);
    CHECK_FALSE(e.outsider_entered_our);
    CHECK(summary.find("outsider " + std::to_string(e.outsider) + ", guarantee brs_minus_clear") != std::string::npos);
    CHECK(r.rec.goals_reached == std::vector<bool>(4, true));
    CHECK(r.rec.min_separation > r.sc.Rc);
    check_record_invariants(r);

    std::size_t claims = 0;
    for (const auto& ev : r.rec.events) claims += ev.type == "outsider_claim" ? 1 : 0;
    CHECK(claims == r.rec.episodes.size());

    std::ostringstream csv;
    write_run_csv(csv, r.rec);
    const std::string text = csv.str();
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == r.rec.times.size() + 1);
    CHECK(text.rfind("time,v0_px,v0_py,v0_theta,", 0) == 0);
}
