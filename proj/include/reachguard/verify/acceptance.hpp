#pragma once

// Acceptance suite: the nine end-to-end checks run by `reachguard verify`
// and the acceptance test binary.

#include "reachguard/hj_solver.hpp"
#include "reachguard/hybrid.hpp"
#include "reachguard/io.hpp"
#include "reachguard/sim.hpp"
#include "reachguard/verify/oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace reachguard::acceptance {

struct CriterionResult {
    int id = 0;
    std::string name;
    std::string measured;
    std::string bound;
    bool pass = false;
    double seconds = 0.0;
};

struct Inputs {
    Config config;
    const Precomputed* pre = nullptr;
    fs::path fixtures;
};

namespace detail {

inline std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct FixtureRun {
    Scenario scenario;
    RunRecord record;
};

inline FixtureRun run_fixture(const Inputs& in, const std::string& file) {
    FixtureRun r;
    r.scenario = load_scenario(in.fixtures / file);
    const Config c = config_for(in.config, r.scenario);
    r.record = run_scenario(r.scenario, in.pre->tables, run_config(c, r.scenario, in.pre->frs));
    return r;
}

inline std::string run_bytes(const RunRecord& r) {
    std::ostringstream os;
    write_run_csv(os, r);
    os << "--\n";
    write_event_log(os, r.events);
    return os.str();
}

// 1-D advection helpers

inline ValueFunction interval(const Grid& g, double m, double r) {
    return sample(g, [=](const Point& p) { return (p[0] - m) * (p[0] - m) - r * r; });
}

inline double left_boundary(const ValueFunction& v) {
    const Grid& g = v.grid();
    for (std::size_t i = 0; i + 1 < g.size(); ++i)
        if (v[i] > 0.0 && v[i + 1] <= 0.0) return g.coordinate(0, i) + g.spacing(0) * v[i] / (v[i] - v[i + 1]);
    return std::numeric_limits<double>::quiet_NaN();
}

inline double advection_error(std::size_t nodes) {
    const Grid g({{-2.0, 2.0, nodes, false}});
    const HamiltonianSpec h{[](const Point&, const Point& p, double) { return p[0]; }, {1.0}};
    const auto out = solve_brs_time_varying(g, TimeIndexedValueFunction({0.0}, {interval(g, 0.5, 0.5)}), h, 0.0, 1.0);
    return std::abs(left_boundary(out.frame(0)) - (-1.0));
}

inline Trajectory straight(const DubinsState& s0, const DubinsParams& p, double horizon, double dt) {
    Trajectory tr;
    DubinsState s = s0;
    const auto steps = static_cast<std::size_t>(std::lround(horizon / dt));
    for (std::size_t i = 0; i <= steps; ++i) {
        tr.times.push_back(static_cast<double>(i) * dt);
        tr.states.push_back(s);
        s = midpoint_step(s, {0.0}, p, dt);
    }
    return tr;
}

}  // namespace detail

/// 1. Closed-form Hamiltonians against gridded-control brute force.
inline CriterionResult hamiltonian_oracle(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const DubinsParams& p = in.config.params;
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> pos(-15.0, 15.0);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> lam(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const RelativeState r{pos(rng), pos(rng), ang(rng)};
        const Vec3 l{lam(rng), lam(rng), lam(rng)};
        const DubinsState x{pos(rng), pos(rng), ang(rng)};
        worst = std::max({worst, std::abs(ham_pc(r, l, p) - oracle::ham_pc(r, l, p)),
                          std::abs(ham_exit(r, l, p) - oracle::ham_exit(r, l, p)),
                          std::abs(ham_frs_dubins(x, l, p) - oracle::ham_frs(x, l, p))});
    }
    const double bound = 1e-6 + p.max_turn / 101.0;
    const double secs = detail::seconds_since(t0);
    return {1, "hamiltonian oracle", detail::fmt("max |diff| %.3e over 3x1000", worst),
            detail::fmt("<= %.3e, < 10 s", bound), worst <= bound && secs < 10.0, secs};
}

/// 2. BRS boundary of 1-D advection against characteristics.
inline CriterionResult advection(const Inputs&) {
    const auto t0 = std::chrono::steady_clock::now();
    const double dx = 4.0 / 200.0;
    const double e1 = detail::advection_error(201);
    const double e2 = detail::advection_error(401);
    const double secs = detail::seconds_since(t0);
    const bool pass = e1 <= 2.0 * dx && e1 / e2 >= 1.5 && secs < 5.0;
    return {2, "1-D advection", detail::fmt("err %.4f (%.2f cells), ratio %.2f", e1, e1 / dx, e1 / e2),
            "<= 2 cells, ratio >= 1.5, < 5 s", pass, secs};
}

/// 3. Origin FRS at t = 1 against random-control rollouts and the speed bound.
inline CriterionResult frs_physicality(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const DubinsParams& p = in.config.params;
    const auto& frs = in.pre->frs;
    const auto& f1 = frs.frame_near(1.0);
    const Grid& g = f1.grid();
    const double dx = std::max(g.spacing(0), g.spacing(1));
    double reach = 0.0;
    for (std::size_t n = 0; n < g.size(); ++n)
        if (f1[n] <= 0.0) {
            const Point q = g.node_point(n);
            reach = std::max(reach, std::hypot(q[0], q[1]));
        }
    std::mt19937 rng(303);
    int inside = 0;
    for (int i = 0; i < 500; ++i) {
        const auto e = oracle::random_rollout({0, 0, 0}, p, 1.0, 0.25, rng);
        if (interpolate(f1, Point{e.px, e.py, e.theta, 0.0}) <= 0.0) ++inside;
    }
    const double radius = p.speed * 1.0 + 2.0 * dx;
    const double secs = detail::seconds_since(t0) + in.pre->frs_seconds;
    const bool pass = inside >= 495 && reach <= radius + 1e-9 && secs < 120.0;
    return {3, "FRS physicality", detail::fmt("%d/500 inside, reach %.3f", inside, reach),
            detail::fmt(">= 495, reach <= %.3f, < 120 s", radius), pass, secs};
}

/// 4. Danger disk inside the buffer set inside the conflict set, node-wise.
inline CriterionResult containment(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& t = in.pre->tables;
    const Grid& g = t.v_pc.grid();
    constexpr double slack = 1e-9;
    std::size_t disk = 0, buffer = 0, bad = 0;
    for (std::size_t n = 0; n < g.size(); ++n) {
        const Point q = g.node_point(n);
        if (std::hypot(q[0], q[1]) <= in.config.Rc) {
            ++disk;
            if (t.v_exit[n] > slack) ++bad;
        }
        if (t.v_exit[n] <= 0.0) {
            ++buffer;
            if (t.v_pc[n] > in.config.K + slack) ++bad;
        }
    }
    const double solve = in.pre->tables_seconds;
    const double secs = detail::seconds_since(t0) + solve;
    const bool pass = bad == 0 && disk > 0 && buffer >= disk && solve < 1200.0;
    return {4, "buffer/conflict containment",
            detail::fmt("%zu violations (%zu disk, %zu buffer nodes)", bad, disk, buffer),
            "0 violations, solve < 1200 s", pass, secs};
}

/// 5. FRS/OUR first intersection against the exhaustive scan.
inline CriterionResult frs_our_equivalence(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const DubinsParams& p = in.config.params;
    const Grid og = make_pose_grid(-12, 12, -12, 12, 31, 31, 16);
    std::mt19937 rng(505);
    std::uniform_real_distribution<double> pos(-8.0, 8.0);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    int agree = 0, hits = 0;
    constexpr int trials = 24;
    for (int s = 0; s < trials; ++s) {
        const double Tr = 2.0 + 0.25 * (s % 8);
        const std::vector<Trajectory> trajs{detail::straight({pos(rng), pos(rng), ang(rng)}, p, Tr, 0.1),
                                            detail::straight({pos(rng), pos(rng), ang(rng)}, p, Tr, 0.1),
                                            detail::straight({pos(rng), pos(rng), ang(rng)}, p, Tr, 0.1)};
        const auto our = compute_our(in.pre->tables, trajs, og, 4);
        const auto frs = compute_frs_outsider(in.pre->frs, {pos(rng), pos(rng), ang(rng)}, og, our.times());
        const auto got = frs_intersects_our(frs, our);
        const auto want = oracle::first_intersection(frs, our);
        if (got.has_value() == want.has_value() && (!got || *got == *want)) ++agree;
        if (want) ++hits;
    }
    const double secs = detail::seconds_since(t0);
    return {5, "FRS/OUR intersection", detail::fmt("%d/%d agree (%d hits)", agree, trials, hits),
            detail::fmt("%d/%d, mixed outcomes", trials, trials), agree == trials && hits > 0 && hits < trials, secs};
}

/// Closed-loop rollouts of outsider_control from outside the minimal BRS.
struct OutsiderRollouts {
    int rollouts = 0;
    int violations = 0;
    int band_starts = 0;  ///< starts within a few cells of the BRS boundary
    double worst_margin = std::numeric_limits<double>::infinity();  ///< min OUR value seen, plus eps
    double Tr = 0.0;
};

inline OutsiderRollouts outsider_rollouts(const PairwiseTables& tables, const DubinsParams& p,
                                          const std::vector<DubinsState>& handled, const Grid& og,
                                          const SolveConfig& solver, int count, std::uint32_t seed, double dt = 0.05) {
    OutsiderRollouts out;
    std::vector<Goal> goals;
    for (const auto& s : handled) goals.push_back({s.px + 30.0 * std::cos(s.theta), s.py + 30.0 * std::sin(s.theta), 1.0});
    OutsiderAssignment a;
    a.n_result = handle_n(handled, goals, tables, p, dt);
    if (a.n_result.degenerate) throw ArgumentError("outsider_rollouts: handled vehicles start without conflict");
    a.Tr = a.n_result.Tr;
    out.Tr = a.Tr;
    const auto& trajs = a.trajectories();
    OutsiderConfig oc;
    oc.grid = og;
    const std::size_t stride = frame_stride_for(trajs.front().times.size(), oc);
    auto our = compute_our(tables, trajs, og, stride);
    auto brs = compute_brs_minus(our, trajs, tables, p, a.Tr, solver);
    for (std::size_t k = 0; k < handled.size(); ++k) a.handled.push_back(k);
    a.guarantee = Guarantee::brs_minus_clear;
    a.sets = OutsiderSets{std::move(our), std::move(brs), TimeIndexedValueFunction({0.0}, {ValueFunction(og, std::vector<double>(og.size(), 1.0))}), a.Tr};

    const double eps = cell_slack(og);
    const auto& b0 = a.sets->brs_minus->frame(0);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ux(og.axis(0).min + 2 * eps, og.axis(0).max - 2 * eps);
    std::uniform_real_distribution<double> uy(og.axis(1).min + 2 * eps, og.axis(1).max - 2 * eps);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    const double band = 3.0 * eps;
    const auto steps = static_cast<std::size_t>(std::lround(a.Tr / dt));
    for (int r = 0; r < count; ++r) {
        // half the starts hug the boundary band, the rest are anywhere outside
        DubinsState x;
        bool in_band = false;
        for (int tries = 0; tries < 20000; ++tries) {
            x = {ux(rng), uy(rng), ang(rng)};
            const double v = interpolate(b0, Point{x.px, x.py, x.theta, 0.0});
            if (v <= 0.0) continue;
            in_band = v <= band;
            if (r % 2 == 1 || in_band) break;
        }
        out.band_starts += in_band ? 1 : 0;
        const Goal goal{ux(rng), uy(rng), 1.0};
        bool violated = false;
        for (std::size_t k = 0; k <= steps; ++k) {
            const double t = std::min(static_cast<double>(k) * dt, a.Tr);
            if (og.in_bounds(0, x.px) && og.in_bounds(1, x.py)) {
                const double v = interpolate(a.sets->our.frame_at_or_before(t), Point{x.px, x.py, x.theta, 0.0});
                out.worst_margin = std::min(out.worst_margin, v + eps);
                if (v <= -eps) violated = true;
            }
            if (k == steps) break;
            x = midpoint_step(x, outsider_control(a, x, t, tables, goal, p), p, dt);
        }
        ++out.rollouts;
        out.violations += violated ? 1 : 0;
    }
    return out;
}

/// Three vehicles converging on the origin, 120 degrees apart; at radius 5
/// they start in mutual conflict.
inline std::vector<DubinsState> converging_trio(double radius = 5.0) {
    std::vector<DubinsState> v;
    for (int k = 0; k < 3; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 3.0 + 0.3;
        v.push_back({radius * std::cos(a), radius * std::sin(a), wrap_angle(a + std::numbers::pi + 0.05 * k)});
    }
    return v;
}

/// 6. Outsider control keeps starts outside the minimal BRS out of OUR.
inline CriterionResult outsider_closed_loop(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const Grid og = make_pose_grid(-16, 16, -16, 16, 65, 65, 36);
    const auto r = outsider_rollouts(in.pre->tables, in.config.params, converging_trio(), og, in.config.solver, 200, 606);
    const double secs = detail::seconds_since(t0);
    return {6, "outsider closed loop",
            detail::fmt("%d/%d violations (%d band starts, Tr %.2f, min our+eps %.3f)", r.violations, r.rollouts,
                        r.band_starts, r.Tr, r.worst_margin),
            "0 violations over 200", r.violations == 0 && r.rollouts == 200, secs};
}

/// 7. Guaranteed assignments keep the fixtures collision free.
inline CriterionResult guaranteed_fixtures(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string measured;
    for (const char* file : {"stage1_four_vehicle.json", "stage2_four_vehicle.json"}) {
        const auto run = detail::run_fixture(in, file);
        int guaranteed = 0, kept_out = 0;
        bool stage_seen = false;
        for (const auto& e : run.record.episodes) {
            stage_seen = stage_seen || e.stage == StageKind::stage1 || e.stage == StageKind::stage2;
            if (e.guarantee == Guarantee::unguaranteed) continue;
            ++guaranteed;
            if (!e.outsider_entered_our) ++kept_out;
        }
        const bool ok = stage_seen && kept_out > 0 && run.record.min_separation > run.scenario.Rc;
        pass = pass && ok;
        measured += detail::fmt("%s%s: %d/%d guaranteed clear, min sep %.3f", measured.empty() ? "" : "; ",
                                file[5] == '1' ? "stage1" : "stage2", kept_out, guaranteed, run.record.min_separation);
    }
    return {7, "guaranteed separation", measured, "min sep > Rc = 3, >= 1 guaranteed episode each", pass,
            detail::seconds_since(t0)};
}

/// 8. A forced buffer hit leads to removal within Te and safe survivors.
inline CriterionResult forced_removal(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = detail::run_fixture(in, "forced_removal.json");
    const auto& rec = run.record;
    const Episode* ep = nullptr;
    for (const auto& e : rec.episodes)
        if (e.buffer_hit && !std::isnan(e.removal_time)) {
            ep = &e;
            break;
        }
    if (ep == nullptr)
        return {8, "forced removal", "no Stage 3 removal", "removal within Te", false, detail::seconds_since(t0)};
    std::size_t removed = rec.paths.size();
    for (const auto& e : rec.events)
        if (e.type == "removal") {
            removed = e.payload.at("vehicle").get<std::size_t>();
            break;
        }
    const double delay = ep->removal_time - ep->buffer_hit_time;
    double sep = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
        if (rec.times[k] < ep->buffer_hit_time - 1e-9) continue;
        for (std::size_t i = 0; i < rec.paths.size(); ++i)
            for (std::size_t j = i + 1; j < rec.paths.size(); ++j) {
                if (i == removed || j == removed || rec.removed[k][i] || rec.removed[k][j]) continue;
                sep = std::min(sep, planar_distance(rec.paths[i][k], rec.paths[j][k]));
            }
    }
    const double dt = run.scenario.dt;
    const bool pass = removed < rec.paths.size() && delay <= run.scenario.Te + 0.5 * dt && sep > run.scenario.Rc;
    return {8, "forced removal",
            detail::fmt("hit %.2f, removed v%zu after %.2f s, survivor sep %.3f", ep->buffer_hit_time, removed, delay, sep),
            "delay <= Te = 2, sep > Rc = 3", pass, detail::seconds_since(t0)};
}

/// 9. Repeated runs produce identical bytes.
inline CriterionResult determinism(const Inputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = detail::run_bytes(detail::run_fixture(in, "stage2_four_vehicle.json").record);
    const auto b = detail::run_bytes(detail::run_fixture(in, "stage2_four_vehicle.json").record);
    const auto c1 = frs_our_equivalence(in);
    const auto c2 = frs_our_equivalence(in);
    const bool pass = a == b && c1.measured == c2.measured;
    return {9, "determinism",
            detail::fmt("run logs %s (%zu bytes), verify rows %s", a == b ? "identical" : "differ", a.size(),
                        c1.measured == c2.measured ? "identical" : "differ"),
            "byte-identical", pass, detail::seconds_since(t0)};
}

using Criterion = std::function<CriterionResult(const Inputs&)>;

inline std::vector<Criterion> all_criteria() {
    return {hamiltonian_oracle,  advection,           frs_physicality, containment, frs_our_equivalence,
            outsider_closed_loop, guaranteed_fixtures, forced_removal,  determinism};
}

/// Runs every criterion, printing one row per criterion as it completes.
/// Timings go to `timing` so the report itself is reproducible.
inline std::vector<CriterionResult> run_all(const Inputs& in, std::ostream& report, std::ostream& timing) {
    std::vector<CriterionResult> out;
    for (const auto& c : all_criteria()) {
        CriterionResult r;
        try {
            r = c(in);
        } catch (const std::exception& e) {
            r = {static_cast<int>(out.size()) + 1, "criterion", std::string("error: ") + e.what(), "-", false, 0.0};
        }
        report << detail::fmt("[%s] %d %-28s | %s | %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(),
                              r.measured.c_str(), r.bound.c_str());
        report.flush();
        timing << detail::fmt("criterion %d: %.1f s\n", r.id, r.seconds);
        out.push_back(std::move(r));
    }
    return out;
}

inline bool all_passed(const std::vector<CriterionResult>& rs) {
    for (const auto& r : rs)
        if (!r.pass) return false;
    return !rs.empty();
}

}  // namespace reachguard::acceptance
