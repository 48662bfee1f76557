#pragma once

// Closed-loop scenario execution: integrates every vehicle under the
// stage-appropriate controller, advances the hybrid automaton and records
// paths, stages, conflict edges, events and safety monitors.

#include "reachguard/controllers.hpp"
#include "reachguard/hybrid.hpp"
#include "reachguard/reach_sets.hpp"

#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace reachguard {

struct VehicleSpec {
    DubinsState initial;
    Goal goal;
};

struct Scenario {
    std::string name = "scenario";
    std::vector<VehicleSpec> vehicles;
    DubinsParams params;
    double Rc = 3.0;
    double Te = 2.0;
    double K = 2.0;
    double dt = 0.05;
    double horizon = 60.0;
    std::uint64_t seed = 0;
    /// Fault injection: the outsider ignores every conflict and the
    /// assignment is reported as unguaranteed.
    bool force_unguaranteed = false;

    void validate() const {
        params.validate();
        if (vehicles.size() < 2) throw ArgumentError("scenario: need at least two vehicles");
        if (!(dt > 0.0) || !(horizon > 0.0)) throw ArgumentError("scenario: dt and horizon must be positive");
        if (!(Rc > 0.0) || !(Te > 0.0) || !(K > 0.0)) throw ArgumentError("scenario: Rc, Te and K must be positive");
        if (dt > 0.1 * std::min(1.0 / params.max_turn, Rc / params.speed) + 1e-12)
            throw ArgumentError("scenario: dt exceeds 0.1 * min(1 / max_turn, Rc / speed)");
        for (const auto& v : vehicles)
            if (!(v.goal.radius > 0.0)) throw ArgumentError("scenario: goal capture radius must be positive");
    }
};

/// One Stage 1/2 (and possible Stage 3) episode, for the theorem monitors.
struct Episode {
    StageKind stage = StageKind::stage0;  ///< stage at entry
    double start = 0.0;
    double end = 0.0;
    double Tr = 0.0;
    std::size_t outsider = 0;
    std::vector<std::size_t> handled;
    Guarantee guarantee = Guarantee::unguaranteed;
    bool outsider_entered_our = false;
    bool buffer_hit = false;
    double buffer_hit_time = std::numeric_limits<double>::quiet_NaN();
    double removal_time = std::numeric_limits<double>::quiet_NaN();
    double min_separation = std::numeric_limits<double>::infinity();  ///< over [start, start + Tr]
    DubinsState outsider_state;                                        ///< at assignment
    std::optional<ValueFunction> brs_minus_start;                      ///< minimal BRS at assignment, if computed
};

struct RunRecord {
    std::vector<double> times;
    std::vector<std::vector<DubinsState>> paths;  ///< [vehicle][step]
    std::vector<StageKind> stages;                ///< per step
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
    std::vector<std::vector<bool>> removed;   ///< [step][vehicle]
    std::vector<std::vector<bool>> arrived;   ///< [step][vehicle]
    std::vector<Event> events;
    std::vector<Episode> episodes;
    double min_separation = std::numeric_limits<double>::infinity();
    std::optional<double> violation_time;
    std::vector<bool> goals_reached;
};

struct RunConfig {
    OutsiderConfig outsider;
};

namespace detail {

inline nlohmann::ordered_json claim_payload(const OutsiderAssignment& a, StageKind stage) {
    nlohmann::ordered_json j;
    j["stage"] = stage_number(stage);
    j["outsider"] = a.outsider_index;
    j["guarantee"] = guarantee_name(a.guarantee);
    j["Tr"] = a.Tr;
    j["candidates"] = a.candidates;
    nlohmann::ordered_json bc = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < a.handled.size(); ++k) {
        const auto& tr = a.trajectories()[k];
        bc.push_back({{"vehicle", a.handled[k]},
                      {"samples", tr.times.size()},
                      {"t_end", tr.times.back()},
                      {"end", {tr.states.back().px, tr.states.back().py, tr.states.back().theta}}});
    }
    j["broadcast"] = bc;
    return j;
}

/// Pairwise avoid against the most urgent active vehicle whose PCS contains i.
inline std::optional<Control> urgent_avoid(std::size_t i, const std::vector<DubinsState>& x,
                                           const std::vector<bool>& active, const PairwiseTables& tables) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> who;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i || !active[j]) continue;
        const auto m = pcs_membership(tables, x[i], x[j]);
        if (m.member && m.value < best) {
            best = m.value;
            who = j;
        }
    }
    if (!who) return std::nullopt;
    return pairwise_avoid_control(tables, x[i], x[*who]);
}

inline bool in_our(const OutsiderAssignment& a, const DubinsState& xo, double tau) {
    if (!a.sets) return false;
    const auto& our = a.sets->our;
    const Grid& g = our.grid();
    if (!g.in_bounds(0, xo.px) || !g.in_bounds(1, xo.py)) return false;
    return interpolate(our.frame_at_or_before(tau), Point{xo.px, xo.py, xo.theta, 0.0}) <= 0.0;
}

}  // namespace detail

/// Runs one scenario to its horizon (or until every vehicle has arrived or
/// been removed).
inline RunRecord run_scenario(const Scenario& sc, const PairwiseTables& base_tables, const RunConfig& cfg) {
    sc.validate();
    if (!(base_tables.params == sc.params)) throw ArgumentError("run_scenario: tables computed for other dynamics");
    if (std::abs(base_tables.Rc - sc.Rc) > 1e-12 || std::abs(base_tables.Te - sc.Te) > 1e-12)
        throw ArgumentError("run_scenario: tables computed for another Rc/Te");
    PairwiseTables tables = base_tables;
    tables.K = sc.K;  // query-time threshold
    OutsiderConfig ocfg = cfg.outsider;
    ocfg.dt = sc.dt;

    const std::size_t n = sc.vehicles.size();
    const std::size_t N = n - 1;
    const DubinsParams& p = sc.params;
    const double dt = sc.dt;
    const double lookahead = 3.0 * dt;

    std::vector<DubinsState> x;
    std::vector<Goal> goals;
    for (const auto& v : sc.vehicles) {
        x.push_back({v.initial.px, v.initial.py, wrap_angle(v.initial.theta)});
        goals.push_back(v.goal);
    }
    std::vector<bool> arrived(n, false);
    std::vector<bool> removed(n, false);
    Stage stage;
    StageClocks clocks;
    std::optional<OutsiderAssignment> assign;
    std::optional<std::size_t> exiting;
    std::set<std::pair<std::size_t, std::size_t>> prev_edges;
    std::set<std::pair<std::size_t, std::size_t>> prev_hits;

    RunRecord rec;
    rec.paths.assign(n, {});
    const auto steps = static_cast<std::size_t>(std::llround(sc.horizon / dt));

    auto episode = [&]() -> Episode* { return rec.episodes.empty() ? nullptr : &rec.episodes.back(); };
    bool in_episode = false;

    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        clocks.now = t;
        std::vector<bool> active(n);
        for (std::size_t i = 0; i < n; ++i) active[i] = !arrived[i] && !removed[i];

        const ConflictGraph graph = conflict_graph(x, tables, active);
        for (const auto& e : graph.edges)
            if (!prev_edges.count(e))
                rec.events.push_back({t, "conflict_edge", {{"i", e.first}, {"j", e.second}, {"present", true}}});
        for (const auto& e : prev_edges)
            if (!graph.edges.count(e))
                rec.events.push_back({t, "conflict_edge", {{"i", e.first}, {"j", e.second}, {"present", false}}});
        prev_edges = graph.edges;

        const auto hits = buffer_monitor(x, tables, active);
        const std::set<std::pair<std::size_t, std::size_t>> hit_set(hits.begin(), hits.end());
        for (const auto& h : hits)
            if (!prev_hits.count(h)) rec.events.push_back({t, "buffer_hit", {{"i", h.first}, {"j", h.second}}});
        prev_hits = hit_set;
        bool outsider_hit = false;
        if (assign && stage.kind == StageKind::stage2)
            for (const auto& h : hits) outsider_hit |= h.first == assign->outsider_index || h.second == assign->outsider_index;

        Stage next = stage_transition(stage, graph, N, clocks, outsider_hit);
        if (next.kind != stage.kind) {
            rec.events.push_back(
                {t, "stage", {{"from", stage_number(stage.kind)}, {"to", stage_number(next.kind)}}});
            if (stage.kind == StageKind::stage3 && exiting) {
                removed[*exiting] = true;
                active[*exiting] = false;
                rec.events.push_back({t, "removal", {{"vehicle", *exiting}}});
                if (auto* ep = episode()) ep->removal_time = t;
                exiting.reset();
            }
            if (next.kind == StageKind::stage0) {
                if (in_episode) episode()->end = t;
                in_episode = false;
                assign.reset();
                clocks.resolve_deadline = std::numeric_limits<double>::infinity();
                clocks.removal_deadline = std::numeric_limits<double>::infinity();
            }
            if (next.kind == StageKind::stage1 || next.kind == StageKind::stage2) {
                if (in_episode) episode()->end = t;
                if (next.kind == StageKind::stage1) {
                    const auto conflicting = graph.conflicting();
                    std::size_t outsider = n;
                    for (std::size_t i = 0; i < n && outsider == n; ++i)
                        if (active[i] && !std::binary_search(conflicting.begin(), conflicting.end(), i)) outsider = i;
                    try {
                        assign = evaluate_outsider(outsider, conflicting, x, goals, tables, p, ocfg);
                    } catch (const ProtocolError&) {
                        OutsiderAssignment a;
                        a.outsider_index = outsider;
                        a.handled = conflicting;
                        std::vector<DubinsState> hs;
                        for (std::size_t i : conflicting) hs.push_back(x[i]);
                        a.n_result = continue_course(hs, p, dt);
                        a.Tr = a.n_result.Tr;
                        assign = std::move(a);
                    }
                    assign->candidates = {outsider};
                } else {
                    assign = pick_outsider(x, goals, active, tables, p, ocfg);
                }
                if (sc.force_unguaranteed) assign->guarantee = Guarantee::unguaranteed;
                assign->start_time = t;
                clocks.resolve_deadline = t + assign->Tr;
                rec.events.push_back({t, "outsider_claim", detail::claim_payload(*assign, next.kind)});
                Episode ep;
                ep.stage = next.kind;
                ep.start = t;
                ep.end = t + assign->Tr;
                ep.Tr = assign->Tr;
                ep.outsider = assign->outsider_index;
                ep.handled = assign->handled;
                ep.guarantee = assign->guarantee;
                ep.outsider_state = x[assign->outsider_index];
                if (assign->sets && assign->sets->brs_minus) ep.brs_minus_start = assign->sets->brs_minus->frame(0);
                rec.episodes.push_back(std::move(ep));
                in_episode = true;
            }
            if (next.kind == StageKind::stage3) {
                exiting = assign->outsider_index;
                clocks.removal_deadline = t + sc.Te;
                if (auto* ep = episode()) {
                    ep->buffer_hit = true;
                    ep->buffer_hit_time = t;
                }
            }
        }
        stage = next;

        // record this step
        rec.times.push_back(t);
        for (std::size_t i = 0; i < n; ++i) rec.paths[i].push_back(x[i]);
        rec.stages.push_back(stage.kind);
        rec.edges.push_back({graph.edges.begin(), graph.edges.end()});
        rec.removed.push_back(removed);
        rec.arrived.push_back(arrived);

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (removed[i] || removed[j]) continue;
                const double d = planar_distance(x[i], x[j]);
                rec.min_separation = std::min(rec.min_separation, d);
                if (d <= sc.Rc && !rec.violation_time) rec.violation_time = t;
                if (in_episode && t <= episode()->start + episode()->Tr + 1e-9)
                    episode()->min_separation = std::min(episode()->min_separation, d);
            }
        if (in_episode && assign && !removed[assign->outsider_index] &&
            detail::in_our(*assign, x[assign->outsider_index], t - assign->start_time))
            episode()->outsider_entered_our = true;

        bool any_active = false;
        for (std::size_t i = 0; i < n; ++i) any_active |= active[i];
        if (k >= steps || !any_active) break;

        // controls
        std::vector<Control> u(n);
        const double tau = assign ? t - assign->start_time : 0.0;
        const bool tracking = assign && tau <= assign->Tr + 1e-9 &&
                              (stage.kind == StageKind::stage1 || stage.kind == StageKind::stage2 ||
                               stage.kind == StageKind::stage3);
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            if (exiting == i) {
                const auto avoid = detail::urgent_avoid(i, x, active, tables);
                u[i] = avoid ? *avoid : goal_controller(x[i], goals[i], p);
                continue;
            }
            if (tracking) {
                const auto it = std::find(assign->handled.begin(), assign->handled.end(), i);
                if (it != assign->handled.end()) {
                    const auto slot = static_cast<std::size_t>(it - assign->handled.begin());
                    u[i] = trajectory_tracker(assign->trajectories()[slot], x[i], std::min(tau, assign->Tr), p,
                                              lookahead);
                    continue;
                }
                if (i == assign->outsider_index) {
                    u[i] = sc.force_unguaranteed ? goal_controller(x[i], goals[i], p)
                                                 : outsider_control(*assign, x[i], std::min(tau, assign->Tr), tables,
                                                                    goals[i], p);
                    continue;
                }
            }
            u[i] = priority_control(i, x, goals, active, tables, p);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            x[i] = midpoint_step(x[i], u[i], p, dt);
            if (goal_reached(x[i], goals[i])) arrived[i] = true;
        }
    }
    if (in_episode && episode()->end > rec.times.back()) episode()->end = rec.times.back();
    rec.goals_reached = arrived;
    return rec;
}

/// Fixed-precision CSV: time, per-vehicle px/py/theta, stage, per-vehicle removed flag.
inline void write_run_csv(std::ostream& os, const RunRecord& r) {
    const std::size_t n = r.paths.size();
    os << "time";
    for (std::size_t i = 0; i < n; ++i) os << ",v" << i << "_px,v" << i << "_py,v" << i << "_theta";
    os << ",stage";
    for (std::size_t i = 0; i < n; ++i) os << ",v" << i << "_removed";
    os << '\n';
    char buf[64];
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.4f", r.times[k]);
        os << buf;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = r.paths[i][k];
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f", s.px, s.py, s.theta);
            os << buf;
        }
        os << ',' << stage_number(r.stages[k]);
        for (std::size_t i = 0; i < n; ++i) os << ',' << (r.removed[k][i] ? 1 : 0);
        os << '\n';
    }
}

inline std::string run_summary(const Scenario& sc, const RunRecord& r) {
    std::ostringstream os;
    char buf[128];
    os << "scenario: " << sc.name << '\n';
    std::set<int> seen;
    for (auto s : r.stages) seen.insert(stage_number(s));
    os << "stages entered:";
    for (int s : seen) os << ' ' << s;
    os << '\n';
    for (const auto& e : r.episodes) {
        std::snprintf(buf, sizeof buf, "stage %d at t=%.2f: outsider %zu, guarantee %s, Tr=%.2f", stage_number(e.stage),
                      e.start, e.outsider, guarantee_name(e.guarantee), e.Tr);
        os << buf;
        if (e.buffer_hit) {
            std::snprintf(buf, sizeof buf, ", buffer hit at t=%.2f", e.buffer_hit_time);
            os << buf;
        }
        if (!std::isnan(e.removal_time)) {
            std::snprintf(buf, sizeof buf, ", removed at t=%.2f", e.removal_time);
            os << buf;
        }
        os << '\n';
    }
    std::snprintf(buf, sizeof buf, "min separation: %.4f (Rc = %.2f)", r.min_separation, sc.Rc);
    os << buf << '\n';
    if (r.violation_time) {
        std::snprintf(buf, sizeof buf, "VIOLATION: separation <= Rc at t=%.2f", *r.violation_time);
        os << buf << '\n';
    }
    std::size_t reached = 0;
    for (bool g : r.goals_reached) reached += g ? 1 : 0;
    os << "goals reached: " << reached << '/' << r.goals_reached.size() << '\n';
    return os.str();
}

}  // namespace reachguard
