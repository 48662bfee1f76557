#pragma once

// Conflict graph, the staged hybrid automaton, the baseline N-vehicle
// avoidance algorithm, outsider selection and outsider control.

#include "reachguard/controllers.hpp"
#include "reachguard/dynamics.hpp"
#include "reachguard/errors.hpp"
#include "reachguard/reach_sets.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace reachguard {

// ---------------------------------------------------------------------------
// Conflict graph

struct ConflictGraph {
    std::size_t vehicle_count = 0;
    std::set<std::pair<std::size_t, std::size_t>> edges;  ///< (i, j) with i < j
    std::vector<bool> active;                              ///< vehicles taking part

    std::size_t degree(std::size_t i) const {
        std::size_t d = 0;
        for (const auto& [a, b] : edges) d += (a == i || b == i) ? 1 : 0;
        return d;
    }

    bool has_edge(std::size_t i, std::size_t j) const { return edges.count({std::min(i, j), std::max(i, j)}) > 0; }

    std::size_t active_count() const { return static_cast<std::size_t>(std::count(active.begin(), active.end(), true)); }

    std::vector<std::size_t> conflicting() const {
        std::set<std::size_t> s;
        for (const auto& [a, b] : edges) {
            s.insert(a);
            s.insert(b);
        }
        return {s.begin(), s.end()};
    }
};

/// Edge {i, j} iff either vehicle lies in the other's PCS. Inactive
/// vehicles (arrived or removed) have no edges.
inline ConflictGraph conflict_graph(const std::vector<DubinsState>& states, const PairwiseTables& tables,
                                    std::vector<bool> active = {}) {
    if (states.size() < 2) throw ArgumentError("conflict_graph: need at least two vehicles");
    if (active.empty()) active.assign(states.size(), true);
    if (active.size() != states.size()) throw ArgumentError("conflict_graph: active mask size mismatch");
    ConflictGraph g{states.size(), {}, std::move(active)};
    for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = i + 1; j < states.size(); ++j) {
            if (!g.active[i] || !g.active[j]) continue;
            if (pcs_membership(tables, states[i], states[j]).member || pcs_membership(tables, states[j], states[i]).member)
                g.edges.insert({i, j});
        }
    return g;
}

/// Number of vehicles with at least one edge.
inline std::size_t conflict_size(const ConflictGraph& g) { return g.conflicting().size(); }

// ---------------------------------------------------------------------------
// Stages

enum class StageKind { stage0 = 0, stage1 = 1, stage2 = 2, stage3 = 3 };

struct Stage {
    StageKind kind = StageKind::stage0;
    double entered = 0.0;

    friend bool operator==(const Stage&, const Stage&) = default;
};

struct StageClocks {
    double now = 0.0;
    double resolve_deadline = std::numeric_limits<double>::infinity();  ///< entry time + Tr
    double removal_deadline = std::numeric_limits<double>::infinity();  ///< buffer hit + Te
};

inline int stage_number(StageKind k) { return static_cast<int>(k); }

inline bool transition_allowed(StageKind from, StageKind to) {
    switch (from) {
        case StageKind::stage0:
        case StageKind::stage1:
            return to != StageKind::stage3;
        case StageKind::stage2:
            return to != StageKind::stage1;
        case StageKind::stage3:
            return to == StageKind::stage3 || to == StageKind::stage0;
    }
    return false;
}

/// Stage the automaton holds after observing the conflict graph at clocks.now.
inline Stage stage_transition(const Stage& current, const ConflictGraph& g, std::size_t N, const StageClocks& clocks,
                              bool buffer_hit) {
    constexpr double eps = 1e-9;
    const double now = clocks.now;
    // the N + 1 framework needs an N-vehicle algorithm with N >= 2
    if (N < 2) return current;
    switch (current.kind) {
        case StageKind::stage3:
            return now >= clocks.removal_deadline - eps ? Stage{StageKind::stage0, now} : current;
        case StageKind::stage1:
        case StageKind::stage2: {
            if (now >= clocks.resolve_deadline - eps) return {StageKind::stage0, now};
            if (current.kind == StageKind::stage2 && buffer_hit) return {StageKind::stage3, now};
            if (current.kind == StageKind::stage1 && conflict_size(g) >= N + 1) return {StageKind::stage2, now};
            return current;
        }
        case StageKind::stage0: {
            const std::size_t size = conflict_size(g);
            if (size >= N + 1) return {StageKind::stage2, now};
            if (size == N && N > 0 && g.active_count() >= N + 1) return {StageKind::stage1, now};
            return current;
        }
    }
    return current;
}

// ---------------------------------------------------------------------------
// Baseline N-vehicle avoidance

/// Priority rule: vehicle i avoids the lowest-index active j < i whose PCS
/// contains it, otherwise pursues its goal.
inline Control priority_control(std::size_t i, const std::vector<DubinsState>& states, const std::vector<Goal>& goals,
                                 const std::vector<bool>& active, const PairwiseTables& tables,
                                 const DubinsParams& p) {
    for (std::size_t j = 0; j < i; ++j) {
        if (!active[j]) continue;
        if (pcs_membership(tables, states[i], states[j]).member) return pairwise_avoid_control(tables, states[i], states[j]);
    }
    return goal_controller(states[i], goals[i], p);
}

struct NAvoidanceResult {
    double Tr = 0.0;
    std::vector<Trajectory> trajectories;
    std::vector<std::vector<double>> controls;  ///< per vehicle, per step turn rate
    bool degenerate = false;                    ///< no initial conflict; continue-course paths
};

inline constexpr double kHandleNCap = 60.0;

inline NAvoidanceResult continue_course(const std::vector<DubinsState>& states, const DubinsParams& p, double dt) {
    NAvoidanceResult r;
    r.Tr = dt;
    r.degenerate = true;
    for (const auto& s : states) {
        r.trajectories.push_back({{0.0, dt}, {s, midpoint_step(s, {0.0}, p, dt)}});
        r.controls.push_back({0.0});
    }
    return r;
}

/// Baseline handleN: simulate the N vehicles under the priority rule until
/// their conflict size first drops by at least one.
inline NAvoidanceResult handle_n(const std::vector<DubinsState>& states, const std::vector<Goal>& goals,
                                 const PairwiseTables& tables, const DubinsParams& p, double dt,
                                 double cap = kHandleNCap) {
    if (states.size() < 2) throw ArgumentError("handle_n: need at least two vehicles");
    if (goals.size() != states.size()) throw ArgumentError("handle_n: goals/states size mismatch");
    if (!(dt > 0.0)) throw ArgumentError("handle_n: dt must be positive");
    const std::vector<bool> active(states.size(), true);
    const std::size_t initial = conflict_size(conflict_graph(states, tables, active));
    if (initial == 0) return continue_course(states, p, dt);

    NAvoidanceResult r;
    r.trajectories.resize(states.size());
    r.controls.resize(states.size());
    std::vector<DubinsState> x = states;
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.trajectories[i].times.push_back(0.0);
        r.trajectories[i].states.push_back(x[i]);
    }
    const auto max_steps = static_cast<std::size_t>(std::ceil(cap / dt - 1e-9));
    for (std::size_t step = 1; step <= max_steps; ++step) {
        std::vector<Control> u(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = priority_control(i, x, goals, active, tables, p);
        const double t = static_cast<double>(step) * dt;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = midpoint_step(x[i], u[i], p, dt);
            r.controls[i].push_back(u[i].omega);
            r.trajectories[i].times.push_back(t);
            r.trajectories[i].states.push_back(x[i]);
        }
        if (conflict_size(conflict_graph(x, tables, active)) + 1 <= initial) {
            r.Tr = t;
            return r;
        }
    }
    throw ProtocolError("handle_n: conflict not reduced within " + std::to_string(cap) + " s");
}

// ---------------------------------------------------------------------------
// Outsider assignment

enum class Guarantee { frs_clear, brs_minus_clear, unguaranteed };

inline const char* guarantee_name(Guarantee g) {
    switch (g) {
        case Guarantee::frs_clear:
            return "frs_clear";
        case Guarantee::brs_minus_clear:
            return "brs_minus_clear";
        case Guarantee::unguaranteed:
            return "unguaranteed";
    }
    return "?";
}

/// Everything the outsider machinery needs besides the pairwise tables.
struct OutsiderConfig {
    Grid grid;            ///< outsider pose grid
    const OriginFrs* frs = nullptr;
    SolveConfig solver;
    std::size_t frame_stride = 5;
    std::size_t max_frames = 64;
    double dt = 0.05;
};

struct OutsiderAssignment {
    std::size_t outsider_index = 0;
    std::vector<std::size_t> handled;  ///< indices of the N vehicles, ascending
    double Tr = 0.0;
    NAvoidanceResult n_result;
    std::optional<OutsiderSets> sets;  ///< absent when handle_n failed for every candidate
    Guarantee guarantee = Guarantee::unguaranteed;
    double start_time = 0.0;
    std::vector<std::size_t> candidates;

    const std::vector<Trajectory>& trajectories() const { return n_result.trajectories; }
};

inline std::size_t frame_stride_for(std::size_t samples, const OutsiderConfig& cfg) {
    const std::size_t cap = std::max<std::size_t>(cfg.max_frames, 2);
    const std::size_t need = (samples + cap - 2) / (cap - 1);
    return std::max<std::size_t>({cfg.frame_stride, need, 1});
}

/// Runs handle_n on `handled`, builds OUR and the FRS for `candidate` and
/// classifies the guarantee (FRS test first, minimal BRS second).
inline OutsiderAssignment evaluate_outsider(std::size_t candidate, const std::vector<std::size_t>& handled,
                                            const std::vector<DubinsState>& states, const std::vector<Goal>& goals,
                                            const PairwiseTables& tables, const DubinsParams& p,
                                            const OutsiderConfig& cfg) {
    if (cfg.frs == nullptr) throw ArgumentError("evaluate_outsider: missing origin FRS");
    OutsiderAssignment a;
    a.outsider_index = candidate;
    a.handled = handled;
    std::vector<DubinsState> hs;
    std::vector<Goal> hg;
    for (std::size_t i : handled) {
        hs.push_back(states[i]);
        hg.push_back(goals[i]);
    }
    a.n_result = handle_n(hs, hg, tables, p, cfg.dt);
    a.Tr = a.n_result.Tr;

    const auto& trajs = a.n_result.trajectories;
    const std::size_t stride = frame_stride_for(trajs.front().times.size(), cfg);
    auto our = compute_our(tables, trajs, cfg.grid, stride);
    auto frs = compute_frs_outsider(*cfg.frs, states[candidate], cfg.grid, our.times());
    OutsiderSets sets{std::move(our), std::nullopt, std::move(frs), a.Tr};
    if (!frs_intersects_our(sets.frs, sets.our)) {
        a.guarantee = Guarantee::frs_clear;
    } else {
        sets.brs_minus = compute_brs_minus(sets.our, trajs, tables, p, a.Tr, cfg.solver);
        const auto& s = states[candidate];
        const bool on_grid = cfg.grid.in_bounds(0, s.px) && cfg.grid.in_bounds(1, s.py);
        const double v0 = on_grid ? interpolate(sets.brs_minus->frame(0), Point{s.px, s.py, s.theta, 0.0}) : kFarValue;
        a.guarantee = v0 > cell_slack(cfg.grid) ? Guarantee::brs_minus_clear : Guarantee::unguaranteed;
    }
    a.sets = std::move(sets);
    return a;
}

/// Minimum-degree active vehicles in ascending index order.
inline std::vector<std::size_t> least_conflict_vehicles(const ConflictGraph& g) {
    std::vector<std::size_t> out;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < g.vehicle_count; ++i) {
        if (!g.active[i]) continue;
        const std::size_t d = g.degree(i);
        if (d < best) {
            best = d;
            out.clear();
        }
        if (d == best) out.push_back(i);
    }
    return out;
}

/// Outsider selection: first minimum-degree candidate with a guarantee,
/// else the first candidate unguaranteed.
inline OutsiderAssignment pick_outsider(const std::vector<DubinsState>& states, const std::vector<Goal>& goals,
                                        const std::vector<bool>& active, const PairwiseTables& tables,
                                        const DubinsParams& p, const OutsiderConfig& cfg) {
    const ConflictGraph g = conflict_graph(states, tables, active);
    const auto candidates = least_conflict_vehicles(g);
    if (candidates.empty()) throw ArgumentError("pick_outsider: no active vehicles");
    std::optional<OutsiderAssignment> fallback;
    for (std::size_t c : candidates) {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < states.size(); ++i)
            if (active[i] && i != c) rest.push_back(i);
        if (rest.size() < 2) continue;
        try {
            auto a = evaluate_outsider(c, rest, states, goals, tables, p, cfg);
            a.candidates = candidates;
            if (a.guarantee != Guarantee::unguaranteed) return a;
            if (!fallback) fallback = std::move(a);
        } catch (const ProtocolError&) {
            continue;
        }
    }
    if (fallback && fallback->outsider_index == candidates.front()) return std::move(*fallback);

    // first candidate, unguaranteed; reuse its evaluation when handle_n succeeded for it
    OutsiderAssignment a;
    a.outsider_index = candidates.front();
    a.candidates = candidates;
    for (std::size_t i = 0; i < states.size(); ++i)
        if (active[i] && i != a.outsider_index) a.handled.push_back(i);
    std::vector<DubinsState> hs;
    for (std::size_t i : a.handled) hs.push_back(states[i]);
    if (hs.empty()) hs.push_back(states[a.outsider_index]);
    a.n_result = continue_course(hs, p, cfg.dt);
    a.Tr = a.n_result.Tr;
    a.guarantee = Guarantee::unguaranteed;
    return a;
}

/// Vehicles j whose pullback PCS contains the outsider at assignment time t.
inline std::vector<std::size_t> outsider_conflicts(const OutsiderAssignment& a, const DubinsState& xo, double t,
                                                   const PairwiseTables& tables, double* best_value = nullptr,
                                                   std::size_t* best_index = nullptr) {
    std::vector<std::size_t> in;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < a.trajectories().size(); ++k) {
        const auto m = pcs_membership(tables, xo, a.trajectories()[k].at(t));
        if (m.member) {
            in.push_back(k);
            if (m.value < best) {
                best = m.value;
                if (best_index) *best_index = k;
            }
        }
    }
    if (best_value) *best_value = best;
    return in;
}

/// Outsider control at assignment-relative time t in [0, Tr].
inline Control outsider_control(const OutsiderAssignment& a, const DubinsState& xo, double t,
                                const PairwiseTables& tables, const Goal& goal, const DubinsParams& p) {
    if (t < -1e-9 || t > a.Tr + 1e-9) throw ArgumentError("outsider_control: t outside [0, Tr]");
    std::size_t nearest = 0;
    const auto in = outsider_conflicts(a, xo, t, tables, nullptr, &nearest);
    auto against = [&](std::size_t k) { return pairwise_avoid_control(tables, xo, a.trajectories()[k].at(t)); };

    if (a.guarantee == Guarantee::brs_minus_clear && a.sets && a.sets->brs_minus) {
        if (in.size() == 1) return against(in.front());
        const Grid& g = a.sets->brs_minus->grid();
        if (g.in_bounds(0, xo.px) && g.in_bounds(1, xo.py)) {
            const auto& frame = a.sets->brs_minus->frame_at_or_after(t);
            const Point q{xo.px, xo.py, xo.theta, 0.0};
            const double delta = 0.5 * cell_slack(g);
            if (interpolate(frame, q) <= delta) {
                const Point gr = gradient(frame, q);
                return opt_control_free(xo, Vec3{gr[0], gr[1], gr[2]}, p);
            }
        }
        if (!in.empty()) return against(nearest);
        return goal_controller(xo, goal, p);
    }
    if (in.empty()) return goal_controller(xo, goal, p);
    if (in.size() == 1) return against(in.front());
    return against(nearest);
}

/// Ordered pairs (i, j) of active vehicles whose relative state lies in the buffer set.
inline std::vector<std::pair<std::size_t, std::size_t>> buffer_monitor(const std::vector<DubinsState>& states,
                                                                       const PairwiseTables& tables,
                                                                       const std::vector<bool>& active = {}) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = 0; j < states.size(); ++j) {
            if (i == j) continue;
            if (!active.empty() && (!active[i] || !active[j])) continue;
            if (in_buffer(tables, states[i], states[j])) out.push_back({i, j});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Event log

struct Event {
    double time = 0.0;
    std::string type;  ///< stage | conflict_edge | outsider_claim | buffer_hit | removal
    nlohmann::ordered_json payload;
};

/// One JSON object per line: {"time": t, "type": ..., "payload": {...}}.
inline void write_event_log(std::ostream& os, const std::vector<Event>& events) {
    for (const auto& e : events) {
        nlohmann::ordered_json j;
        j["time"] = e.time;
        j["type"] = e.type;
        j["payload"] = e.payload;
        os << j.dump() << '\n';
    }
}

inline std::vector<Event> read_event_log(std::istream& is) {
    std::vector<Event> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::ordered_json::parse(line);
        out.push_back({j.at("time").get<double>(), j.at("type").get<std::string>(), j.at("payload")});
    }
    return out;
}

}  // namespace reachguard
