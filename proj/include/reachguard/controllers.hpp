#pragma once

// Goal-seeking and reference-tracking controllers shared by the hybrid
// automaton and the simulator.

#include "reachguard/dynamics.hpp"
#include "reachguard/errors.hpp"
#include "reachguard/reach_sets.hpp"

#include <algorithm>
#include <cmath>

namespace reachguard {

struct Goal {
    double x = 0.0;
    double y = 0.0;
    double radius = 1.0;  ///< capture radius
};

inline constexpr double kHeadingGain = 2.0;

inline bool goal_reached(const DubinsState& s, const Goal& g) { return std::hypot(g.x - s.px, g.y - s.py) <= g.radius; }

/// Proportional heading controller toward the goal, saturated at max_turn.
inline Control goal_controller(const DubinsState& s, const Goal& goal, const DubinsParams& p) {
    const double bearing = std::atan2(goal.y - s.py, goal.x - s.px);
    const double err = wrap_angle(bearing - s.theta);
    return {std::clamp(kHeadingGain * err, -p.max_turn, p.max_turn)};
}

/// Reference pose at time t, linear in time between samples (heading along the shorter arc).
inline DubinsState reference_at(const Trajectory& ref, double t) {
    const auto& ts = ref.times;
    if (t <= ts.front()) return ref.states.front();
    if (t >= ts.back()) return ref.states.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
    const std::size_t lo = hi - 1;
    const double f = (t - ts[lo]) / (ts[hi] - ts[lo]);
    const DubinsState& a = ref.states[lo];
    const DubinsState& b = ref.states[hi];
    return {a.px + f * (b.px - a.px), a.py + f * (b.py - a.py), wrap_angle(a.theta + f * wrap_angle(b.theta - a.theta))};
}

/// Pure pursuit on the reference point `lookahead` seconds ahead of t.
/// Positive omega turns left, so a vehicle left of its path gets omega < 0.
inline Control trajectory_tracker(const Trajectory& ref, const DubinsState& s, double t, const DubinsParams& p,
                                  double lookahead) {
    if (ref.times.empty()) throw ArgumentError("trajectory_tracker: empty reference");
    if (t < ref.times.front() - 1e-9 || t > ref.times.back() + 1e-9)
        throw ArgumentError("trajectory_tracker: t outside the reference span");
    const DubinsState target = reference_at(ref, t + lookahead);
    const double dx = target.px - s.px;
    const double dy = target.py - s.py;
    const double dist = std::hypot(dx, dy);
    if (dist < 1e-9) return {0.0};
    const double alpha = wrap_angle(std::atan2(dy, dx) - s.theta);
    return {std::clamp(2.0 * p.speed * std::sin(alpha) / dist, -p.max_turn, p.max_turn)};
}

}  // namespace reachguard
