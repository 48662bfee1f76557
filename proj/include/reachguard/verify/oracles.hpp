#pragma once

// Independent brute-force oracles. Nothing here calls the closed forms or
// solvers they are used to check.

#include "reachguard/dynamics.hpp"
#include "reachguard/grid.hpp"
#include "reachguard/reach_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace reachguard::oracle {

inline std::vector<double> control_grid(const DubinsParams& p, int points) {
    std::vector<double> w(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) w[static_cast<std::size_t>(i)] = -p.max_turn + 2.0 * p.max_turn * i / (points - 1);
    return w;
}

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// max over gridded wi of min over gridded wj of lambda . relative_flow.
inline double ham_pc(const RelativeState& r, const Vec3& lam, const DubinsParams& p, int points = 101) {
    const auto w = control_grid(p, points);
    double best = -std::numeric_limits<double>::infinity();
    for (double wi : w) {
        double worst = std::numeric_limits<double>::infinity();
        for (double wj : w) worst = std::min(worst, dot(lam, relative_flow(r, {wi}, {wj}, p)));
        best = std::max(best, worst);
    }
    return best;
}

inline double ham_exit(const RelativeState& r, const Vec3& lam, const DubinsParams& p, int points = 101) {
    const auto w = control_grid(p, points);
    double best = std::numeric_limits<double>::infinity();
    for (double wi : w)
        for (double wj : w) best = std::min(best, dot(lam, relative_flow(r, {wi}, {wj}, p)));
    return best;
}

inline double ham_frs(const DubinsState& s, const Vec3& lam, const DubinsParams& p, int points = 101) {
    double best = -std::numeric_limits<double>::infinity();
    for (double w : control_grid(p, points)) best = std::max(best, dot(lam, dubins_flow(s, {w}, p)));
    return best;
}

/// Classical RK4 on an autonomous right-hand side.
template <typename F>
Vec3 rk4(const Vec3& x, double dt, F&& f) {
    auto add = [](const Vec3& a, const Vec3& b, double h) { return Vec3{a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]}; };
    const Vec3 k1 = f(x);
    const Vec3 k2 = f(add(x, k1, dt / 2));
    const Vec3 k3 = f(add(x, k2, dt / 2));
    const Vec3 k4 = f(add(x, k3, dt));
    Vec3 out{};
    for (int i = 0; i < 3; ++i) out[i] = x[i] + dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return out;
}

/// Integrates two vehicles under fixed controls and, separately, the
/// relative ODE from the mapped initial state; returns the largest
/// discrepancy between mapped and integrated relative states.
inline double relative_frame_discrepancy(const DubinsState& xi0, const DubinsState& xj0, Control ui, Control uj,
                                         const DubinsParams& p, double horizon, double dt) {
    Vec3 a = xi0.as_array();
    Vec3 b = xj0.as_array();
    const auto r0 = relative_state_of(xi0, xj0);
    Vec3 r = r0.as_array();
    double worst = 0.0;
    const int steps = static_cast<int>(std::lround(horizon / dt));
    for (int s = 0; s < steps; ++s) {
        a = rk4(a, dt, [&](const Vec3& x) { return Vec3{p.speed * std::cos(x[2]), p.speed * std::sin(x[2]), ui.omega}; });
        b = rk4(b, dt, [&](const Vec3& x) { return Vec3{p.speed * std::cos(x[2]), p.speed * std::sin(x[2]), uj.omega}; });
        r = rk4(r, dt, [&](const Vec3& x) { return relative_flow({x[0], x[1], x[2]}, ui, uj, p); });
        const auto mapped = relative_state_of({a[0], a[1], a[2]}, {b[0], b[1], b[2]});
        worst = std::max({worst, std::abs(mapped.x - r[0]), std::abs(mapped.y - r[1]),
                          std::abs(wrap_angle(mapped.theta - r[2]))});
    }
    return worst;
}

/// OUR value at one pose by explicit enumeration of unordered pairs.
inline double our_value(const PairwiseTables& t, const DubinsState& xo, const std::vector<DubinsState>& vehicles) {
    const Grid& g = t.v_pc.grid();
    std::vector<double> margin;
    for (const auto& xj : vehicles) {
        const double dx = xj.px - xo.px;
        const double dy = xj.py - xo.py;
        const double rx = std::cos(xo.theta) * dx + std::sin(xo.theta) * dy;
        const double ry = -std::sin(xo.theta) * dx + std::cos(xo.theta) * dy;
        const bool inside = rx >= g.axis(0).min && rx <= g.axis(0).max && ry >= g.axis(1).min && ry <= g.axis(1).max;
        margin.push_back(inside ? interpolate(t.v_pc, Point{rx, ry, xj.theta - xo.theta, 0.0}) - t.K : kFarValue);
    }
    double best = kFarValue;
    for (std::size_t i = 0; i < margin.size(); ++i)
        for (std::size_t j = i + 1; j < margin.size(); ++j) best = std::min(best, std::max(margin[i], margin[j]));
    return best;
}

/// Exhaustive (time x node) scan for the first joint nonpositive node.
inline std::optional<double> first_intersection(const TimeIndexedValueFunction& a, const TimeIndexedValueFunction& b) {
    std::vector<double> ts = a.times();
    for (double t : b.times())
        if (std::find(ts.begin(), ts.end(), t) == ts.end()) ts.push_back(t);
    std::optional<double> first;
    for (double t : ts)
        for (std::size_t n = 0; n < a.grid().size(); ++n) {
            // most recent frame at or before t
            std::size_t fa = 0;
            std::size_t fb = 0;
            for (std::size_t f = 0; f < a.frame_count(); ++f)
                if (a.times()[f] <= t) fa = f;
            for (std::size_t f = 0; f < b.frame_count(); ++f)
                if (b.times()[f] <= t) fb = f;
            if (a.frame(fa)[n] <= 0.0 && b.frame(fb)[n] <= 0.0 && (!first || t < *first)) first = t;
        }
    return first;
}

/// Endpoint of a Dubins rollout under piecewise-constant random turn rates.
inline DubinsState random_rollout(const DubinsState& start, const DubinsParams& p, double horizon, double hold,
                                  std::mt19937& rng) {
    std::uniform_real_distribution<double> w(-p.max_turn, p.max_turn);
    Vec3 x = start.as_array();
    const double dt = 1e-3;
    const int steps = static_cast<int>(std::lround(horizon / dt));
    const int per = std::max(1, static_cast<int>(std::lround(hold / dt)));
    double omega = 0.0;
    for (int s = 0; s < steps; ++s) {
        if (s % per == 0) omega = w(rng);
        x = rk4(x, dt, [&](const Vec3& q) { return Vec3{p.speed * std::cos(q[2]), p.speed * std::sin(q[2]), omega}; });
    }
    return {x[0], x[1], wrap_angle(x[2])};
}

}  // namespace reachguard::oracle
