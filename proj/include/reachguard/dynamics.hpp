#pragma once

// Dubins vehicle and pairwise relative dynamics, their closed-form
// Hamiltonians for each reachability problem, and optimal-control rules.
//
// Relative state convention: position of vehicle j expressed in the body
// frame of vehicle i, heading difference theta = thj - thi. Under this map
//   x' = -v + v cos(theta) + wi y
//   y' =  v sin(theta) - wi x
//   theta' = wj - wi
// which is what forward-integrating both vehicles produces.

#include "reachguard/errors.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace reachguard {

using Vec3 = std::array<double, 3>;

struct DubinsParams {
    double speed = 1.0;     ///< v
    double max_turn = 1.0;  ///< omega bar

    void validate() const {
        if (!(speed > 0.0) || !(max_turn > 0.0)) throw ArgumentError("dubins params: speed and max_turn must be > 0");
    }

    friend bool operator==(const DubinsParams&, const DubinsParams&) = default;
};

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    w -= std::numbers::pi;
    if (w >= std::numbers::pi) w -= two_pi;
    return w;
}

struct DubinsState {
    double px = 0.0;
    double py = 0.0;
    double theta = 0.0;

    Vec3 as_array() const { return {px, py, theta}; }
    friend bool operator==(const DubinsState&, const DubinsState&) = default;
};

struct RelativeState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Vec3 as_array() const { return {x, y, theta}; }
};

struct Control {
    double omega = 0.0;
};

/// sign with sign(0) = +1.
inline double sign_nonneg(double s) { return s >= 0.0 ? 1.0 : -1.0; }

inline void check_control(const Control& u, const DubinsParams& p) {
    if (!(std::abs(u.omega) <= p.max_turn * (1.0 + 1e-12)))
        throw ArgumentError("control |omega| = " + std::to_string(std::abs(u.omega)) + " exceeds max_turn");
}

inline Vec3 dubins_flow(const DubinsState& s, Control u, const DubinsParams& p) {
    check_control(u, p);
    return {p.speed * std::cos(s.theta), p.speed * std::sin(s.theta), u.omega};
}

inline Vec3 relative_flow(const RelativeState& r, Control ui, Control uj, const DubinsParams& p) {
    check_control(ui, p);
    check_control(uj, p);
    return {-p.speed + p.speed * std::cos(r.theta) + ui.omega * r.y,
            p.speed * std::sin(r.theta) - ui.omega * r.x,
            uj.omega - ui.omega};
}

/// Coefficient multiplying wi in costate . relative_flow.
inline double pc_switching(const Vec3& r, const Vec3& lambda) {
    return lambda[0] * r[1] - lambda[1] * r[0] - lambda[2];
}

inline double relative_drift(const Vec3& r, const Vec3& lambda, const DubinsParams& p) {
    return p.speed * (lambda[0] * (std::cos(r[2]) - 1.0) + lambda[1] * std::sin(r[2]));
}

/// max over wi, min over wj of lambda . relative_flow (vehicle i avoids, j pursues).
inline double ham_pc(const Vec3& r, const Vec3& lambda, const DubinsParams& p) {
    return relative_drift(r, lambda, p) + p.max_turn * std::abs(pc_switching(r, lambda)) -
           p.max_turn * std::abs(lambda[2]);
}

inline double ham_pc(const RelativeState& r, const Vec3& lambda, const DubinsParams& p) {
    return ham_pc(r.as_array(), lambda, p);
}

/// min over both controls: the two vehicles cooperate to reach the danger zone.
inline double ham_exit(const Vec3& r, const Vec3& lambda, const DubinsParams& p) {
    return relative_drift(r, lambda, p) - p.max_turn * std::abs(pc_switching(r, lambda)) -
           p.max_turn * std::abs(lambda[2]);
}

inline double ham_exit(const RelativeState& r, const Vec3& lambda, const DubinsParams& p) {
    return ham_exit(r.as_array(), lambda, p);
}

/// max over w of lambda . dubins_flow; used by the maximal FRS.
inline double ham_frs_dubins(double theta, const Vec3& lambda, const DubinsParams& p) {
    return p.speed * (lambda[0] * std::cos(theta) + lambda[1] * std::sin(theta)) + p.max_turn * std::abs(lambda[2]);
}

inline double ham_frs_dubins(const DubinsState& s, const Vec3& lambda, const DubinsParams& p) {
    return ham_frs_dubins(s.theta, lambda, p);
}

/// Free-control branch of the outsider's backward Hamiltonian; same maximisation as the FRS.
inline double ham_free_dubins(const DubinsState& s, const Vec3& lambda, const DubinsParams& p) {
    return ham_frs_dubins(s.theta, lambda, p);
}

inline Control opt_control_pc(const Vec3& r, const Vec3& grad, const DubinsParams& p) {
    return {p.max_turn * sign_nonneg(pc_switching(r, grad))};
}

inline Control opt_control_pc(const RelativeState& r, const Vec3& grad, const DubinsParams& p) {
    return opt_control_pc(r.as_array(), grad, p);
}

/// The pursuer's minimising reply in the pairwise game (used by tests and oracles).
inline Control worst_control_pc(const Vec3& grad, const DubinsParams& p) {
    return {-p.max_turn * sign_nonneg(grad[2])};
}

inline Control opt_control_free(const Vec3& grad, const DubinsParams& p) {
    return {p.max_turn * sign_nonneg(grad[2])};
}

inline Control opt_control_free(const DubinsState&, const Vec3& grad, const DubinsParams& p) {
    return opt_control_free(grad, p);
}

/// Position of j in the body frame of i, and heading of j relative to i.
inline RelativeState relative_state_of(const DubinsState& xi, const DubinsState& xj) {
    const double dx = xj.px - xi.px;
    const double dy = xj.py - xi.py;
    const double c = std::cos(xi.theta);
    const double s = std::sin(xi.theta);
    return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(xj.theta - xi.theta)};
}

/// One explicit-midpoint step under a held control.
inline DubinsState midpoint_step(const DubinsState& s, Control u, const DubinsParams& p, double dt) {
    const Vec3 k1 = dubins_flow(s, u, p);
    const DubinsState mid{s.px + 0.5 * dt * k1[0], s.py + 0.5 * dt * k1[1], s.theta + 0.5 * dt * k1[2]};
    const Vec3 k2 = dubins_flow(mid, u, p);
    return {s.px + dt * k2[0], s.py + dt * k2[1], wrap_angle(s.theta + dt * k2[2])};
}

inline double planar_distance(const DubinsState& a, const DubinsState& b) {
    return std::hypot(a.px - b.px, a.py - b.py);
}

}  // namespace reachguard
