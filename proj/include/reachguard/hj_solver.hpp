#pragma once

// Lax-Friedrichs / TVD-RK2 solvers for backward (BRS, with time-varying
// target freeze V <- min(V, l)) and forward (FRS) Hamilton-Jacobi PDEs.
//
// Marching convention. Backward solves step V(t - dt) = V(t) + dt * rate,
// forward solves step W(t + dt) = W(t) + dt * rate, with
//   backward rate = +H(x, p_avg, t) + sum_k alpha_k (D+_k - D-_k) / 2
//   forward  rate = -H(x, p_avg, t) + sum_k alpha_k (D+_k - D-_k) / 2
// The dissipation sign follows the marching direction so it is always
// diffusive.

#include "reachguard/errors.hpp"
#include "reachguard/grid.hpp"
#include "reachguard/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace reachguard {

enum class TimeDirection { backward, forward };

struct SolveConfig {
    double cfl = 0.5;
    double convergence_tol = 1e-3;  ///< max |dV|/dt, value units per second
    std::size_t max_steps = 200000;
    /// Overrides the Hamiltonian's own alpha bounds when non-empty.
    std::vector<double> dissipation_bounds;
    /// When non-empty, only frames at these times (plus both endpoints) are
    /// kept, and steps are shortened to land on them exactly.
    std::vector<double> output_times;

    void validate() const {
        if (!(cfl > 0.0 && cfl <= 1.0)) throw ArgumentError("solve config: cfl must be in (0, 1]");
        if (!(convergence_tol > 0.0)) throw ArgumentError("solve config: convergence_tol must be > 0");
        if (max_steps == 0) throw ArgumentError("solve config: max_steps must be > 0");
        for (double a : dissipation_bounds)
            if (!(a >= 0.0) || !std::isfinite(a)) throw ArgumentError("solve config: dissipation bounds must be >= 0");
    }
};

/// What a Hamiltonian sees at one node.
struct NodeRef {
    std::size_t flat;
    const std::array<std::size_t, kMaxDims>& index;
    const Point& x;
};

/// A Hamiltonian binds to a time, giving f(node, costate) -> H, and exposes
/// per-axis bounds alpha_k >= sup |dH/dp_k| over the grid box.
template <typename H>
concept Hamiltonian = requires(const H& h, const Grid& g, double t, const NodeRef& n, const Point& p) {
    { h.alpha(g) } -> std::convertible_to<std::vector<double>>;
    { h.at(t)(n, p) } -> std::convertible_to<double>;
};

/// Optional per-node bound alpha_k(x) >= sup_p |dH/dp_k| at that state; the
/// solver then uses local Lax-Friedrichs dissipation min(global, local).
template <typename H>
concept LocalAlpha = requires(const H& h, const NodeRef& n) {
    { h.local_alpha(n) } -> std::convertible_to<Point>;
};

/// Type-erased Hamiltonian over (state, costate, time).
struct HamiltonianSpec {
    std::function<double(const Point& x, const Point& p, double t)> evaluator;
    std::vector<double> alpha_bounds;

    std::vector<double> alpha(const Grid&) const { return alpha_bounds; }

    auto at(double t) const {
        return [this, t](const NodeRef& n, const Point& p) { return evaluator(n.x, p, t); };
    }
};

struct ZeroHamiltonian {
    std::vector<double> alpha(const Grid& g) const { return std::vector<double>(g.dims(), 0.0); }
    auto at(double) const {
        return [](const NodeRef&, const Point&) { return 0.0; };
    }
};

namespace detail {

inline std::array<double, kMaxDims> resolve_alpha(const Grid& g, const std::vector<double>& ham_alpha,
                                                  const SolveConfig& cfg) {
    const auto& src = cfg.dissipation_bounds.empty() ? ham_alpha : cfg.dissipation_bounds;
    if (src.size() != g.dims())
        throw ArgumentError("dissipation bounds: expected " + std::to_string(g.dims()) + " entries");
    std::array<double, kMaxDims> a{};
    for (std::size_t k = 0; k < g.dims(); ++k) {
        if (!(src[k] >= 0.0) || !std::isfinite(src[k])) throw ArgumentError("dissipation bounds must be finite and >= 0");
        a[k] = src[k];
    }
    return a;
}

inline double cfl_sum(const Grid& g, const std::array<double, kMaxDims>& alpha) {
    double s = 0.0;
    for (std::size_t k = 0; k < g.dims(); ++k) s += alpha[k] / g.spacing(k);
    return s;
}

/// Largest stable step; infinite when the Hamiltonian is motionless.
inline double cfl_dt(const Grid& g, const std::array<double, kMaxDims>& alpha, double cfl) {
    const double s = cfl_sum(g, alpha);
    return s > 0.0 ? cfl / s : std::numeric_limits<double>::infinity();
}

/// One-sided differences along axis k. Periodic axes wrap; non-periodic
/// edges use a ghost node extrapolated with the adjacent interior slope
/// magnitude, directed away from the zero level.
inline void one_sided(std::span<const double> v, std::size_t node, std::size_t i, std::size_t n, std::size_t st,
                      bool periodic, double h, double& dminus, double& dplus) {
    const double c = v[node];
    double lo;
    double hi;
    if (periodic) {
        lo = v[i == 0 ? node + (n - 1) * st : node - st];
        hi = v[i == n - 1 ? node - (n - 1) * st : node + st];
    } else {
        if (i == 0) {
            hi = v[node + st];
            lo = c + (c >= 0.0 ? 1.0 : -1.0) * std::abs(hi - c);
        } else if (i == n - 1) {
            lo = v[node - st];
            hi = c + (c >= 0.0 ? 1.0 : -1.0) * std::abs(c - lo);
        } else {
            lo = v[node - st];
            hi = v[node + st];
        }
    }
    dminus = (c - lo) / h;
    dplus = (hi - c) / h;
}

/// rate[n] such that the next value is v[n] + dt * rate[n].
template <typename H>
void lf_rate(const Grid& g, std::span<const double> v, const H& ham, double t, TimeDirection dir,
             const std::array<double, kMaxDims>& alpha, std::vector<double>& rate) {
    const auto ham_at = ham.at(t);
    const std::size_t dims = g.dims();
    std::array<std::vector<double>, kMaxDims> coords;
    for (std::size_t k = 0; k < dims; ++k) coords[k] = g.coordinates(k);
    const double hsign = dir == TimeDirection::backward ? 1.0 : -1.0;
    rate.resize(g.size());

    parallel_chunks(g.size(), [&](std::size_t begin, std::size_t end) {
        std::array<std::size_t, kMaxDims> idx = g.unravel(begin);
        Point x{};
        for (std::size_t n = begin; n < end; ++n) {
            Point pavg{};
            Point jump{};
            for (std::size_t k = 0; k < dims; ++k) {
                x[k] = coords[k][idx[k]];
                double dm;
                double dp;
                one_sided(v, n, idx[k], g.nodes(k), g.stride(k), g.periodic(k), g.spacing(k), dm, dp);
                pavg[k] = 0.5 * (dm + dp);
                jump[k] = 0.5 * (dp - dm);
            }
            const NodeRef ref{n, idx, x};
            double diss = 0.0;
            if constexpr (LocalAlpha<H>) {
                const Point la = ham.local_alpha(ref);
                for (std::size_t k = 0; k < dims; ++k) diss += std::min(alpha[k], la[k]) * jump[k];
            } else {
                for (std::size_t k = 0; k < dims; ++k) diss += alpha[k] * jump[k];
            }
            rate[n] = hsign * ham_at(ref, pavg) + diss;
            // advance the row-major multi-index
            for (std::size_t k = dims; k-- > 0;) {
                if (++idx[k] < g.nodes(k)) break;
                idx[k] = 0;
            }
        }
    });
}

inline void check_finite(std::span<const double> v, std::size_t step) {
    for (double d : v)
        if (!std::isfinite(d)) throw NumericFailure("non-finite value produced", step);
}

/// Applies V <- min(V, l) pointwise.
inline void freeze(std::vector<double>& v, std::span<const double> target) {
    for (std::size_t n = 0; n < v.size(); ++n) v[n] = std::min(v[n], target[n]);
}

/// TVD-RK2 (Heun) step from time t to t -/+ dt, freezing after each stage
/// when a target is given.
template <typename H>
std::vector<double> rk2_step(const Grid& g, const std::vector<double>& v, const H& ham, double t, double dt,
                             TimeDirection dir, const std::array<double, kMaxDims>& alpha,
                             std::span<const double> target, std::size_t step_index) {
    const double t_next = dir == TimeDirection::backward ? t - dt : t + dt;
    std::vector<double> rate;
    lf_rate(g, v, ham, t, dir, alpha, rate);
    std::vector<double> v1(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) v1[n] = v[n] + dt * rate[n];
    if (!target.empty()) freeze(v1, target);
    lf_rate(g, v1, ham, t_next, dir, alpha, rate);
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) out[n] = 0.5 * (v[n] + v1[n] + dt * rate[n]);
    if (!target.empty()) freeze(out, target);
    check_finite(out, step_index);
    return out;
}

inline bool wants_frame(const SolveConfig& cfg, double t) {
    if (cfg.output_times.empty()) return true;
    for (double o : cfg.output_times)
        if (std::abs(o - t) <= 1e-9) return true;
    return false;
}

}  // namespace detail

/// Single forward-Euler Lax-Friedrichs stage. Throws ArgumentError when dt
/// violates the CFL bound.
template <Hamiltonian H>
ValueFunction lax_friedrichs_step(const ValueFunction& v, const H& ham, double t, double dt, TimeDirection dir,
                                  const SolveConfig& cfg = {}) {
    cfg.validate();
    const Grid& g = v.grid();
    const auto alpha = detail::resolve_alpha(g, ham.alpha(g), cfg);
    if (!(dt > 0.0)) throw ArgumentError("lax_friedrichs_step: dt must be positive");
    if (dt * detail::cfl_sum(g, alpha) > cfg.cfl * (1.0 + 1e-12))
        throw ArgumentError("lax_friedrichs_step: dt violates the CFL bound");
    std::vector<double> rate;
    detail::lf_rate(g, v.data(), ham, t, dir, alpha, rate);
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = v[n] + dt * rate[n];
    detail::check_finite(out, 0);
    return ValueFunction(g, std::move(out));
}

/// Backward solve of min{D_t V + H, l - V} = 0 from V(t1) = l(t1) down to t0.
/// Target frames are looked up piecewise-constantly (earliest frame at or
/// after the query time). Returns frames in increasing time order.
template <Hamiltonian H>
TimeIndexedValueFunction solve_brs_time_varying(const Grid& grid, const TimeIndexedValueFunction& target,
                                                const H& ham, double t0, double t1, const SolveConfig& cfg = {}) {
    cfg.validate();
    if (!(t0 < t1)) throw ArgumentError("solve_brs_time_varying: requires t0 < t1");
    if (!(target.grid() == grid)) throw ArgumentError("solve_brs_time_varying: target on a different grid");
    if (target.frame_count() > 1 &&
        (target.times().front() > t0 + 1e-9 || target.times().back() < t1 - 1e-9))
        throw ArgumentError("solve_brs_time_varying: target frames do not cover [t0, t1]");
    const auto alpha = detail::resolve_alpha(grid, ham.alpha(grid), cfg);
    const double dt_max = detail::cfl_dt(grid, alpha, cfg.cfl);
    if (!(dt_max > 0.0)) throw NumericFailure("CFL step is not positive", 0);

    std::vector<double> stops = cfg.output_times;
    std::sort(stops.begin(), stops.end(), std::greater<>());

    std::vector<double> v(target.frame_at_or_after(t1).data().begin(), target.frame_at_or_after(t1).data().end());
    std::vector<double> times{t1};
    std::vector<ValueFunction> frames{ValueFunction(grid, v)};
    double t = t1;
    std::size_t step = 0;
    while (t > t0 + 1e-12) {
        if (++step > cfg.max_steps) throw NumericFailure("max_steps exceeded before reaching t0", step);
        double dt = std::min(dt_max, t - t0);
        for (double s : stops)
            if (s < t - 1e-12 && s > t0) {
                dt = std::min(dt, t - s);
                break;
            }
        if (!(dt > 0.0)) throw NumericFailure("non-positive time step", step);
        const double t_next = (t - dt <= t0 + 1e-12) ? t0 : t - dt;
        dt = t - t_next;
        const auto& l = target.frame_at_or_after(t_next);
        v = detail::rk2_step(grid, v, ham, t, dt, TimeDirection::backward, alpha, l.data(), step);
        t = t_next;
        if (t == t0 || detail::wants_frame(cfg, t)) {
            times.push_back(t);
            frames.emplace_back(grid, v);
        }
    }
    std::reverse(times.begin(), times.end());
    std::reverse(frames.begin(), frames.end());
    return TimeIndexedValueFunction(std::move(times), std::move(frames));
}

struct ConvergedBrs {
    ValueFunction value;
    bool converged = false;
    std::size_t steps = 0;
    double residual = 0.0;  ///< last max |dV| / dt
    double horizon = 0.0;   ///< total backward time integrated
};

/// Backward solve with a static target until max |dV|/dt < tol, or until
/// max_steps (then converged == false).
template <Hamiltonian H>
ConvergedBrs solve_brs_to_convergence(const Grid& grid, const ValueFunction& target, const H& ham,
                                      const SolveConfig& cfg = {}) {
    cfg.validate();
    if (!(target.grid() == grid)) throw ArgumentError("solve_brs_to_convergence: target on a different grid");
    const auto alpha = detail::resolve_alpha(grid, ham.alpha(grid), cfg);
    double dt = detail::cfl_dt(grid, alpha, cfg.cfl);
    if (!std::isfinite(dt)) dt = 1.0;
    if (!(dt > 0.0)) throw NumericFailure("CFL step is not positive", 0);

    std::vector<double> v(target.data().begin(), target.data().end());
    ConvergedBrs out;
    double t = 0.0;
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
        auto next = detail::rk2_step(grid, v, ham, t, dt, TimeDirection::backward, alpha, target.data(), step);
        double change = 0.0;
        for (std::size_t n = 0; n < v.size(); ++n) change = std::max(change, std::abs(next[n] - v[n]));
        v = std::move(next);
        t -= dt;
        out.steps = step;
        out.residual = change / dt;
        out.horizon = -t;
        if (out.residual < cfg.convergence_tol) {
            out.converged = true;
            break;
        }
    }
    out.value = ValueFunction(grid, std::move(v));
    return out;
}

/// exact_time: states reached at exactly t. tube: states reached at some
/// s in [t0, t] (each step is frozen against the previous value).
enum class FrsMode { exact_time, tube };

/// Forward solve of D_t W + H = 0 from W(t0) = initial.
template <Hamiltonian H>
TimeIndexedValueFunction solve_frs(const Grid& grid, const ValueFunction& initial, const H& ham, double t0,
                                   double t1, const SolveConfig& cfg = {}, FrsMode mode = FrsMode::exact_time) {
    cfg.validate();
    if (!(t0 < t1)) throw ArgumentError("solve_frs: requires t0 < t1");
    if (!(initial.grid() == grid)) throw ArgumentError("solve_frs: initial set on a different grid");
    const auto alpha = detail::resolve_alpha(grid, ham.alpha(grid), cfg);
    const double dt_max = detail::cfl_dt(grid, alpha, cfg.cfl);
    if (!(dt_max > 0.0)) throw NumericFailure("CFL step is not positive", 0);

    std::vector<double> stops = cfg.output_times;
    std::sort(stops.begin(), stops.end());

    std::vector<double> w(initial.data().begin(), initial.data().end());
    std::vector<double> times{t0};
    std::vector<ValueFunction> frames{initial};
    double t = t0;
    std::size_t step = 0;
    while (t < t1 - 1e-12) {
        if (++step > cfg.max_steps) throw NumericFailure("max_steps exceeded before reaching t1", step);
        double dt = std::min(dt_max, t1 - t);
        for (double s : stops)
            if (s > t + 1e-12 && s < t1) {
                dt = std::min(dt, s - t);
                break;
            }
        if (!(dt > 0.0)) throw NumericFailure("non-positive time step", step);
        const double t_next = (t + dt >= t1 - 1e-12) ? t1 : t + dt;
        dt = t_next - t;
        if (mode == FrsMode::tube) {
            const std::vector<double> prev = w;
            w = detail::rk2_step(grid, w, ham, t, dt, TimeDirection::forward, alpha, prev, step);
        } else {
            w = detail::rk2_step(grid, w, ham, t, dt, TimeDirection::forward, alpha, {}, step);
        }
        t = t_next;
        if (t == t1 || detail::wants_frame(cfg, t)) {
            times.push_back(t);
            frames.emplace_back(grid, w);
        }
    }
    return TimeIndexedValueFunction(std::move(times), std::move(frames));
}

}  // namespace reachguard
