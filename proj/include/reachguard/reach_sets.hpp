#pragma once

// Pairwise conflict tables, outsider unsafe region (OUR), outsider FRS and
// the minimal backward reachable set from OUR.

#include "reachguard/dynamics.hpp"
#include "reachguard/errors.hpp"
#include "reachguard/grid.hpp"
#include "reachguard/hj_solver.hpp"
#include "reachguard/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace reachguard {

/// Stored stand-in for "+infinity" (value functions must stay finite).
inline constexpr double kFarValue = 1.0e6;

/// One interpolated cell of slack in value units (largest spatial spacing).
inline double cell_slack(const Grid& g) { return g.max_spacing_nonperiodic(); }

inline Grid make_pose_grid(double xmin, double xmax, double ymin, double ymax, std::size_t nxy_x, std::size_t nxy_y,
                           std::size_t ntheta) {
    return Grid({{xmin, xmax, nxy_x, false}, {ymin, ymax, nxy_y, false},
                 {-std::numbers::pi, std::numbers::pi, ntheta, true}});
}

namespace detail {

inline void check_pose_grid(const Grid& g, const char* who) {
    if (g.dims() != 3 || g.periodic(0) || g.periodic(1) || !g.periodic(2))
        throw ArgumentError(std::string(who) + ": expected an (x, y, periodic theta) grid");
}

struct TrigTable {
    std::vector<double> c;
    std::vector<double> s;

    explicit TrigTable(const Grid& g, std::size_t dim = 2) {
        for (double th : g.coordinates(dim)) {
            c.push_back(std::cos(th));
            s.push_back(std::sin(th));
        }
    }
};

inline double abs_extent(const Axis& a) { return std::max(std::abs(a.min), std::abs(a.max)); }

}  // namespace detail

/// Relative-frame Hamiltonian: pairwise avoid (max-min) or cooperative exit (min-min).
class PairwiseHamiltonian {
public:
    enum class Game { avoid, exit };

    PairwiseHamiltonian(const Grid& g, DubinsParams p, Game game) : p_(p), game_(game), trig_(g) {
        detail::check_pose_grid(g, "pairwise hamiltonian");
    }

    std::vector<double> alpha(const Grid& g) const {
        return {2.0 * p_.speed + p_.max_turn * detail::abs_extent(g.axis(1)),
                p_.speed + p_.max_turn * detail::abs_extent(g.axis(0)), 2.0 * p_.max_turn};
    }

    Point local_alpha(const NodeRef& n) const {
        const std::size_t k = n.index[2];
        return {p_.speed * std::abs(trig_.c[k] - 1.0) + p_.max_turn * std::abs(n.x[1]),
                p_.speed * std::abs(trig_.s[k]) + p_.max_turn * std::abs(n.x[0]), 2.0 * p_.max_turn, 0.0};
    }

    auto at(double) const {
        return [this](const NodeRef& n, const Point& lam) {
            const std::size_t k = n.index[2];
            const double drift = p_.speed * (lam[0] * (trig_.c[k] - 1.0) + lam[1] * trig_.s[k]);
            const double sw = std::abs(lam[0] * n.x[1] - lam[1] * n.x[0] - lam[2]);
            const double turn = game_ == Game::avoid ? sw : -sw;
            return drift + p_.max_turn * (turn - std::abs(lam[2]));
        };
    }

private:
    DubinsParams p_;
    Game game_;
    detail::TrigTable trig_;
};

/// Single-vehicle Dubins Hamiltonian with the maximising turn rate.
class DubinsMaxHamiltonian {
public:
    DubinsMaxHamiltonian(const Grid& g, DubinsParams p) : p_(p), trig_(g) {
        detail::check_pose_grid(g, "dubins hamiltonian");
    }

    std::vector<double> alpha(const Grid&) const { return {p_.speed, p_.speed, p_.max_turn}; }

    Point local_alpha(const NodeRef& n) const {
        const std::size_t k = n.index[2];
        return {p_.speed * std::abs(trig_.c[k]), p_.speed * std::abs(trig_.s[k]), p_.max_turn, 0.0};
    }

    auto at(double) const {
        return [this](const NodeRef& n, const Point& lam) {
            const std::size_t k = n.index[2];
            return p_.speed * (lam[0] * trig_.c[k] + lam[1] * trig_.s[k]) + p_.max_turn * std::abs(lam[2]);
        };
    }

private:
    DubinsParams p_;
    detail::TrigTable trig_;
};

// ---------------------------------------------------------------------------
// Pairwise tables

struct PairwiseTables {
    ValueFunction v_pc;    ///< converged pairwise avoid value (relative grid)
    ValueFunction v_exit;  ///< Te-buffer set value
    double K = 2.0;
    double Te = 2.0;
    double Rc = 3.0;
    DubinsParams params;
};

struct PairwiseDiagnostics {
    std::size_t exit_steps = 0;
    ConvergedBrs pc;  ///< value moved into PairwiseTables; flags kept here
};

inline PairwiseTables compute_pairwise_tables(const Grid& grid_rel, DubinsParams params, double Rc, double Te,
                                              double K, const SolveConfig& cfg, PairwiseDiagnostics* diag = nullptr) {
    params.validate();
    detail::check_pose_grid(grid_rel, "compute_pairwise_tables");
    if (!(Rc > 0.0) || !(Te > 0.0) || !(K > 0.0))
        throw ArgumentError("compute_pairwise_tables: Rc, Te and K must be positive");
    const auto danger = make_signed_distance_disk(grid_rel, {0.0, 0.0}, Rc);

    SolveConfig exit_cfg = cfg;
    exit_cfg.output_times = {0.0};
    const PairwiseHamiltonian exit_ham(grid_rel, params, PairwiseHamiltonian::Game::exit);
    auto exit_frames = solve_brs_time_varying(grid_rel, TimeIndexedValueFunction({0.0}, {danger}), exit_ham, 0.0,
                                              Te, exit_cfg);
    ValueFunction v_exit = exit_frames.frame(0);

    const PairwiseHamiltonian avoid_ham(grid_rel, params, PairwiseHamiltonian::Game::avoid);
    auto pc = solve_brs_to_convergence(grid_rel, v_exit, avoid_ham, cfg);

    PairwiseTables t{pc.value, std::move(v_exit), K, Te, Rc, params};
    if (diag) {
        diag->exit_steps = exit_frames.frame_count();
        diag->pc = std::move(pc);
    }
    return t;
}

struct PcsResult {
    bool member = false;
    double value = std::numeric_limits<double>::infinity();
};

/// Value of v_pc at the relative state of (xi, xj); +inf when off the grid.
inline double pcs_value(const PairwiseTables& t, const RelativeState& r) {
    const Grid& g = t.v_pc.grid();
    if (!g.in_bounds(0, r.x) || !g.in_bounds(1, r.y)) return std::numeric_limits<double>::infinity();
    const Point q{r.x, r.y, r.theta, 0.0};
    return interpolate(t.v_pc, q);
}

/// Closed sublevel test v_pc <= K in the space of xi.
inline PcsResult pcs_membership(const PairwiseTables& t, const DubinsState& xi, const DubinsState& xj) {
    const double v = pcs_value(t, relative_state_of(xi, xj));
    return {v <= t.K, v};
}

inline bool in_buffer(const PairwiseTables& t, const DubinsState& xi, const DubinsState& xj) {
    const auto r = relative_state_of(xi, xj);
    const Grid& g = t.v_exit.grid();
    if (!g.in_bounds(0, r.x) || !g.in_bounds(1, r.y)) return false;
    return interpolate(t.v_exit, Point{r.x, r.y, r.theta, 0.0}) <= 0.0;
}

/// Avoid control for vehicle i against j from the converged pairwise table.
inline Control pairwise_avoid_control(const PairwiseTables& t, const DubinsState& xi, const DubinsState& xj) {
    const auto r = relative_state_of(xi, xj);
    const Point q{r.x, r.y, r.theta, 0.0};
    const Point g = gradient(t.v_pc, q);
    return opt_control_pc(r, Vec3{g[0], g[1], g[2]}, t.params);
}

// ---------------------------------------------------------------------------
// Trajectories and OUR

struct Trajectory {
    std::vector<double> times;
    std::vector<DubinsState> states;

    /// Sample at or just before t (clamped to the ends).
    const DubinsState& at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t + 1e-9);
        if (it == times.begin()) return states.front();
        return states[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

/// Sample indices 0, k, 2k, ... plus the last sample.
inline std::vector<std::size_t> frame_samples(std::size_t sample_count, std::size_t stride) {
    std::vector<std::size_t> idx;
    if (sample_count == 0) return idx;
    stride = std::max<std::size_t>(stride, 1);
    for (std::size_t i = 0; i < sample_count; i += stride) idx.push_back(i);
    if (idx.back() != sample_count - 1) idx.push_back(sample_count - 1);
    return idx;
}

namespace detail {

inline void check_trajectories(const std::vector<Trajectory>& trajs) {
    if (trajs.size() < 2) throw ArgumentError("need at least two trajectories");
    for (const auto& tr : trajs) {
        if (tr.times.size() != tr.states.size() || tr.times.empty())
            throw ArgumentError("trajectory: times/states length mismatch");
        if (tr.times != trajs.front().times) throw ArgumentError("trajectories sampled on different time lists");
    }
}

/// Per-vehicle membership margin v_pc - K for the outsider pose (px, py, c, s, th).
inline double membership_margin(const PairwiseTables& t, double px, double py, double c, double s, double th,
                                const DubinsState& xj) {
    const double dx = xj.px - px;
    const double dy = xj.py - py;
    const RelativeState r{c * dx + s * dy, -s * dx + c * dy, wrap_angle(xj.theta - th)};
    const double v = pcs_value(t, r);
    return std::isfinite(v) ? v - t.K : kFarValue;
}

}  // namespace detail

/// OUR frame at one instant: union over unordered pairs of intersected
/// pullback PCS sets, i.e. the second-smallest per-vehicle margin.
inline ValueFunction compute_our_frame(const PairwiseTables& tables, const std::vector<DubinsState>& vehicles,
                                       const Grid& outsider_grid) {
    detail::check_pose_grid(outsider_grid, "compute_our");
    const detail::TrigTable trig(outsider_grid);
    std::vector<double> data(outsider_grid.size());
    parallel_chunks(data.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t n = b; n < e; ++n) {
            const auto m = outsider_grid.unravel(n);
            const double px = outsider_grid.coordinate(0, m[0]);
            const double py = outsider_grid.coordinate(1, m[1]);
            const double th = outsider_grid.coordinate(2, m[2]);
            double lo1 = kFarValue;
            double lo2 = kFarValue;
            for (const auto& xj : vehicles) {
                const double v = detail::membership_margin(tables, px, py, trig.c[m[2]], trig.s[m[2]], th, xj);
                if (v < lo1) {
                    lo2 = lo1;
                    lo1 = v;
                } else if (v < lo2) {
                    lo2 = v;
                }
            }
            data[n] = lo2;
        }
    });
    return ValueFunction(outsider_grid, std::move(data));
}

/// OUR over the trajectories' time list, one frame every `stride` samples.
inline TimeIndexedValueFunction compute_our(const PairwiseTables& tables, const std::vector<Trajectory>& trajectories,
                                            const Grid& outsider_grid, std::size_t stride = 5) {
    detail::check_trajectories(trajectories);
    const auto& times = trajectories.front().times;
    std::vector<double> ft;
    std::vector<ValueFunction> frames;
    for (std::size_t i : frame_samples(times.size(), stride)) {
        std::vector<DubinsState> at;
        for (const auto& tr : trajectories) at.push_back(tr.states[i]);
        ft.push_back(times[i]);
        frames.push_back(compute_our_frame(tables, at, outsider_grid));
    }
    return TimeIndexedValueFunction(std::move(ft), std::move(frames));
}

// ---------------------------------------------------------------------------
// Outsider FRS

/// FRS table computed once from the origin pose; queries for any seed pose
/// inverse-map the query into the seed's frame.
struct OriginFrs {
    TimeIndexedValueFunction table;

    double horizon() const { return table.times().back(); }

    /// Frame nearest to t.
    const ValueFunction& frame_near(double t) const {
        const auto& ts = table.times();
        auto it = std::lower_bound(ts.begin(), ts.end(), t);
        if (it == ts.end()) return table.back();
        if (it == ts.begin()) return table.frame(0);
        const auto hi = static_cast<std::size_t>(it - ts.begin());
        return (ts[hi] - t) < (t - ts[hi - 1]) ? table.frame(hi) : table.frame(hi - 1);
    }

    /// FRS value at pose x for a vehicle that started at `seed`. Past the
    /// horizon the FRS is unknown and reported as everywhere reachable.
    double value(double t, const DubinsState& seed, const DubinsState& x) const {
        if (t > horizon() + 1e-9) return -kFarValue;
        const auto q = relative_state_of(seed, x);
        const Grid& g = table.grid();
        if (!g.in_bounds(0, q.x) || !g.in_bounds(1, q.y)) return kFarValue;
        return interpolate(frame_near(t), Point{q.x, q.y, q.theta, 0.0});
    }

    /// Resamples the seed-transformed FRS onto `grid` at the given times.
    TimeIndexedValueFunction resample(const DubinsState& seed, const Grid& grid,
                                      const std::vector<double>& times) const {
        std::vector<ValueFunction> frames;
        for (double t : times) {
            std::vector<double> data(grid.size());
            parallel_chunks(data.size(), [&](std::size_t b, std::size_t e) {
                for (std::size_t n = b; n < e; ++n) {
                    const Point p = grid.node_point(n);
                    data[n] = value(t, seed, {p[0], p[1], p[2]});
                }
            });
            frames.emplace_back(grid, std::move(data));
        }
        return TimeIndexedValueFunction(times, std::move(frames));
    }
};

/// Seed of the origin FRS: planar disk of radius 1.5 dx about the origin,
/// all headings.
inline ValueFunction make_pose_seed(const Grid& g) {
    detail::check_pose_grid(g, "pose seed");
    return make_signed_distance_disk(g, {0.0, 0.0}, 1.5 * std::max(g.spacing(0), g.spacing(1)));
}

/// Origin-pose FRS over [0, horizon], frames every `frame_interval` seconds.
/// Each frame holds every pose reachable at some time up to the frame time.
inline OriginFrs compute_frs_origin(const Grid& grid_abs, DubinsParams params, double horizon,
                                    const SolveConfig& cfg, double frame_interval = 0.25) {
    params.validate();
    if (!(horizon > 0.0)) throw ArgumentError("compute_frs_origin: horizon must be positive");
    SolveConfig c = cfg;
    c.output_times.clear();
    for (double t = frame_interval; t < horizon - 1e-9; t += frame_interval) c.output_times.push_back(t);
    const DubinsMaxHamiltonian ham(grid_abs, params);
    return {solve_frs(grid_abs, make_pose_seed(grid_abs), ham, 0.0, horizon, c, FrsMode::tube)};
}

/// FRS of a vehicle seeded at `seed`, expressed on `grid` at `times`.
inline TimeIndexedValueFunction compute_frs_outsider(const OriginFrs& origin, const DubinsState& seed,
                                                     const Grid& grid, const std::vector<double>& times) {
    return origin.resample(seed, grid, times);
}

/// Earliest time (over the union of both time lists, most-recent frames)
/// at which the FRS and OUR share a node with max(frs, our) <= 0.
inline std::optional<double> frs_intersects_our(const TimeIndexedValueFunction& frs,
                                                const TimeIndexedValueFunction& our) {
    if (!(frs.grid() == our.grid())) throw ArgumentError("frs_intersects_our: grid mismatch");
    std::vector<double> ts = frs.times();
    ts.insert(ts.end(), our.times().begin(), our.times().end());
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    for (double t : ts) {
        const auto& a = frs.frame_at_or_before(t);
        const auto& b = our.frame_at_or_before(t);
        for (std::size_t n = 0; n < a.size(); ++n)
            if (std::max(a[n], b[n]) <= 0.0) return t;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Minimal BRS from OUR

/// Per-node control mode of the outsider at one instant: 0 = free (maximising),
/// +1/-1 = turn rate fixed to +/- max_turn by the single-conflict avoid law.
inline std::vector<std::int8_t> outsider_modes(const PairwiseTables& tables,
                                               const std::vector<DubinsState>& vehicles, const Grid& grid) {
    const detail::TrigTable trig(grid);
    std::vector<std::int8_t> mode(grid.size(), 0);
    parallel_chunks(grid.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t n = b; n < e; ++n) {
            const auto m = grid.unravel(n);
            const DubinsState xo{grid.coordinate(0, m[0]), grid.coordinate(1, m[1]), grid.coordinate(2, m[2])};
            int count = 0;
            std::size_t which = 0;
            for (std::size_t j = 0; j < vehicles.size(); ++j) {
                const double v = detail::membership_margin(tables, xo.px, xo.py, trig.c[m[2]], trig.s[m[2]],
                                                           xo.theta, vehicles[j]);
                if (v <= 0.0) {
                    ++count;
                    which = j;
                }
            }
            if (count == 1) {
                const Control u = pairwise_avoid_control(tables, xo, vehicles[which]);
                mode[n] = u.omega >= 0.0 ? 1 : -1;
            }
        }
    });
    return mode;
}

/// Backward Hamiltonian of the outsider: fixed avoid control inside exactly
/// one pullback PCS, maximising control elsewhere. Modes change piecewise
/// constantly at the mode frame times (earliest frame at or after t).
class OutsiderMinusHamiltonian {
public:
    OutsiderMinusHamiltonian(const Grid& g, DubinsParams p, std::vector<double> times,
                             std::vector<std::vector<std::int8_t>> modes)
        : p_(p), trig_(g), times_(std::move(times)), modes_(std::move(modes)) {}

    std::vector<double> alpha(const Grid&) const { return {p_.speed, p_.speed, p_.max_turn}; }

    Point local_alpha(const NodeRef& n) const {
        const std::size_t k = n.index[2];
        return {p_.speed * std::abs(trig_.c[k]), p_.speed * std::abs(trig_.s[k]), p_.max_turn, 0.0};
    }

    auto at(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
        const std::size_t f = it == times_.end() ? times_.size() - 1 : static_cast<std::size_t>(it - times_.begin());
        const std::int8_t* mode = modes_[f].data();
        return [this, mode](const NodeRef& n, const Point& lam) {
            const std::size_t k = n.index[2];
            const double drift = p_.speed * (lam[0] * trig_.c[k] + lam[1] * trig_.s[k]);
            const std::int8_t m = mode[n.flat];
            if (m == 0) return drift + p_.max_turn * std::abs(lam[2]);
            return drift + lam[2] * p_.max_turn * static_cast<double>(m);
        };
    }

private:
    DubinsParams p_;
    detail::TrigTable trig_;
    std::vector<double> times_;
    std::vector<std::vector<std::int8_t>> modes_;
};

/// Minimal BRS from OUR over [0, Tr], frames on OUR's time list.
inline TimeIndexedValueFunction compute_brs_minus(const TimeIndexedValueFunction& our,
                                                  const std::vector<Trajectory>& trajectories,
                                                  const PairwiseTables& tables, DubinsParams params, double Tr,
                                                  const SolveConfig& cfg) {
    detail::check_trajectories(trajectories);
    if (!(Tr > 0.0)) throw ArgumentError("compute_brs_minus: Tr must be positive");
    if (our.times().front() > 1e-9 || our.times().back() < Tr - 1e-9)
        throw ArgumentError("compute_brs_minus: OUR does not cover [0, Tr]");
    std::vector<std::vector<std::int8_t>> modes;
    for (double t : our.times()) {
        std::vector<DubinsState> at;
        for (const auto& tr : trajectories) at.push_back(tr.at(t));
        modes.push_back(outsider_modes(tables, at, our.grid()));
    }
    const OutsiderMinusHamiltonian ham(our.grid(), params, our.times(), std::move(modes));
    SolveConfig c = cfg;
    c.output_times = our.times();
    return solve_brs_time_varying(our.grid(), our, ham, 0.0, Tr, c);
}

struct OutsiderSets {
    TimeIndexedValueFunction our;
    std::optional<TimeIndexedValueFunction> brs_minus;
    TimeIndexedValueFunction frs;
    double Tr = 0.0;
};

}  // namespace reachguard
