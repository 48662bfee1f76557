#pragma once

// Rectangular grids, implicit-surface value functions and their set algebra.
//
// A set is always represented by the sub-zero level set of a ValueFunction.
// Union and intersection are the pointwise min and max of node values.

#include "reachguard/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace reachguard {

inline constexpr std::size_t kMaxDims = 4;

using Point = std::array<double, kMaxDims>;

struct Axis {
    double min = 0.0;
    double max = 1.0;
    std::size_t nodes = 3;
    bool periodic = false;

    friend bool operator==(const Axis&, const Axis&) = default;
};

/// Uniform tensor-product grid. Periodic axes use node-count spacing: the
/// node at index `nodes` is identified with index 0 and is not stored.
class Grid {
public:
    Grid() = default;

    explicit Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
        if (axes_.empty() || axes_.size() > kMaxDims)
            throw ArgumentError("grid: dimension count must be in [1, " + std::to_string(kMaxDims) + "]");
        for (std::size_t k = 0; k < axes_.size(); ++k) {
            const Axis& a = axes_[k];
            if (!(a.min < a.max))
                throw ArgumentError("grid: axis " + std::to_string(k) + " requires min < max");
            if (a.nodes < 3)
                throw ArgumentError("grid: axis " + std::to_string(k) + " needs at least 3 nodes");
            dx_[k] = a.periodic ? (a.max - a.min) / static_cast<double>(a.nodes)
                                : (a.max - a.min) / static_cast<double>(a.nodes - 1);
        }
        std::size_t s = 1;
        for (std::size_t k = axes_.size(); k-- > 0;) {
            stride_[k] = s;
            s *= axes_[k].nodes;
        }
        size_ = s;
    }

    std::size_t dims() const noexcept { return axes_.size(); }
    std::size_t size() const noexcept { return size_; }
    const Axis& axis(std::size_t k) const { return axes_.at(k); }
    const std::vector<Axis>& axes() const noexcept { return axes_; }
    std::size_t nodes(std::size_t k) const { return axes_[k].nodes; }
    bool periodic(std::size_t k) const { return axes_[k].periodic; }
    double spacing(std::size_t k) const { return dx_[k]; }
    std::size_t stride(std::size_t k) const { return stride_[k]; }

    double coordinate(std::size_t k, std::size_t i) const {
        return axes_[k].min + static_cast<double>(i) * dx_[k];
    }

    std::vector<double> coordinates(std::size_t k) const {
        std::vector<double> c(axes_[k].nodes);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = coordinate(k, i);
        return c;
    }

    /// Row-major multi-index of a flat node index (last axis fastest).
    std::array<std::size_t, kMaxDims> unravel(std::size_t node) const {
        std::array<std::size_t, kMaxDims> m{};
        for (std::size_t k = 0; k < dims(); ++k) {
            m[k] = node / stride_[k];
            node %= stride_[k];
        }
        return m;
    }

    Point node_point(std::size_t node) const {
        const auto m = unravel(node);
        Point p{};
        for (std::size_t k = 0; k < dims(); ++k) p[k] = coordinate(k, m[k]);
        return p;
    }

    /// Smallest spatial spacing over non-periodic axes (falls back to all axes).
    double min_spacing() const {
        double best = 0.0;
        for (std::size_t k = 0; k < dims(); ++k)
            if (!axes_[k].periodic && (best == 0.0 || dx_[k] < best)) best = dx_[k];
        if (best == 0.0)
            for (std::size_t k = 0; k < dims(); ++k)
                if (best == 0.0 || dx_[k] < best) best = dx_[k];
        return best;
    }

    double max_spacing_nonperiodic() const {
        double best = 0.0;
        for (std::size_t k = 0; k < dims(); ++k)
            if (!axes_[k].periodic) best = std::max(best, dx_[k]);
        return best;
    }

    /// Lower node, upper node and fractional offset enclosing coordinate x on axis k.
    struct Bracket {
        std::size_t lo;
        std::size_t hi;
        double frac;
    };

    bool in_bounds(std::size_t k, double x) const {
        const Axis& a = axes_[k];
        if (a.periodic) return std::isfinite(x);
        const double tol = 1e-9 * (a.max - a.min);
        return x >= a.min - tol && x <= a.max + tol;
    }

    bool contains(std::span<const double> x) const {
        if (x.size() < dims()) return false;
        for (std::size_t k = 0; k < dims(); ++k)
            if (!in_bounds(k, x[k])) return false;
        return true;
    }

    Bracket bracket(std::size_t k, double x) const {
        const Axis& a = axes_[k];
        const std::size_t n = a.nodes;
        if (a.periodic) {
            if (!std::isfinite(x)) throw DomainError("grid: non-finite periodic coordinate");
            const double period = a.max - a.min;
            double u = std::fmod(x - a.min, period);
            if (u < 0.0) u += period;
            double s = u / dx_[k];
            auto lo = static_cast<std::size_t>(std::floor(s));
            if (lo >= n) lo = n - 1;
            double frac = s - static_cast<double>(lo);
            frac = std::clamp(frac, 0.0, 1.0);
            return {lo, (lo + 1) % n, frac};
        }
        if (!in_bounds(k, x))
            throw DomainError("grid: coordinate " + std::to_string(x) + " outside axis " + std::to_string(k) +
                              " [" + std::to_string(a.min) + ", " + std::to_string(a.max) + "]");
        const double s = std::clamp((x - a.min) / dx_[k], 0.0, static_cast<double>(n - 1));
        auto lo = static_cast<std::size_t>(std::floor(s));
        if (lo >= n - 1) lo = n - 2;
        return {lo, lo + 1, s - static_cast<double>(lo)};
    }

    friend bool operator==(const Grid& a, const Grid& b) { return a.axes_ == b.axes_; }

private:
    std::vector<Axis> axes_;
    std::array<double, kMaxDims> dx_{};
    std::array<std::size_t, kMaxDims> stride_{};
    std::size_t size_ = 0;
};

/// Grid-sampled implicit surface function. Negative inside the represented set.
class ValueFunction {
public:
    ValueFunction() = default;

    ValueFunction(Grid grid, std::vector<double> data) : grid_(std::move(grid)), data_(std::move(data)) {
        if (data_.size() != grid_.size())
            throw ArgumentError("value function: data length " + std::to_string(data_.size()) +
                                " does not match grid size " + std::to_string(grid_.size()));
        for (std::size_t n = 0; n < data_.size(); ++n)
            if (!std::isfinite(data_[n]))
                throw ArgumentError("value function: non-finite entry at node " + std::to_string(n));
    }

    const Grid& grid() const noexcept { return grid_; }
    std::span<const double> data() const noexcept { return data_; }
    double operator[](std::size_t n) const { return data_[n]; }
    std::size_t size() const noexcept { return data_.size(); }

    double min_value() const { return *std::min_element(data_.begin(), data_.end()); }

    /// Moves the storage out; leaves this object empty.
    std::vector<double> release() && { return std::move(data_); }

private:
    Grid grid_;
    std::vector<double> data_;
};

/// A family of value functions on one grid, indexed by strictly increasing times.
class TimeIndexedValueFunction {
public:
    TimeIndexedValueFunction() = default;

    TimeIndexedValueFunction(std::vector<double> times, std::vector<ValueFunction> frames)
        : times_(std::move(times)), frames_(std::move(frames)) {
        if (times_.empty()) throw ArgumentError("time-indexed value function: no frames");
        if (times_.size() != frames_.size())
            throw ArgumentError("time-indexed value function: times/frames length mismatch");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw ArgumentError("time-indexed value function: times must be strictly increasing");
        for (const auto& f : frames_)
            if (!(f.grid() == frames_.front().grid()))
                throw ArgumentError("time-indexed value function: frames on different grids");
    }

    const Grid& grid() const { return frames_.front().grid(); }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<ValueFunction>& frames() const noexcept { return frames_; }
    std::size_t frame_count() const noexcept { return frames_.size(); }
    const ValueFunction& frame(std::size_t i) const { return frames_.at(i); }
    const ValueFunction& back() const { return frames_.back(); }
    bool empty() const noexcept { return frames_.empty(); }

    /// Index of the earliest frame with time >= t (last frame when t is past the end).
    std::size_t index_at_or_after(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
        if (it == times_.end()) return times_.size() - 1;
        return static_cast<std::size_t>(it - times_.begin());
    }

    /// Index of the latest frame with time <= t (first frame when t precedes the start).
    std::size_t index_at_or_before(double t) const {
        auto it = std::upper_bound(times_.begin(), times_.end(), t + 1e-12);
        if (it == times_.begin()) return 0;
        return static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    const ValueFunction& frame_at_or_after(double t) const { return frames_[index_at_or_after(t)]; }
    const ValueFunction& frame_at_or_before(double t) const { return frames_[index_at_or_before(t)]; }

private:
    std::vector<double> times_;
    std::vector<ValueFunction> frames_;
};

/// Builds a value function by evaluating fn(point) at every node.
template <typename Fn>
ValueFunction sample(const Grid& grid, Fn&& fn) {
    std::vector<double> data(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) data[n] = fn(grid.node_point(n));
    return ValueFunction(grid, std::move(data));
}

inline void check_position_dims(const Grid& grid, std::pair<std::size_t, std::size_t> dims) {
    if (dims.first == dims.second || dims.first >= grid.dims() || dims.second >= grid.dims())
        throw ArgumentError("position dims must be two distinct valid axes");
    if (grid.periodic(dims.first) || grid.periodic(dims.second))
        throw ArgumentError("position dims must be non-periodic");
}

/// Signed distance to a disk in the two position dims; a cylinder through the others.
inline ValueFunction make_signed_distance_disk(const Grid& grid, std::array<double, 2> center, double radius,
                                               std::pair<std::size_t, std::size_t> position_dims = {0, 1}) {
    if (!(radius > 0.0)) throw ArgumentError("disk radius must be positive");
    check_position_dims(grid, position_dims);
    const auto [a, b] = position_dims;
    return sample(grid, [&](const Point& p) {
        return std::hypot(p[a] - center[0], p[b] - center[1]) - radius;
    });
}

namespace detail {

template <typename Op>
ValueFunction pointwise(const ValueFunction& a, const ValueFunction& b, Op op, const char* name) {
    if (!(a.grid() == b.grid())) throw ArgumentError(std::string(name) + ": value functions on different grids");
    std::vector<double> out(a.size());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = op(a[n], b[n]);
    return ValueFunction(a.grid(), std::move(out));
}

}  // namespace detail

inline ValueFunction set_union(const ValueFunction& a, const ValueFunction& b) {
    return detail::pointwise(a, b, [](double x, double y) { return std::min(x, y); }, "set_union");
}

inline ValueFunction set_intersect(const ValueFunction& a, const ValueFunction& b) {
    return detail::pointwise(a, b, [](double x, double y) { return std::max(x, y); }, "set_intersect");
}

namespace detail {

struct Stencil {
    std::array<Grid::Bracket, kMaxDims> br{};
    std::size_t dims = 0;
};

inline Stencil locate(const Grid& g, std::span<const double> x) {
    if (x.size() < g.dims()) throw ArgumentError("query point has too few coordinates");
    Stencil s;
    s.dims = g.dims();
    for (std::size_t k = 0; k < s.dims; ++k) s.br[k] = g.bracket(k, x[k]);
    return s;
}

/// Visits the 2^d enclosing corners with their multilinear weights.
template <typename Visit>
void for_each_corner(const Grid& g, const Stencil& s, Visit&& visit) {
    const std::size_t corners = std::size_t{1} << s.dims;
    for (std::size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t node = 0;
        for (std::size_t k = 0; k < s.dims; ++k) {
            const bool upper = (c >> k) & 1u;
            w *= upper ? s.br[k].frac : 1.0 - s.br[k].frac;
            node += (upper ? s.br[k].hi : s.br[k].lo) * g.stride(k);
        }
        if (w != 0.0) visit(node, w);
    }
}

/// Central-difference derivative along axis k at a node; one-sided at
/// non-periodic edges, wrapped on periodic axes.
inline double node_derivative(const ValueFunction& v, std::size_t node, std::size_t k) {
    const Grid& g = v.grid();
    const std::size_t n = g.nodes(k);
    const std::size_t st = g.stride(k);
    const std::size_t i = (node / st) % n;
    const double h = g.spacing(k);
    if (g.periodic(k)) {
        const std::size_t up = node - i * st + ((i + 1) % n) * st;
        const std::size_t dn = node - i * st + ((i + n - 1) % n) * st;
        return (v[up] - v[dn]) / (2.0 * h);
    }
    if (i == 0) return (v[node + st] - v[node]) / h;
    if (i == n - 1) return (v[node] - v[node - st]) / h;
    return (v[node + st] - v[node - st]) / (2.0 * h);
}

}  // namespace detail

/// Multilinear interpolation; exact at nodes. Throws DomainError outside
/// non-periodic bounds.
inline double interpolate(const ValueFunction& v, std::span<const double> x) {
    const auto s = detail::locate(v.grid(), x);
    double acc = 0.0;
    detail::for_each_corner(v.grid(), s, [&](std::size_t node, double w) { acc += w * v[node]; });
    return acc;
}

inline double interpolate(const ValueFunction& v, const Point& x) {
    return interpolate(v, std::span<const double>(x.data(), v.grid().dims()));
}

/// Node gradients (central differences) interpolated multilinearly to x.
inline Point gradient(const ValueFunction& v, std::span<const double> x) {
    const auto s = detail::locate(v.grid(), x);
    Point g{};
    detail::for_each_corner(v.grid(), s, [&](std::size_t node, double w) {
        for (std::size_t k = 0; k < s.dims; ++k) g[k] += w * detail::node_derivative(v, node, k);
    });
    return g;
}

inline Point gradient(const ValueFunction& v, const Point& x) {
    return gradient(v, std::span<const double>(x.data(), v.grid().dims()));
}

}  // namespace reachguard
