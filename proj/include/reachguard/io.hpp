#pragma once

// Config and scenario files (JSON), the cached precomputation pipeline and
// SVG slice export.

#include "reachguard/cache_io.hpp"
#include "reachguard/errors.hpp"
#include "reachguard/reach_sets.hpp"
#include "reachguard/sim.hpp"

#include "json.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace reachguard {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct GridSpec {
    double extent = 15.0;  ///< relative grid: +/- extent; outsider and FRS grids: margin
    std::array<std::size_t, 3> nodes{61, 61, 45};
};

struct Config {
    fs::path scenario;
    DubinsParams params;
    double Rc = 3.0;
    double Te = 2.0;
    double K = 2.0;
    GridSpec relative_grid{15.0, {61, 61, 45}};
    GridSpec outsider_grid{10.0, {81, 81, 45}};
    GridSpec frs_grid{3.0, {81, 81, 45}};
    double frs_horizon = 20.0;
    double frs_frame_interval = 0.25;
    SolveConfig solver;
    std::size_t frame_stride = 5;
    std::size_t max_frames = 64;
    fs::path output_dir = "out";
    fs::path cache_dir = "cache";
    unsigned jobs = 0;

    void validate() const {
        params.validate();
        solver.validate();
        for (const auto* g : {&relative_grid, &outsider_grid, &frs_grid})
            for (std::size_t k : g->nodes)
                if (k < 11) throw ArgumentError("config: grids need at least 11 nodes per dimension");
        if (!(relative_grid.extent > Rc)) throw ArgumentError("config: relative grid must contain the danger disk");
        if (!(frs_horizon > 0.0) || !(frs_frame_interval > 0.0))
            throw ArgumentError("config: FRS horizon and frame interval must be positive");
    }
};

namespace detail {

inline json read_json_file(const fs::path& path, const char* what) {
    std::ifstream f(path);
    if (!f) throw IoError(std::string("cannot open ") + what + " " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ArgumentError(std::string(what) + " " + path.string() + " is empty");
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string(what) + " " + path.string() + ": " + e.what());
    }
}

inline void read_grid_spec(const json& j, const char* extent_key, GridSpec& g) {
    if (j.contains(extent_key)) g.extent = j.at(extent_key).get<double>();
    if (j.contains("nodes")) g.nodes = j.at("nodes").get<std::array<std::size_t, 3>>();
}

inline void read_params(const json& j, DubinsParams& p) {
    if (j.contains("speed")) p.speed = j.at("speed").get<double>();
    if (j.contains("max_turn")) p.max_turn = j.at("max_turn").get<double>();
}

}  // namespace detail

inline Config parse_config(const json& j, const fs::path& base = {}) {
    Config c;
    try {
        if (j.contains("scenario")) c.scenario = base / j.at("scenario").get<std::string>();
        if (j.contains("params")) detail::read_params(j.at("params"), c.params);
        if (j.contains("Rc")) c.Rc = j.at("Rc").get<double>();
        if (j.contains("Te")) c.Te = j.at("Te").get<double>();
        if (j.contains("K")) c.K = j.at("K").get<double>();
        if (j.contains("relative_grid")) detail::read_grid_spec(j.at("relative_grid"), "extent", c.relative_grid);
        if (j.contains("outsider_grid")) detail::read_grid_spec(j.at("outsider_grid"), "margin", c.outsider_grid);
        if (j.contains("frs")) {
            const auto& f = j.at("frs");
            detail::read_grid_spec(f, "margin", c.frs_grid);
            if (f.contains("horizon")) c.frs_horizon = f.at("horizon").get<double>();
            if (f.contains("frame_interval")) c.frs_frame_interval = f.at("frame_interval").get<double>();
        }
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            if (s.contains("cfl")) c.solver.cfl = s.at("cfl").get<double>();
            if (s.contains("convergence_tol")) c.solver.convergence_tol = s.at("convergence_tol").get<double>();
            if (s.contains("max_steps")) c.solver.max_steps = s.at("max_steps").get<std::size_t>();
        }
        if (j.contains("frame_stride")) c.frame_stride = j.at("frame_stride").get<std::size_t>();
        if (j.contains("max_frames")) c.max_frames = j.at("max_frames").get<std::size_t>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<unsigned>();
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline Config load_config(const fs::path& path) {
    return parse_config(detail::read_json_file(path, "config"), path.parent_path());
}

inline Scenario parse_scenario(const json& j) {
    Scenario s;
    try {
        if (!j.is_object() || !j.contains("vehicles")) throw ArgumentError("scenario: missing \"vehicles\"");
        if (j.contains("name")) s.name = j.at("name").get<std::string>();
        if (j.contains("params")) detail::read_params(j.at("params"), s.params);
        if (j.contains("Rc")) s.Rc = j.at("Rc").get<double>();
        if (j.contains("Te")) s.Te = j.at("Te").get<double>();
        if (j.contains("K")) s.K = j.at("K").get<double>();
        if (j.contains("dt")) s.dt = j.at("dt").get<double>();
        if (j.contains("horizon")) s.horizon = j.at("horizon").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("force_unguaranteed")) s.force_unguaranteed = j.at("force_unguaranteed").get<bool>();
        for (const auto& v : j.at("vehicles")) {
            const auto st = v.at("start").get<std::array<double, 3>>();
            const auto gl = v.at("goal").get<std::array<double, 2>>();
            VehicleSpec spec{{st[0], st[1], st[2]}, {gl[0], gl[1], v.value("capture_radius", 1.0)}};
            s.vehicles.push_back(spec);
        }
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("scenario: ") + e.what());
    }
    s.validate();
    return s;
}

inline Scenario load_scenario(const fs::path& path) { return parse_scenario(detail::read_json_file(path, "scenario")); }

// ---------------------------------------------------------------------------
// Grids

inline Grid relative_grid(const Config& c) {
    const double e = c.relative_grid.extent;
    const auto& n = c.relative_grid.nodes;
    return make_pose_grid(-e, e, -e, e, n[0], n[1], n[2]);
}

inline Grid frs_grid(const Config& c) {
    const double e = c.params.speed * c.frs_horizon + c.frs_grid.extent;
    const auto& n = c.frs_grid.nodes;
    return make_pose_grid(-e, e, -e, e, n[0], n[1], n[2]);
}

/// Bounding box of starts and goals, padded by the outsider-grid margin.
inline Grid outsider_grid(const Config& c, const Scenario& s) {
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = x0;
    double x1 = -x0;
    double y1 = -x0;
    for (const auto& v : s.vehicles) {
        for (auto [x, y] : {std::pair{v.initial.px, v.initial.py}, std::pair{v.goal.x, v.goal.y}}) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    const double m = c.outsider_grid.extent;
    const auto& n = c.outsider_grid.nodes;
    return make_pose_grid(x0 - m, x1 + m, y0 - m, y1 + m, n[0], n[1], n[2]);
}

// ---------------------------------------------------------------------------
// Cached precomputation

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string grid_key(const Grid& g) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& a : g.axes()) os << a.min << ':' << a.max << ':' << a.nodes << ':' << a.periodic << ';';
    return os.str();
}

inline std::string solver_key(const SolveConfig& s) {
    std::ostringstream os;
    os.precision(17);
    os << s.cfl << ':' << s.convergence_tol << ':' << s.max_steps;
    return os.str();
}

/// Content hashes for the pairwise tables and the origin FRS. K is a query
/// threshold and deliberately absent.
inline std::string tables_hash(const Config& c) {
    std::ostringstream os;
    os.precision(17);
    os << "pairwise|" << c.params.speed << '|' << c.params.max_turn << '|' << c.Rc << '|' << c.Te << '|'
       << grid_key(relative_grid(c)) << '|' << solver_key(c.solver) << "|v" << kCacheFormatVersion;
    return hex64(fnv1a(os.str()));
}

inline std::string frs_hash(const Config& c) {
    std::ostringstream os;
    os.precision(17);
    os << "frs|" << c.params.speed << '|' << c.params.max_turn << '|' << c.frs_horizon << '|' << c.frs_frame_interval
       << '|' << grid_key(frs_grid(c)) << '|' << solver_key(c.solver) << "|v" << kCacheFormatVersion;
    return hex64(fnv1a(os.str()));
}

struct CachePaths {
    fs::path exit;
    fs::path pc;
    fs::path frs;
};

inline CachePaths cache_paths(const Config& c) {
    const auto th = tables_hash(c);
    return {c.cache_dir / ("exit-" + th + ".hjrs"), c.cache_dir / ("pc-" + th + ".hjrs"),
            c.cache_dir / ("frs-" + frs_hash(c) + ".hjrs")};
}

inline fs::path sidecar_path(const fs::path& p) { return fs::path(p.string() + ".meta"); }

struct Precomputed {
    PairwiseTables tables;
    OriginFrs frs;
    bool tables_hit = false;
    bool frs_hit = false;
    double tables_seconds = 0.0;  ///< wall time of this session's solves (0 on a hit)
    double frs_seconds = 0.0;
};

/// Loads the cached tables and origin FRS, computing (and caching) whatever
/// is missing. Progress lines go to `log`.
inline Precomputed precompute(const Config& c, std::ostream& log) {
    c.validate();
    const auto paths = cache_paths(c);
    std::error_code ec;
    fs::create_directories(c.cache_dir, ec);
    if (ec || !fs::is_directory(c.cache_dir)) throw IoError("cannot create cache directory " + c.cache_dir.string());
    Precomputed out;
    const Grid rel = relative_grid(c);
    char buf[160];

    auto timed = [](auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (fs::exists(paths.exit) && fs::exists(paths.pc)) {
        auto ex = read_cache(paths.exit);
        auto pc = read_cache(paths.pc);
        if (!(ex.grid() == rel) || !(pc.grid() == rel)) throw IoError("cache: pairwise table grid mismatch");
        out.tables = {pc.frame(0), ex.frame(0), c.K, c.Te, c.Rc, c.params};
        out.tables_hit = true;
        log << "pairwise tables: cache hit (" << paths.pc.filename().string() << ")\n";
    } else {
        PairwiseDiagnostics diag;
        const double secs = timed([&] { out.tables = compute_pairwise_tables(rel, c.params, c.Rc, c.Te, c.K, c.solver, &diag); });
        out.tables_seconds = secs;
        write_cache(paths.exit, out.tables.v_exit);
        write_cache(paths.pc, out.tables.v_pc);
        std::map<std::string, std::string> meta{{"role", "exit"},
                                                {"cfl", std::to_string(c.solver.cfl)},
                                                {"Te", std::to_string(c.Te)},
                                                {"Rc", std::to_string(c.Rc)},
                                                {"frames", std::to_string(diag.exit_steps)}};
        write_sidecar(sidecar_path(paths.exit), meta);
        meta = {{"role", "pc"},
                {"cfl", std::to_string(c.solver.cfl)},
                {"tol", std::to_string(c.solver.convergence_tol)},
                {"steps", std::to_string(diag.pc.steps)},
                {"converged", diag.pc.converged ? "1" : "0"},
                {"residual", std::to_string(diag.pc.residual)},
                {"horizon", std::to_string(diag.pc.horizon)}};
        write_sidecar(sidecar_path(paths.pc), meta);
        std::snprintf(buf, sizeof buf, "pairwise tables: computed in %.1f s (%zu steps, converged=%d)\n", secs,
                      diag.pc.steps, diag.pc.converged ? 1 : 0);
        log << buf;
    }

    const Grid fg = frs_grid(c);
    if (fs::exists(paths.frs)) {
        out.frs = {read_cache(paths.frs)};
        if (!(out.frs.table.grid() == fg)) throw IoError("cache: FRS grid mismatch");
        out.frs_hit = true;
        log << "origin FRS: cache hit (" << paths.frs.filename().string() << ")\n";
    } else {
        const double secs = timed([&] { out.frs = compute_frs_origin(fg, c.params, c.frs_horizon, c.solver, c.frs_frame_interval); });
        out.frs_seconds = secs;
        write_cache(paths.frs, out.frs.table);
        write_sidecar(sidecar_path(paths.frs), {{"role", "frs"},
                                                {"cfl", std::to_string(c.solver.cfl)},
                                                {"horizon", std::to_string(c.frs_horizon)},
                                                {"frames", std::to_string(out.frs.table.frame_count())}});
        std::snprintf(buf, sizeof buf, "origin FRS: computed in %.1f s (%zu frames)\n", secs, out.frs.table.frame_count());
        log << buf;
    }
    return out;
}

inline RunConfig run_config(const Config& c, const Scenario& s, const OriginFrs& frs) {
    RunConfig rc;
    rc.outsider.grid = outsider_grid(c, s);
    rc.outsider.frs = &frs;
    rc.outsider.solver = c.solver;
    rc.outsider.frame_stride = c.frame_stride;
    rc.outsider.max_frames = c.max_frames;
    rc.outsider.dt = s.dt;
    return rc;
}

/// Config with the scenario's dynamics, radii and threshold.
inline Config config_for(Config c, const Scenario& s) {
    c.params = s.params;
    c.Rc = s.Rc;
    c.Te = s.Te;
    c.K = s.K;
    return c;
}

// ---------------------------------------------------------------------------
// SVG slice export

struct Segment {
    double x0, y0, x1, y1;
};

/// Marching squares on the (x, y) slice of `v` at heading index k.
inline std::vector<Segment> zero_contour(const ValueFunction& v, std::size_t k) {
    const Grid& g = v.grid();
    std::vector<Segment> segs;
    const auto xs = g.coordinates(0);
    const auto ys = g.coordinates(1);
    auto at = [&](std::size_t i, std::size_t j) { return v[i * g.stride(0) + j * g.stride(1) + k * g.stride(2)]; };
    auto lerp = [](double a, double b, double fa, double fb) { return a + (b - a) * fa / (fa - fb); };
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
            const double f[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
            const double px[4] = {xs[i], xs[i + 1], xs[i + 1], xs[i]};
            const double py[4] = {ys[j], ys[j], ys[j + 1], ys[j + 1]};
            std::vector<std::pair<double, double>> pts;
            for (int e = 0; e < 4; ++e) {
                const int a = e;
                const int b = (e + 1) % 4;
                if ((f[a] <= 0.0) != (f[b] <= 0.0))
                    pts.push_back({lerp(px[a], px[b], f[a], f[b]), lerp(py[a], py[b], f[a], f[b])});
            }
            if (pts.size() == 2) segs.push_back({pts[0].first, pts[0].second, pts[1].first, pts[1].second});
            if (pts.size() == 4) {
                segs.push_back({pts[0].first, pts[0].second, pts[1].first, pts[1].second});
                segs.push_back({pts[2].first, pts[2].second, pts[3].first, pts[3].second});
            }
        }
    return segs;
}

inline std::size_t nearest_theta_index(const Grid& g, double theta) {
    const double th = wrap_angle(theta);
    const double dth = g.spacing(2);
    auto k = static_cast<long long>(std::llround((th - g.axis(2).min) / dth));
    const auto n = static_cast<long long>(g.nodes(2));
    return static_cast<std::size_t>(((k % n) + n) % n);
}

/// SVG of the zero level set of `v` at the heading slice nearest `theta`.
inline std::string slice_svg(const ValueFunction& v, double theta, const std::string& title) {
    const Grid& g = v.grid();
    detail::check_pose_grid(g, "export-slice");
    const std::size_t k = nearest_theta_index(g, theta);
    const auto segs = zero_contour(v, k);
    const double x0 = g.axis(0).min;
    const double x1 = g.axis(0).max;
    const double y0 = g.axis(1).min;
    const double y1 = g.axis(1).max;
    const double size = 480.0;
    const double pad = 40.0;
    const double sx = size / (x1 - x0);
    const double sy = size / (y1 - y0);
    auto X = [&](double x) { return pad + (x - x0) * sx; };
    auto Y = [&](double y) { return pad + (y1 - y) * sy; };
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  size + 2 * pad, size + 2 * pad, size + 2 * pad, size + 2 * pad);
    os << buf;
    os << "<title>" << title << "</title>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                  pad, pad, size, size);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">x: [%.2f, %.2f]  y: [%.2f, %.2f]  theta=%.4f</text>\n",
                  pad, pad - 10, x0, x1, y0, y1, g.coordinate(2, k));
    os << buf;
    if (x0 < 0 && x1 > 0) {
        std::snprintf(buf, sizeof buf, "<line class=\"axis\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#999\"/>\n",
                      X(0), Y(y0), X(0), Y(y1));
        os << buf;
    }
    if (y0 < 0 && y1 > 0) {
        std::snprintf(buf, sizeof buf, "<line class=\"axis\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#999\"/>\n",
                      X(x0), Y(0), X(x1), Y(0));
        os << buf;
    }
    for (const auto& s : segs) {
        std::snprintf(buf, sizeof buf,
                      "<line class=\"contour\" x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"red\"/>\n",
                      X(s.x0), Y(s.y0), X(s.x1), Y(s.y1));
        os << buf;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace reachguard
