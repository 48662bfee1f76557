// reachguard: precompute reachability tables, simulate scenarios, run the
// acceptance suite and export value-function slices.
//
// Exit codes: 0 success, 1 failure (verification, I/O or solver),
// 2 safety-monitor violation, 64 usage error.

#include "reachguard/io.hpp"
#include "reachguard/parallel.hpp"
#include "reachguard/sim.hpp"
#include "reachguard/verify/acceptance.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace reachguard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitViolation = 2;
constexpr int kExitUsage = 64;

struct CommonOptions {
    std::string config;
    std::string cache;
    unsigned jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Config file (JSON); defaults apply when omitted");
    cmd->add_option("--cache", o.cache, "Cache directory (overrides REACHGUARD_CACHE and the config)");
    cmd->add_option("--jobs", o.jobs, "Worker threads (0 = hardware concurrency)");
}

Config resolve_config(const CommonOptions& o) {
    Config c = o.config.empty() ? Config{} : load_config(o.config);
    if (const char* env = std::getenv("REACHGUARD_CACHE"); env != nullptr && *env != '\0') c.cache_dir = env;
    if (!o.cache.empty()) c.cache_dir = o.cache;
    if (o.jobs != 0) c.jobs = o.jobs;
    worker_count() = c.jobs;
    return c;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

int cmd_precompute(const CommonOptions& o) {
    const Config c = resolve_config(o);
    const auto pre = precompute(c, std::cout);
    const auto paths = cache_paths(c);
    std::cout << "cache: " << paths.exit.string() << '\n'
              << "cache: " << paths.pc.string() << '\n'
              << "cache: " << paths.frs.string() << '\n';
    return pre.tables.v_pc.size() > 0 ? kExitOk : kExitFailure;
}

int cmd_simulate(const CommonOptions& o, const std::string& scenario_path, const std::string& out,
                 std::optional<std::uint64_t> seed) {
    Config c = resolve_config(o);
    Scenario sc = load_scenario(scenario_path);
    if (seed) sc.seed = *seed;
    c = config_for(c, sc);
    if (!out.empty()) c.output_dir = out;
    const auto pre = precompute(c, std::cerr);
    const RunRecord rec = run_scenario(sc, pre.tables, run_config(c, sc, pre.frs));

    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec || !fs::is_directory(c.output_dir)) throw IoError("cannot create output directory " + c.output_dir.string());
    const std::string stem = fs::path(scenario_path).stem().string();
    std::ostringstream csv, events;
    write_run_csv(csv, rec);
    write_event_log(events, rec.events);
    const std::string summary = run_summary(sc, rec);
    write_file(c.output_dir / (stem + ".csv"), csv.str());
    write_file(c.output_dir / (stem + ".events.jsonl"), events.str());
    write_file(c.output_dir / (stem + ".summary.txt"), summary);
    for (std::size_t k = 0; k < rec.episodes.size(); ++k)
        if (const auto& b = rec.episodes[k].brs_minus_start)
            write_cache(c.output_dir / (stem + ".episode-" + std::to_string(k) + ".brs_minus.hjrs"), *b);
    std::cout << summary;
    if (rec.violation_time) {
        std::fprintf(stderr, "safety monitor violation at t=%.4f\n", *rec.violation_time);
        return kExitViolation;
    }
    return kExitOk;
}

int cmd_verify(const CommonOptions& o, const std::string& fixtures) {
    const Config c = resolve_config(o);
    fs::path dir = fixtures;
    if (dir.empty()) dir = o.config.empty() ? fs::path("fixtures") : fs::path(o.config).parent_path();
    const auto pre = precompute(c, std::cerr);
    const acceptance::Inputs in{c, &pre, dir};
    const auto results = acceptance::run_all(in, std::cout, std::cerr);
    const bool ok = acceptance::all_passed(results);
    std::cout << (ok ? "all criteria passed\n" : "some criteria failed\n");
    return ok ? kExitOk : kExitFailure;
}

int cmd_export_slice(const std::string& file, double time, double theta, const std::string& out) {
    const auto v = read_cache(file);
    const auto& ts = v.times();
    std::size_t best = 0;
    for (std::size_t f = 1; f < ts.size(); ++f)
        if (std::abs(ts[f] - time) < std::abs(ts[best] - time)) best = f;
    if (std::abs(ts[best] - time) > 1e-9)
        std::fprintf(stderr, "warning: no frame at t=%g; using nearest frame t=%g\n", time, ts[best]);
    const Grid& g = v.grid();
    if (g.dims() != 3 || !g.periodic(2)) throw ArgumentError("export-slice: cache is not a pose table");
    if (!(std::isfinite(theta) && theta >= -std::numbers::pi - 1e-9 && theta <= std::numbers::pi + 1e-9))
        throw ArgumentError("export-slice: theta must lie in [-pi, pi]");
    char title[160];
    std::snprintf(title, sizeof title, "%s t=%g theta=%g", fs::path(file).filename().string().c_str(), ts[best], theta);
    write_file(out, slice_svg(v.frame(best), theta, title));
    std::cout << "wrote " << out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reachability-based collision avoidance for N+1 Dubins vehicles"};
    app.require_subcommand(1);

    CommonOptions pre_opts, sim_opts, ver_opts;
    auto* pre = app.add_subcommand("precompute", "Compute and cache the pairwise tables and origin FRS");
    add_common(pre, pre_opts);

    std::string scenario, out;
    std::optional<std::uint64_t> seed;
    auto* sim = app.add_subcommand("simulate", "Run a scenario; write CSV, event log and summary");
    add_common(sim, sim_opts);
    sim->add_option("--scenario", scenario, "Scenario file (JSON)")->required();
    sim->add_option("--out", out, "Output directory");
    sim->add_option("--seed", seed, "Override the scenario seed");

    std::string fixtures;
    auto* ver = app.add_subcommand("verify", "Run the acceptance criteria");
    add_common(ver, ver_opts);
    ver->add_option("--fixtures", fixtures, "Fixture directory (default: the config file's directory)");

    std::string slice_file, slice_out = "slice.svg";
    double slice_time = 0.0, slice_theta = 0.0;
    auto* exp = app.add_subcommand("export-slice", "Write an SVG of a zero level set at a fixed heading");
    exp->add_option("file", slice_file, "Cache file (.hjrs)")->required();
    exp->add_option("--time", slice_time, "Frame time (nearest frame is used)");
    exp->add_option("--theta", slice_theta, "Heading of the slice");
    exp->add_option("--out", slice_out, "Output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*pre) return cmd_precompute(pre_opts);
        if (*sim) return cmd_simulate(sim_opts, scenario, out, seed);
        if (*ver) return cmd_verify(ver_opts, fixtures);
        if (*exp) return cmd_export_slice(slice_file, slice_time, slice_theta, slice_out);
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericFailure& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
