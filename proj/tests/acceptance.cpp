// Acceptance run: one PASS/FAIL row per criterion, nonzero exit on failure.

#include "reachguard/verify/acceptance.hpp"

#include <cstdlib>
#include <iostream>

using namespace reachguard;

int main() {
    try {
        Config config = load_config(fs::path(REACHGUARD_FIXTURES) / "default_config.json");
        if (const char* env = std::getenv("REACHGUARD_CACHE")) config.cache_dir = env;
        const Precomputed pre = precompute(config, std::cerr);
        const acceptance::Inputs in{config, &pre, REACHGUARD_FIXTURES};
        const auto results = acceptance::run_all(in, std::cout, std::cerr);
        const bool ok = acceptance::all_passed(results);
        std::cout << (ok ? "all criteria passed\n" : "some criteria failed\n");
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << '\n';
        return 1;
    }
}
