// Acceptance suite: one PASS/FAIL line per criterion. Tolerances come from
// the shared Tolerances defaults.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <algorithm>

#include "releqt/verify.hpp"

int main() {
    releqt::VerifyOptions options;
    if (const char* env = std::getenv("RELEQT_THREADS")) options.threads = static_cast<unsigned>(std::max(1, std::atoi(env)));
    const char* criteria[] = {"frame-independence", "unitarity",  "conjugation",
                              "reduction-equivalence", "pdp-oracle", "pdp-covariance",
                              "born-statistics", "nonrelativistic-limit", "algebra"};
    int failed = 0;
    for (int i = 0; i < 9; ++i) {
        const releqt::CheckResult r = releqt::run_check(criteria[i], options);
        failed += !r.passed();
        std::printf("criterion %d: %s\n", i + 1, releqt::format_result(r).c_str());
        std::fflush(stdout);
    }
    std::printf("%d of 9 criteria passed\n", 9 - failed);
    return failed == 0 ? 0 : 1;
}
