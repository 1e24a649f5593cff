#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace releqt {

/// Every tolerance used by the verification suite, the acceptance binary
/// and the scenario loader. Scenario files may override any entry.
struct Tolerances {
    // Hyperplane inner products.
    double frame_independence = 1e-3;    ///< relative error of grid inner products
    double tail_fraction = 1e-8;         ///< norm fraction allowed in the outermost grid shell
    /// Error level below which grid refinement is not resolvable: tilted-plane
    /// sampling is accurate to about 1e-12 relative.
    double refinement_floor = 1e-11;
    double nyquist_fraction = 1e-8;      ///< norm fraction allowed in the outermost wavevector shell

    // State-space maps.
    double unitarity = 1e-12;            ///< relative to ||F1|| ||F2||
    double conjugation = 1e-10;
    double orthonormality = 1e-10;
    double probability_sum = 1e-8;

    // Ideal measurements.
    double reduction_equivalence = 1e-6;
    double born_band = 0.02;

    // Continuous detection.
    double integrator = 1e-10;           ///< local error tolerance of the adaptive integrator
    double jump_bracket = 1e-12;         ///< width of the jump-time bracket in tau
    double jump_time = 1e-8;             ///< analytic exponential oracle
    double bookkeeping_factor = 2.0;     ///< defect bound as a multiple of `integrator`
    double covariance_tau = 1e-7;
    double covariance_point = 1e-9;
    double start_condition = 1e-9;       ///< relative light-cone residual at the detector start
    double limit_gap = 1e-3;             ///< survival sup-norm gap at the largest c

    // Spinor algebra.
    double algebra = 1e-10;

    // Runtime budgets in seconds.
    double runtime_frame_independence = 120.0;
    double runtime_born = 300.0;
    double runtime_algebra = 1.0;
};

/// One measured quantity compared against its bound (value <= bound).
struct Measure {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    bool passed() const { return value <= bound; }
};

struct CheckResult {
    std::string id;
    std::string title;
    std::vector<Measure> measures;
    double seconds = 0.0;
    std::string error;  ///< set when the check threw

    bool passed() const;
};

struct VerifyOptions {
    Tolerances tolerances;
    unsigned threads = 1;
};

/// Identifiers of all checks in execution order.
const std::vector<std::string>& check_ids();
/// Members of a named suite: all, theorem1, covariance, limit, or a single
/// check id. Throws DomainError for an unknown name.
std::vector<std::string> suite_members(const std::string& suite);

/// Runs one check; exceptions are caught and reported as a failure.
CheckResult run_check(const std::string& id, const VerifyOptions& options);
std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options,
                                   const std::function<void(const CheckResult&)>& on_result = {});

/// One line: PASS/FAIL, id, title, each measure with its bound, runtime.
std::string format_result(const CheckResult& r);

}  // namespace releqt
