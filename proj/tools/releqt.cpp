#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "releqt/scenario.hpp"

namespace fs = std::filesystem;
using namespace releqt;

namespace {

unsigned thread_count() {
    if (const char* v = std::getenv("RELEQT_THREADS")) {
        const long n = std::strtol(v, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return 1;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + path.string() + "'");
    return out;
}

fs::path output_dir(const Scenario& s, const std::string& override_dir) {
    const fs::path dir = override_dir.empty() ? fs::path(s.output.directory) : fs::path(override_dir);
    fs::create_directories(dir);
    return dir;
}

void write_planes(const Scenario& s, const QuantumState& psi, const fs::path& dir) {
    if (s.planes.empty()) return;
    std::ofstream out = open_output(dir / "planes.csv");
    out << "plane,y0,y1,y2,y3,alpha1,alpha2,alpha3,phi1,phi2,phi3,norm_sq\n";
    char buf[64];
    for (std::size_t i = 0; i < s.planes.size(); ++i) {
        const HyperplaneParams& h = s.planes[i];
        const double n = inner_product(psi, psi, h, s.grid.radius, s.grid.n).real();
        out << i + 1;
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        };
        for (int k = 0; k < 4; ++k) put(h.y[k]);
        for (int k = 0; k < 3; ++k) put(h.alpha[k]);
        for (int k = 0; k < 3; ++k) put(h.phi[k]);
        put(n);
        out << '\n';
    }
}

int simulate(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    Scenario s = load_scenario(path);
    if (!s.is_detection()) throw DomainError("simulate needs a detector list; use 'measure' for measurement schedules");
    if (seed) s.seed = *seed;
    const fs::path dir = output_dir(s, out_dir);
    const QuantumState psi0 = build_initial_state(s);
    const DetectionSetup setup = build_detection_setup(s);

    RandomStream rng(s.seed);
    const DetectionRun run = run_detection(psi0, setup, rng);
    check_event_order(run.events);
    {
        std::ofstream out = open_output(dir / s.output.events);
        write_event_csv(out, run.events);
    }
    {
        std::ofstream out = open_output(dir / s.output.survival);
        write_survival_csv(out, run.survival);
    }
    const double bound = s.tolerances.bookkeeping_factor * s.integrator.tolerance;
    std::printf("simulate: %zu detection(s), final tau %.6g, accepted steps %zu, bookkeeping defect %.3g\n",
                run.events.size() - 1, run.final_tau, run.accepted_steps, run.bookkeeping_defect);

    if (s.trajectories > 0) {
        const EnsembleResult ens = run_detection_ensemble(psi0, setup, s.seed, s.trajectories, thread_count());
        std::ofstream out = open_output(dir / "ensemble.csv");
        write_event_csv(out, ens.first_events);
        std::printf("ensemble: %zu trajectories, %zu undetected\n", s.trajectories, ens.undetected);
    }
    write_planes(s, psi0, dir);

    if (s.integrator.method == IntegratorMethod::dormand_prince && run.bookkeeping_defect > bound) {
        std::fprintf(stderr, "bookkeeping defect %.3g exceeds %.3g\n", run.bookkeeping_defect, bound);
        return 1;
    }
    return 0;
}

int measure(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    Scenario s = load_scenario(path);
    if (s.measurements.empty()) throw DomainError("measure needs a measurement schedule");
    if (seed) s.seed = *seed;
    const fs::path dir = output_dir(s, out_dir);
    const QuantumState psi = build_initial_state(s);
    if (!std::holds_alternative<ModeListState>(psi)) throw DomainError("measure needs a mode-list initial state");
    const ModeListState& psi0 = std::get<ModeListState>(psi);
    const std::vector<ScheduledMeasurement> schedule = build_schedule(s);

    RandomStream rng(s.seed);
    const MeasurementRun run = run_measurement_sequence(psi0, s.preparation, schedule, rng);
    check_event_order(run.events);
    {
        std::ofstream out = open_output(dir / s.output.events);
        write_event_csv(out, run.events);
    }
    const std::vector<OutcomePath> paths = outcome_distribution(psi0, schedule);
    double total = 0.0;
    {
        std::ofstream out = open_output(dir / "outcomes.csv");
        out << "outcomes,probability\n";
        char buf[48];
        for (const OutcomePath& p : paths) {
            for (std::size_t i = 0; i < p.outcomes.size(); ++i) out << (i ? ";" : "") << p.outcomes[i] + 1;
            std::snprintf(buf, sizeof buf, ",%.17g\n", p.probability);
            out << buf;
            total += p.probability;
        }
    }
    write_planes(s, psi, dir);
    std::printf("measure: %zu measurement(s), outcome paths %zu, total probability %.15g\n", schedule.size(),
                paths.size(), total);
    if (std::abs(total - 1.0) > s.tolerances.probability_sum) {
        std::fprintf(stderr, "outcome probabilities sum to %.15g\n", total);
        return 1;
    }
    return 0;
}

int verify(const std::string& suite, const std::string& scenario, const std::string& report) {
    VerifyOptions opt;
    opt.threads = thread_count();
    if (!scenario.empty()) opt.tolerances = load_scenario(scenario).tolerances;
    std::ofstream file;
    if (!report.empty()) file = open_output(report);
    std::size_t passed = 0;
    const std::vector<CheckResult> results = run_suite(suite, opt, [&](const CheckResult& r) {
        const std::string line = format_result(r);
        std::cout << line << std::endl;
        if (file) file << line << '\n';
        if (r.passed()) ++passed;
    });
    std::printf("%zu of %zu checks passed\n", passed, results.size());
    if (file) file << passed << " of " << results.size() << " checks passed\n";
    return passed == results.size() ? 0 : 1;
}

int transform(const std::string& path, double rapidity, const std::string& axis, const std::vector<double>& shift,
              const std::string& out) {
    const Scenario s = load_scenario(path);
    const int ax = axis == "x" ? 1 : axis == "y" ? 2 : 3;
    Vec4 a = Vec4::Zero();
    if (!shift.empty()) a = Vec4(shift[0], shift[1], shift[2], shift[3]);
    const LorentzTransform t = LorentzTransform::translation(a) * LorentzTransform::boost(ax, rapidity);
    const fs::path target(out);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const Scenario moved = transform_scenario_file(s, t, target);
    save_scenario(moved, target);
    // Read back to validate the written file.
    load_scenario(target);
    std::printf("transform: wrote %s\n", target.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relativistic quantum event trajectories: detection and measurement simulator"};
    app.require_subcommand(1);

    std::string scenario, out_dir;
    std::uint64_t seed = 0;

    auto* sim = app.add_subcommand("simulate", "Run a detector scenario and write event and survival CSVs");
    sim->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    auto* sim_seed = sim->add_option("--seed", seed, "Random seed (overrides the scenario seed)");
    sim->add_option("--out", out_dir, "Output directory (overrides the scenario output directory)");

    auto* mea = app.add_subcommand("measure", "Run a measurement schedule and write event and outcome CSVs");
    mea->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    auto* mea_seed = mea->add_option("--seed", seed, "Random seed (overrides the scenario seed)");
    mea->add_option("--out", out_dir, "Output directory (overrides the scenario output directory)");

    std::string suite = "all", report;
    auto* ver = app.add_subcommand("verify", "Run the invariant suite and print measured errors against tolerances");
    ver->add_option("--suite", suite, "all, theorem1, covariance, limit or a single check id")->capture_default_str();
    ver->add_option("--scenario", scenario, "Scenario file whose tolerances section overrides the defaults")
        ->check(CLI::ExistingFile);
    ver->add_option("--report", report, "Also write the report to this file");

    double rapidity = 0.0;
    std::string axis = "x";
    std::vector<double> shift;
    std::string target;
    auto* tra = app.add_subcommand("transform", "Apply a boost followed by a translation to a scenario file");
    tra->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    tra->add_option("--boost", rapidity, "Boost rapidity")->capture_default_str();
    tra->add_option("--axis", axis, "Boost axis")->check(CLI::IsMember({"x", "y", "z"}))->capture_default_str();
    tra->add_option("--translate", shift, "Translation t,x,y,z")->delimiter(',')->expected(4);
    tra->add_option("--out", target, "Transformed scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return simulate(scenario, *sim_seed ? std::optional(seed) : std::nullopt, out_dir);
        if (*mea) return measure(scenario, *mea_seed ? std::optional(seed) : std::nullopt, out_dir);
        if (*ver) return verify(suite, scenario, report);
        if (*tra) return transform(scenario, rapidity, axis, shift, target);
    } catch (const ScenarioError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
