#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "releqt/events.hpp"
#include "releqt/verify.hpp"

namespace releqt {

/// Load failure carrying every violation found, one message per entry.
class ScenarioError : public DomainError {
public:
    explicit ScenarioError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

struct StateSpec {
    enum class Kind { gaussian, file };
    Kind kind = Kind::gaussian;
    GaussianPacket packet;
    std::string file;  ///< state file, relative to the scenario file
};

struct ObservableSpec {
    enum class Kind { windows, states };
    Kind kind = Kind::windows;
    std::vector<double> eigenvalues;  ///< defaults to 1, 2, ...
    double complement_eigenvalue = 0.0;
    // windows: Gaussian position windows on the lab slice at `time`.
    double time = 0.0;
    std::vector<Vec3> centers;
    double width = 1.0;
    Spinor spinor = Spinor::UnitX();
    // states: orthonormal projector states from files.
    std::vector<std::string> files;
};

struct MeasurementSpec {
    double tau = 0.0;
    Vec4 point = Vec4::Zero();
    ObservableSpec observable;
};

struct OutputSpec {
    std::string directory = "out";
    std::string events = "events.csv";
    std::string survival = "survival.csv";
};

struct Scenario {
    std::string name;
    double mass = 1.0;
    double c = 1.0;
    std::string representation = "dirac";
    std::uint64_t seed = 0;
    Preparation preparation;
    StateSpec state;
    GridSpec grid;
    IntegratorOptions integrator;
    double tau_max = 10.0;
    LorentzTransform frame;
    std::vector<DetectorSpec> detectors;
    RearmPolicy rearm = RearmPolicy::keep;
    std::vector<DetectorSpec> replacement;
    std::optional<std::size_t> max_events;
    std::size_t trajectories = 0;  ///< first-detection ensemble size; 0 disables it
    std::vector<MeasurementSpec> measurements;
    std::vector<HyperplaneParams> planes;  ///< hyperplanes on which the initial norm is reported
    OutputSpec output;
    Tolerances tolerances;
    std::filesystem::path base_dir;  ///< directory that relative file names refer to

    bool is_detection() const { return !detectors.empty(); }
};

/// Parses and validates; throws ScenarioError listing every violation, with
/// line numbers for parse and type errors.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Writes a scenario that load_scenario reads back to the same data.
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Model-level checks: light-cone start condition, hyperplane domain,
/// ordering of the measurement schedule, Nyquist bound of the initial state.
std::vector<std::string> validate_scenario(const Scenario& s);

QuantumState build_initial_state(const Scenario& s);
DetectionSetup build_detection_setup(const Scenario& s);
std::vector<ScheduledMeasurement> build_schedule(const Scenario& s);

/// Detector at rest at x with c-scaled clock, started on the backward light
/// cone of the preparation point.
DetectorSpec resting_detector(int id, const Vec3& x, double kappa, double width, const Preparation& prep,
                              double c = 1.0);

/// The scenario seen from the frame related by t. The transformed initial
/// state and measurement projectors are written next to `out` as state files.
Scenario transform_scenario_file(const Scenario& s, const LorentzTransform& t, const std::filesystem::path& out);

void write_survival_csv(std::ostream& os, std::span<const SurvivalSample> samples);

}  // namespace releqt
