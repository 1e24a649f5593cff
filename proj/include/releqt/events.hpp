#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "releqt/evolution.hpp"
#include "releqt/states.hpp"

namespace releqt {

/// Counter-based stream built on the SplitMix64 finalizer: draw number n
/// (n = 0, 1, ...) is mix(seed + (n + 1) * 0x9E3779B97F4A7C15). The output
/// depends only on (seed, n), so it is identical on every platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in the open interval (0, 1), 53-bit resolution.
    double uniform();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    /// Seed of trajectory `index` in an ensemble rooted at `seed`.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);
    static std::uint64_t mix(std::uint64_t x);

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

enum class EventKind { preparation, measurement, detection };
const char* to_string(EventKind kind);

struct EventRecord {
    EventKind kind = EventKind::preparation;
    double tau = 0.0;
    Vec4 z = Vec4::Zero();
    int omega_before = 0;
    int omega_after = 0;
    int detail = 0;  ///< outcome index or detector id
    std::uint64_t seed = 0;
    std::uint64_t rng_draws_consumed = 0;
    /// Detection earlier (in x^0) than the preparation point; allowed, only flagged.
    bool before_preparation = false;
};

/// True when `next` lies in the closed backward light cone of `prev` and is
/// not the same point, which the weak causal order forbids.
bool in_backward_cone(const Vec4& prev, const Vec4& next);
/// Throws DomainError naming the first offending pair.
void check_event_order(std::span<const EventRecord> events);

/// Writes the event log: header row, then one comma-separated line per
/// record with 17 significant digits.
void write_event_csv(std::ostream& os, std::span<const EventRecord> events);

// ---------------------------------------------------------------------------
// Ideal measurements

/// M = sum_j lambda_j |Phi_j><Phi_j| with orthonormal Phi_j. Outcome index
/// `size()` is the complement 1 - sum_j |Phi_j><Phi_j| on the simulated
/// subspace, carrying `complement_eigenvalue`.
struct Observable {
    std::vector<double> eigenvalues;
    std::vector<ModeListState> projectors;
    double complement_eigenvalue = 0.0;

    std::size_t size() const { return projectors.size(); }
    /// Throws DomainError unless <Phi_j|Phi_k> = delta_jk within tol.
    void validate(double tol = 1e-10) const;
};

struct OutcomeSplit {
    std::vector<cplx> amplitudes;  ///< <Phi_j|Psi>
    ModeListState complement;      ///< Psi - sum_j Phi_j <Phi_j|Psi>
    std::vector<double> probabilities;  ///< size() + 1 entries, complement last
};

/// Born probabilities of every outcome. The complement probability is the
/// squared norm of the residual, computed directly. Throws NumericalError
/// when the total differs from ||Psi||^2 by more than 1e-8.
OutcomeSplit measurement_probabilities(const ModeListState& psi, const Observable& obs);
/// Normalized post-measurement state for outcome j.
ModeListState collapse(const OutcomeSplit& split, const Observable& obs, std::size_t outcome);

struct ScheduledMeasurement {
    double tau = 0.0;
    Vec4 z = Vec4::Zero();
    Observable observable;
};

struct Preparation {
    double tau = 0.0;
    Vec4 point = Vec4::Zero();
};

struct SystemState {
    double tau = 0.0;
    int omega = 0;
    ModeListState psi;
};

struct MeasurementRun {
    std::vector<SystemState> trajectory;  ///< state after preparation and after each measurement
    std::vector<EventRecord> events;
};

/// Validates ordering of proper times and of the event points, starting
/// from the preparation point.
void validate_schedule(const Preparation& prep, std::span<const ScheduledMeasurement> schedule);

/// One draw per measurement, outcome chosen from cumulative probabilities.
MeasurementRun run_measurement_sequence(const ModeListState& psi0, const Preparation& prep,
                                        std::span<const ScheduledMeasurement> schedule, RandomStream& rng);

/// Probability of every outcome path through the schedule.
struct OutcomePath {
    std::vector<std::size_t> outcomes;
    double probability = 0.0;
};
std::vector<OutcomePath> outcome_distribution(const ModeListState& psi0,
                                              std::span<const ScheduledMeasurement> schedule);

/// Slice-space observable m = sum_j lambda_j |phi_j><phi_j| at lab time t,
/// phi_j orthonormal in L2 on the slice.
struct SliceObservable {
    double time = 0.0;
    std::vector<double> eigenvalues;
    std::vector<GridSliceState> projectors;
};

/// Orthonormalized Gaussian windows exp(-|x - c|^2 / (4 w^2)) * spinor on
/// the lab slice at time t (L2 Gram-Schmidt in the given order).
SliceObservable window_observable(const HyperplaneGrid& slice_grid, double mass, std::span<const Vec3> centers,
                                  double width, const Spinor& spinor);

/// The observable U^{-1}_t m U_t on the solution space: each window is
/// lifted from its slice.
Observable covariant_observable(const SliceObservable& m);

/// Textbook reduction in the lab frame: evolve the slice with exp(-i t H),
/// take L2 overlaps at each measurement time, reduce, continue.
std::vector<OutcomePath> standard_reduction_reference(const GridSliceState& psi0,
                                                      std::span<const SliceObservable> schedule);

// ---------------------------------------------------------------------------
// Continuous detection

enum class RearmPolicy { keep, drop, replace };
enum class IntegratorMethod { dormand_prince, split_step };

struct IntegratorOptions {
    IntegratorMethod method = IntegratorMethod::dormand_prince;
    /// Local error tolerance (absolute and relative) in the Hilbert norm.
    double tolerance = 1e-10;
    /// Fixed step of the split-step method; initial and maximum step otherwise.
    double dtau = 0.05;
    /// Width in tau of the bracket returned by the jump-time search.
    double jump_tolerance = 1e-12;
    std::size_t max_steps = 1000000;
};

/// Everything that fixes the deterministic part of a detection run.
struct DetectionSetup {
    double mass = 1.0;
    double c = 1.0;
    GridSpec grid;
    Preparation preparation;
    /// Worldlines in the scenario's coordinates; `frame` maps the frame in
    /// which the couplings are lab-slice multiplications onto them.
    std::vector<DetectorSpec> detectors;
    LorentzTransform frame;
    double tau_max = 10.0;
    IntegratorOptions integrator;
    RearmPolicy rearm = RearmPolicy::keep;
    std::vector<DetectorSpec> replacement;  ///< detector set after a detection under `replace`
    std::optional<std::size_t> max_events;

    /// Throws DomainError: invalid detector, start condition violated,
    /// non-positive steps, tau_max before preparation.
    void validate() const;
};

/// Each detector must start on the backward light cone of the preparation
/// point: ||x0 - z(tau0)||^2 = 0 (relative tolerance tol) with z^0 <= x0^0.
void check_start_condition(const Preparation& prep, const DetectorSpec& d, double tol = 1e-9);

struct SurvivalSample {
    double tau = 0.0;
    double norm_sq = 1.0;      ///< ||Psi_tau||^2, reset to 1 after each detection
    double accumulated = 0.0;  ///< integral of <Psi|Lambda Psi> since the last reset
};

struct DetectionRun {
    std::vector<EventRecord> events;  ///< preparation first
    std::vector<SurvivalSample> survival;  ///< accepted steps
    QuantumState final_state;
    double final_tau = 0.0;
    int omega = 0;
    /// max over accepted steps of |1 - ||Psi||^2 - integral of rate|.
    double bookkeeping_defect = 0.0;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
};

/// psi0 is either a mode list expressed in setup.frame (c = 1) or a lab
/// slice on setup.grid (identity frame). Draw order per detection: the
/// threshold r, then the detector choice.
DetectionRun run_detection(const QuantumState& psi0, const DetectionSetup& setup, RandomStream& rng);

/// ||Psi_tau||^2 without jumps at the requested proper times (ascending).
std::vector<double> survival_curve(const QuantumState& psi0, const DetectionSetup& setup,
                                   std::span<const double> taus);

struct EnsembleResult {
    std::vector<EventRecord> first_events;  ///< per trajectory; kind preparation when undetected
    std::size_t undetected = 0;
};

/// First detections of `trajectories` runs seeded with RandomStream::derive.
/// The deterministic evolution is integrated once and shared; each
/// trajectory reproduces run_detection(max_events = 1) exactly.
EnsembleResult run_detection_ensemble(const QuantumState& psi0, const DetectionSetup& setup, std::uint64_t seed,
                                      std::size_t trajectories, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Scenario maps

struct DetectionScenario {
    QuantumState psi0;
    DetectionSetup setup;
};

struct MeasurementScenario {
    ModeListState psi0;
    Preparation preparation;
    std::vector<ScheduledMeasurement> schedule;
};

/// Same physics seen from the frame related by t: state W psi, points t(z).
DetectionScenario transform_scenario(const DetectionScenario& s, const LorentzTransform& t);
MeasurementScenario transform_scenario(const MeasurementScenario& s, const LorentzTransform& t);

/// Charge-conjugated data; couplings are real multiplications and map to
/// themselves.
DetectionScenario conjugate_scenario(const DetectionScenario& s);
MeasurementScenario conjugate_scenario(const MeasurementScenario& s);

struct NonrelativisticReport {
    std::vector<double> survival;
    double lower_fraction = 0.0;  ///< norm fraction in the lower spinor components
    bool limit_warning = false;   ///< lower_fraction above 1e-3
};

/// Pauli reference: upper two components evolved with k^2 / 2m and damped by
/// -1/2 sum g^2, stepped like the split-step method with setup.integrator.dtau.
NonrelativisticReport nonrelativistic_reference(const QuantumState& psi0, const DetectionSetup& setup,
                                                std::span<const double> taus);

}  // namespace releqt
