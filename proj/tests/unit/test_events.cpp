#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "generators.hpp"
#include "releqt/events.hpp"

namespace releqt {
namespace {

// Reference values from an independent SplitMix64 implementation.
TEST(RandomStream, MatchesSplitMix64) {
    RandomStream a(0);
    EXPECT_EQ(a.next_u64(), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(a.next_u64(), 0x6e789e6aa1b965f4ULL);
    EXPECT_EQ(a.next_u64(), 0x06c45d188009454fULL);
    RandomStream b(42);
    EXPECT_DOUBLE_EQ(b.uniform(), 0.7415648787718234);
    EXPECT_EQ(b.counter(), 1u);
}

TEST(RandomStream, ReproducibleAndOpenInterval) {
    RandomStream a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_EQ(u, b.uniform());
        EXPECT_GT(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
    EXPECT_NE(RandomStream::derive(7, 0), RandomStream::derive(7, 1));
    EXPECT_EQ(RandomStream::derive(7, 3), RandomStream::derive(7, 3));
}

TEST(EventOrder, BackwardConeRule) {
    const Vec4 e(1, 0, 0, 0);
    EXPECT_TRUE(in_backward_cone(e, Vec4(0, 0, 0, 0)));
    EXPECT_TRUE(in_backward_cone(e, Vec4(0, 1, 0, 0)));   // on the cone
    EXPECT_FALSE(in_backward_cone(e, Vec4(0, 2, 0, 0)));  // spacelike
    EXPECT_FALSE(in_backward_cone(e, Vec4(2, 0, 0, 0)));  // future
    EXPECT_FALSE(in_backward_cone(e, e));
    EXPECT_TRUE(in_backward_cone(e, Vec4(1, 0, 0, 0) + Vec4(-1e-9, 0, 0, 0)));

    std::vector<EventRecord> ev(2);
    ev[0].z = e;
    ev[1].tau = 1.0;
    ev[1].z = Vec4(0.5, 0, 0, 0);
    EXPECT_THROW(check_event_order(ev), DomainError);
    ev[1].z = Vec4(0.5, 3, 0, 0);
    EXPECT_NO_THROW(check_event_order(ev));
}

TEST(EventLog, CsvFormat) {
    EventRecord e;
    e.kind = EventKind::detection;
    e.tau = 1.0 / 3.0;
    e.z = Vec4(0.1, 0.2, 0.3, 0.4);
    e.omega_after = 2;
    e.detail = 2;
    e.seed = 42;
    e.rng_draws_consumed = 2;
    std::ostringstream os;
    write_event_csv(os, std::span<const EventRecord>(&e, 1));
    EXPECT_EQ(os.str(),
              "kind,tau,z0,z1,z2,z3,omega_before,omega_after,detail,seed,draws_consumed\n"
              "detection,0.33333333333333331,0.10000000000000001,0.20000000000000001,0.29999999999999999,"
              "0.40000000000000002,0,2,2,42,2\n");
}

// ---------------------------------------------------------------------------

constexpr double kMass = 1.0;
constexpr double kRadius = 6.0;
constexpr int kPoints = 16;

ModeListState packet(const Vec3& k0, const Vec3& x0, double sigma = 0.6) {
    GaussianPacket spec;
    spec.momentum = k0;
    spec.center = x0;
    spec.sigma_p = sigma;
    spec.cutoff_sigmas = 5.0;
    return gaussian_packet(spec, kMass, 2.0 * kRadius);
}

/// Two orthonormal packets and the observable they span.
Observable two_packet_observable() {
    ModeListState a = packet(Vec3(0.3, 0, 0), Vec3(-1.5, 0, 0));
    ModeListState b = packet(Vec3(-0.3, 0, 0), Vec3(1.5, 0, 0));
    const cplx ab = hilbert_inner(a, b);
    b = linear_combination(1.0, b, -ab, a);
    const double nb = hilbert_norm(b);
    for (Mode& m : b.modes) m.amp /= nb;
    Observable obs;
    obs.eigenvalues = {-1.0, 1.0};
    obs.projectors = {a, b};
    return obs;
}

ModeListState normalized(ModeListState s) {
    const double n = hilbert_norm(s);
    for (Mode& m : s.modes) m.amp /= n;
    return s;
}

TEST(Measurement, EigenstateGivesCertainOutcome) {
    const Observable obs = two_packet_observable();
    obs.validate();
    const ModeListState psi = obs.projectors[0];
    const std::vector<ScheduledMeasurement> sched{{1.0, Vec4(1, 0, 0, 0), obs}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed);
        const MeasurementRun run = run_measurement_sequence(psi, {}, sched, rng);
        ASSERT_EQ(run.events.size(), 2u);
        EXPECT_EQ(run.events[1].detail, 1);
        EXPECT_NEAR(std::abs(hilbert_inner(run.trajectory.back().psi, psi)), 1.0, 1e-12);
    }
}

TEST(Measurement, EqualSuperpositionFrequency) {
    const Observable obs = two_packet_observable();
    const ModeListState psi = normalized(linear_combination(1.0, obs.projectors[0], 1.0, obs.projectors[1]));
    const std::vector<ScheduledMeasurement> sched{{1.0, Vec4(1, 0, 0, 0), obs}};
    int first = 0;
    const int runs = 10000;
    for (int i = 0; i < runs; ++i) {
        RandomStream rng(RandomStream::derive(5, static_cast<std::uint64_t>(i)));
        const MeasurementRun run = run_measurement_sequence(psi, {}, sched, rng);
        first += run.events[1].detail == 1;
        EXPECT_NE(run.events[1].detail, 3);
    }
    EXPECT_NEAR(static_cast<double>(first) / runs, 0.5, 0.02);
}

TEST(Measurement, RepeatedMeasurementIsRepeatable) {
    const Observable obs = two_packet_observable();
    const ModeListState extra = packet(Vec3(0, 0.4, 0), Vec3(0, 0, 1));
    const ModeListState psi = normalized(
        linear_combination(1.0, linear_combination(1.0, obs.projectors[0], cplx(0, 0.7), obs.projectors[1]), 0.5, extra));
    const std::vector<ScheduledMeasurement> sched{{1.0, Vec4(1, 0, 0, 0), obs}, {2.0, Vec4(2, 0, 0, 0), obs}};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RandomStream rng(seed);
        const MeasurementRun run = run_measurement_sequence(psi, {}, sched, rng);
        EXPECT_EQ(run.events[1].detail, run.events[2].detail);
        EXPECT_EQ(run.events[2].rng_draws_consumed, 2u);
    }
    double total = 0.0;
    for (const OutcomePath& p : outcome_distribution(psi, sched)) {
        total += p.probability;
        if (p.outcomes[0] != p.outcomes[1]) EXPECT_LT(p.probability, 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Measurement, ComplementCarriesTheRest) {
    const Observable obs = two_packet_observable();
    const ModeListState extra = packet(Vec3(0, 0.4, 0), Vec3(0, 0, 1));
    const ModeListState psi = normalized(linear_combination(1.0, obs.projectors[0], 0.8, extra));
    const OutcomeSplit split = measurement_probabilities(psi, obs);
    ASSERT_EQ(split.probabilities.size(), 3u);
    EXPECT_NEAR(split.probabilities[2], 1.0 - split.probabilities[0] - split.probabilities[1], 1e-10);
    EXPECT_GT(split.probabilities[2], 0.01);
    const ModeListState c = collapse(split, obs, 2);
    EXPECT_NEAR(hilbert_norm(c), 1.0, 1e-12);
    EXPECT_LT(std::abs(hilbert_inner(obs.projectors[0], c)), 1e-12);
}

TEST(Measurement, RejectsBadObservablesAndSchedules) {
    Observable obs = two_packet_observable();
    obs.projectors[1] = obs.projectors[0];
    EXPECT_THROW(obs.validate(), DomainError);
    const Observable good = two_packet_observable();
    const std::vector<ScheduledMeasurement> backwards{{1.0, Vec4(-1, 0, 0, 0), good}};
    EXPECT_THROW(validate_schedule({}, backwards), DomainError);
    const std::vector<ScheduledMeasurement> unordered{{1.0, Vec4(1, 0, 0, 0), good}, {0.5, Vec4(2, 0, 0, 0), good}};
    EXPECT_THROW(validate_schedule({}, unordered), DomainError);
}

TEST(Measurement, ChargeConjugationPreservesProbabilities) {
    MeasurementScenario s;
    const Observable obs = two_packet_observable();
    const ModeListState extra = packet(Vec3(0, 0.4, 0), Vec3(0, 0, 1));
    s.psi0 = normalized(linear_combination(0.6, obs.projectors[0], cplx(0.3, 0.5), extra));
    s.schedule = {{1.0, Vec4(1, 0, 0, 0), obs}};
    const MeasurementScenario c = conjugate_scenario(s);
    const auto p = outcome_distribution(s.psi0, s.schedule);
    const auto pc = outcome_distribution(c.psi0, c.schedule);
    const auto pcc = outcome_distribution(conjugate_scenario(c).psi0, conjugate_scenario(c).schedule);
    ASSERT_EQ(p.size(), pc.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_NEAR(pc[i].probability, p[i].probability, 1e-10);
        EXPECT_EQ(pcc[i].probability, p[i].probability);
    }
}

TEST(Measurement, TransformedScenarioSameProbabilities) {
    MeasurementScenario s;
    const Observable obs = two_packet_observable();
    s.psi0 = normalized(linear_combination(0.6, obs.projectors[0], cplx(0.3, 0.5), obs.projectors[1]));
    s.schedule = {{1.0, Vec4(1, 0, 0, 0), obs}};
    const LorentzTransform t = LorentzTransform::translation(Vec4(0.3, 1, 0, 0)) * LorentzTransform::boost(1, 0.4);
    const MeasurementScenario m = transform_scenario(s, t);
    const auto p = outcome_distribution(s.psi0, s.schedule);
    const auto pm = outcome_distribution(m.psi0, m.schedule);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(pm[i].probability, p[i].probability, 1e-12);
    EXPECT_LT((m.schedule[0].z - t.apply(s.schedule[0].z)).norm(), 1e-14);
}

TEST(StandardReduction, MatchesCovariantAlgorithm) {
    const ModeListState psi = [] {
        GaussianPacket spec;
        spec.momentum = Vec3(0.4, 0.1, 0);
        spec.center = Vec3(-0.5, 0, 0);
        spec.sigma_p = 0.5;
        spec.cutoff_sigmas = 5.0;
        return gaussian_packet(spec, kMass, 16.0);
    }();
    const GridSliceState slice = restrict_to(psi, HyperplaneParams::lab(0.0), 8.0, 24);
    const std::vector<Vec3> c1{Vec3(-0.5, 0, 0), Vec3(1.0, 0, 0)};
    const std::vector<Vec3> c2{Vec3(0.5, 0, 0), Vec3(0, 1.2, 0)};
    const Spinor up = Spinor::UnitX();
    std::vector<SliceObservable> slices{
        window_observable(make_grid(HyperplaneParams::lab(0.6), 8.0, 24), kMass, c1, 0.8, up),
        window_observable(make_grid(HyperplaneParams::lab(1.4), 8.0, 24), kMass, c2, 0.8, up)};
    std::vector<ScheduledMeasurement> sched;
    for (const SliceObservable& m : slices)
        sched.push_back({m.time, Vec4(m.time, 0, 0, 0), covariant_observable(m)});
    const auto cov = outcome_distribution(psi, sched);
    const auto ref = standard_reduction_reference(slice, slices);
    ASSERT_EQ(cov.size(), ref.size());
    double total = 0.0;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        EXPECT_EQ(cov[i].outcomes, ref[i].outcomes);
        EXPECT_NEAR(cov[i].probability, ref[i].probability, 1e-6);
        total += ref[i].probability;
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(StandardReduction, ZeroTimeIsPlainOverlap) {
    const ModeListState psi = [] {
        GaussianPacket spec;
        spec.momentum = Vec3(0.4, 0.1, 0);
        spec.center = Vec3(-0.5, 0, 0);
        spec.sigma_p = 0.5;
        spec.cutoff_sigmas = 5.0;
        return gaussian_packet(spec, kMass, 16.0);
    }();
    const GridSliceState slice = restrict_to(psi, HyperplaneParams::lab(0.0), 8.0, 24);
    const std::vector<Vec3> centers{Vec3(-0.5, 0, 0)};
    const std::vector<SliceObservable> m{
        window_observable(slice.grid, kMass, centers, 0.8, Spinor::UnitX())};
    const auto ref = standard_reduction_reference(slice, m);
    const double direct = std::norm(inner_product_on(slice.grid, m[0].projectors[0].values, slice.values));
    EXPECT_NEAR(ref[0].probability, direct, 1e-15);
    EXPECT_NEAR(ref[1].probability, 1.0 - direct, 1e-10);
}

// ---------------------------------------------------------------------------

/// Detector at rest at x whose clock starts on the backward light cone of
/// the origin at tau = 0.
DetectorSpec resting_detector(int id, const Vec3& x, double kappa, double width) {
    DetectorSpec d;
    d.id = id;
    d.kappa = kappa;
    d.width = width;
    const double r = x.norm();
    d.worldline = {{0.0, Vec4(-r, x[0], x[1], x[2])}, {1.0, Vec4(1.0 - r, x[0], x[1], x[2])}};
    return d;
}

DetectionSetup small_setup() {
    DetectionSetup s;
    s.mass = kMass;
    s.grid = {kRadius, kPoints, Vec3::Zero()};
    s.tau_max = 6.0;
    s.integrator.dtau = 0.1;
    return s;
}

TEST(Detection, UniformDetectorAnalyticJumpTime) {
    DetectionSetup s = small_setup();
    s.detectors = {resting_detector(4, Vec3::Zero(), 1.3, std::numeric_limits<double>::infinity())};
    s.max_events = 1;
    s.tau_max = 50.0;
    const QuantumState psi = packet(Vec3(0.2, 0, 0), Vec3::Zero());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed);
        const DetectionRun run = run_detection(psi, s, rng);
        const double r = RandomStream(seed).uniform();
        ASSERT_EQ(run.events.size(), 2u);
        EXPECT_EQ(run.events[1].detail, 4);
        EXPECT_NEAR(run.events[1].tau, -std::log(1.0 - r) / (1.3 * 1.3), 1e-8);
        EXPECT_LE(run.bookkeeping_defect, 2.0 * s.integrator.tolerance);
        EXPECT_EQ(run.events[1].rng_draws_consumed, 2u);
    }
}

TEST(Detection, NoDetectorsNoEvents) {
    DetectionSetup s = small_setup();
    const QuantumState psi = packet(Vec3(0.2, 0, 0), Vec3::Zero());
    RandomStream rng(1);
    const DetectionRun run = run_detection(psi, s, rng);
    EXPECT_EQ(run.events.size(), 1u);
    EXPECT_NEAR(hilbert_norm(std::get<ModeListState>(run.final_state)), 1.0, 1e-12);
    const std::vector<double> taus{0.0, 1.0, 3.0};
    for (double v : survival_curve(psi, s, taus)) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Detection, StartConditionEnforced) {
    DetectionSetup s = small_setup();
    DetectorSpec d = resting_detector(1, Vec3(2, 0, 0), 1.0, 0.8);
    for (WorldlineNode& nd : d.worldline) nd.z[0] += 0.5;  // starts inside the forward cone
    s.detectors = {d};
    EXPECT_THROW(s.validate(), DomainError);
    for (WorldlineNode& nd : s.detectors[0].worldline) nd.z[0] -= 0.5;
    EXPECT_NO_THROW(s.validate());
}

DetectionSetup two_detector_setup(double kappa) {
    DetectionSetup s = small_setup();
    s.detectors = {resting_detector(1, Vec3(-1.5, 0, 0), kappa, 0.8), resting_detector(2, Vec3(1.5, 0, 0), kappa, 0.8)};
    return s;
}

TEST(Detection, SurvivalMonotoneAndBookkeeping) {
    DetectionSetup s = two_detector_setup(2.0);
    s.max_events = 3;
    const QuantumState psi = packet(Vec3(0.3, 0, 0), Vec3::Zero());
    RandomStream rng(11);
    const DetectionRun run = run_detection(psi, s, rng);
    ASSERT_GE(run.events.size(), 2u);
    EXPECT_LE(run.bookkeeping_defect, 2.0 * s.integrator.tolerance);
    for (std::size_t i = 1; i < run.survival.size(); ++i)
        if (run.survival[i].norm_sq != 1.0) EXPECT_LE(run.survival[i].norm_sq, run.survival[i - 1].norm_sq + 1e-12);
    EXPECT_NO_THROW(check_event_order(run.events));
}

TEST(Detection, CouplingScaleChangesTimesNotChoices) {
    // With uniform couplings the choice probabilities are kappa_k^2 / sum.
    DetectionSetup a = small_setup();
    const double inf = std::numeric_limits<double>::infinity();
    a.detectors = {resting_detector(1, Vec3::Zero(), 0.6, inf), resting_detector(2, Vec3::Zero(), 0.8, inf)};
    a.max_events = 1;
    a.tau_max = 80.0;
    DetectionSetup b = a;
    for (DetectorSpec& d : b.detectors) d.kappa *= 2.0;
    const QuantumState psi = packet(Vec3(0.2, 0, 0), Vec3::Zero());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RandomStream ra(seed), rb(seed);
        const DetectionRun x = run_detection(psi, a, ra);
        const DetectionRun y = run_detection(psi, b, rb);
        EXPECT_EQ(x.events[1].detail, y.events[1].detail);
        EXPECT_NEAR(y.events[1].tau, x.events[1].tau / 4.0, 1e-8);
    }
}

TEST(Detection, BoostedScenarioSameEvents) {
    DetectionScenario plain{packet(Vec3(0.3, 0, 0), Vec3::Zero()), two_detector_setup(2.0)};
    plain.setup.max_events = 2;
    plain.setup.tau_max = 4.0;
    const LorentzTransform t = LorentzTransform::translation(Vec4(0.2, 0.5, -0.3, 0.1)) * LorentzTransform::boost(1, 0.5);
    const DetectionScenario moved = transform_scenario(plain, t);
    for (std::uint64_t seed : {3u, 8u}) {
        RandomStream ra(seed), rb(seed);
        const DetectionRun x = run_detection(plain.psi0, plain.setup, ra);
        const DetectionRun y = run_detection(moved.psi0, moved.setup, rb);
        ASSERT_EQ(x.events.size(), y.events.size());
        for (std::size_t i = 0; i < x.events.size(); ++i) {
            EXPECT_EQ(x.events[i].detail, y.events[i].detail);
            EXPECT_NEAR(x.events[i].tau, y.events[i].tau, 1e-7);
            EXPECT_LT((t.apply(x.events[i].z) - y.events[i].z).norm(), 1e-9);
        }
    }
}

TEST(Detection, ConjugatedScenarioSameEvents) {
    DetectionScenario plain{packet(Vec3(0.3, 0.1, 0), Vec3::Zero()), two_detector_setup(2.0)};
    plain.setup.max_events = 2;
    const DetectionScenario conj = conjugate_scenario(plain);
    RandomStream ra(21), rb(21);
    const DetectionRun x = run_detection(plain.psi0, plain.setup, ra);
    const DetectionRun y = run_detection(conj.psi0, conj.setup, rb);
    ASSERT_EQ(x.events.size(), y.events.size());
    for (std::size_t i = 0; i < x.events.size(); ++i) {
        EXPECT_EQ(x.events[i].detail, y.events[i].detail);
        EXPECT_NEAR(x.events[i].tau, y.events[i].tau, 1e-10);
    }
}

TEST(Detection, EnsembleReproducesSingleRuns) {
    DetectionSetup s = two_detector_setup(2.0);
    s.max_events = 1;
    const QuantumState psi = packet(Vec3(0.3, 0, 0), Vec3::Zero());
    const EnsembleResult ens = run_detection_ensemble(psi, s, 99, 40, 2);
    for (std::size_t i = 0; i < 40; i += 7) {
        RandomStream rng(RandomStream::derive(99, i));
        const DetectionRun run = run_detection(psi, s, rng);
        const EventRecord& a = ens.first_events[i];
        if (run.events.size() == 1) {
            EXPECT_EQ(a.kind, EventKind::preparation);
            continue;
        }
        const EventRecord& b = run.events[1];
        EXPECT_EQ(a.tau, b.tau);
        EXPECT_EQ(a.detail, b.detail);
        EXPECT_EQ(a.z, b.z);
        EXPECT_EQ(a.rng_draws_consumed, b.rng_draws_consumed);
    }
}

TEST(Detection, SplitStepAgreesWithDormandPrince) {
    DetectionSetup a = two_detector_setup(1.5);
    a.tau_max = 2.0;
    DetectionSetup b = a;
    b.integrator.method = IntegratorMethod::split_step;
    b.integrator.dtau = 0.01;
    const QuantumState psi = packet(Vec3(0.3, 0, 0), Vec3::Zero());
    const std::vector<double> taus{0.5, 1.0, 1.5, 2.0};
    const auto x = survival_curve(psi, a, taus);
    const auto y = survival_curve(psi, b, taus);
    for (std::size_t i = 0; i < taus.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-4);
    EXPECT_LT(x.back(), 0.95);
}

TEST(Nonrelativistic, UniformCouplingIsExponential) {
    DetectionSetup s = small_setup();
    s.c = 20.0;
    s.detectors = {resting_detector(1, Vec3::Zero(), 0.7, std::numeric_limits<double>::infinity())};
    for (WorldlineNode& nd : s.detectors[0].worldline) nd.z[0] *= s.c;
    s.integrator.method = IntegratorMethod::split_step;
    s.integrator.dtau = 0.05;
    const auto lat = SpectralLattice::for_slice(kMass, s.c, kRadius, kPoints, Vec3::Zero());
    GaussianPacket spec;
    spec.sigma_p = 0.6;
    spec.cutoff_sigmas = 5.0;
    const std::vector<cplx> coeffs = gaussian_coefficients(spec, *lat);
    GridSliceState slice(make_grid(HyperplaneParams::lab(0.0), kRadius, kPoints), kMass, s.c);
    std::vector<cplx> vals(coeffs.size());
    lat->to_values(coeffs, vals);
    slice.values = lat->to_slice(vals);
    const std::vector<double> taus{0.5, 1.0, 2.0};
    const NonrelativisticReport nr = nonrelativistic_reference(slice, s, taus);
    const std::vector<double> rel = survival_curve(slice, s, taus);
    for (std::size_t i = 0; i < taus.size(); ++i) {
        EXPECT_NEAR(nr.survival[i], std::exp(-0.49 * taus[i]), 1e-12);
        EXPECT_NEAR(rel[i], std::exp(-0.49 * taus[i]), 1e-12);
    }
    EXPECT_FALSE(nr.limit_warning);
}

}  // namespace
}  // namespace releqt
