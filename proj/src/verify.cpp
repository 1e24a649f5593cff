#include "releqt/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>

#include "releqt/algebra.hpp"
#include "releqt/events.hpp"
#include "releqt/states.hpp"

namespace releqt {

bool CheckResult::passed() const {
    if (!error.empty() || measures.empty()) return false;
    return std::all_of(measures.begin(), measures.end(), [](const Measure& m) { return m.passed(); });
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Seeded generator for the randomized checks.
class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    Vec3 vec3(double s) { return {uniform(-s, s), uniform(-s, s), uniform(-s, s)}; }
    Vec4 vec4(double s) { return {uniform(-s, s), uniform(-s, s), uniform(-s, s), uniform(-s, s)}; }
    Vec3 ball(double bound) {
        Vec3 v;
        do v = vec3(bound);
        while (v.norm() >= bound);
        return v;
    }
    Vec3 direction() {
        Vec3 v;
        do v = vec3(1.0);
        while (v.norm() < 1e-3 || v.norm() > 1.0);
        return v.normalized();
    }
    Spinor spinor() {
        Spinor s;
        for (int i = 0; i < 4; ++i) s[i] = cplx(uniform(-1, 1), uniform(-1, 1));
        return s;
    }

    /// Product of one to four elementary boosts, rotations and translations.
    LorentzTransform transform(double max_rapidity, bool with_shift) {
        LorentzTransform t;
        const int steps = integer(1, 4);
        for (int k = 0; k < steps; ++k) {
            switch (integer(0, 2)) {
                case 0: t = LorentzTransform::boost(integer(1, 3), uniform(-max_rapidity, max_rapidity)) * t; break;
                case 1: t = LorentzTransform::rotation(ball(3.0)) * t; break;
                default:
                    if (with_shift) t = LorentzTransform::translation(vec4(2.0)) * t;
                    break;
            }
        }
        return t;
    }

    /// On-shell mode list with distinct keys, both energy signs, unit norm.
    ModeListState modes(double mass, double period, int count, int box) {
        ModeListState s;
        s.mass = mass;
        s.period = period;
        const double dk = 2.0 * pi / period;
        for (int attempt = 0; static_cast<int>(s.modes.size()) < count && attempt < 100 * count; ++attempt) {
            Mode m;
            m.key = {integer(-box, box), integer(-box, box), integer(-box, box)};
            m.sign = integer(0, 1) ? 1 : -1;
            const bool dup = std::any_of(s.modes.begin(), s.modes.end(),
                                         [&](const Mode& o) { return o.key == m.key && o.sign == m.sign; });
            if (dup) continue;
            const Vec3 k = dk * Vec3(m.key[0], m.key[1], m.key[2]);
            const double e = std::sqrt(k.squaredNorm() + mass * mass);
            const Mat4c proj = 0.5 * (Mat4c::Identity() + (m.sign / e) * momentum_hamiltonian(k, mass));
            m.p = Vec4(e, m.sign * k[0], m.sign * k[1], m.sign * k[2]);
            m.weight = dk * dk * dk;
            m.amp = proj * spinor();
            s.modes.push_back(m);
        }
        s.canonicalize();
        const double n = hilbert_norm(s);
        for (Mode& m : s.modes) m.amp /= n;
        return s;
    }

private:
    std::mt19937_64 rng_;
};

double max_abs(const Mat4c& m) { return m.cwiseAbs().maxCoeff(); }

ModeListState scaled(ModeListState s, cplx f) {
    for (Mode& m : s.modes) m.amp *= f;
    return s;
}

ModeListState unit(const ModeListState& s) { return scaled(s, 1.0 / hilbert_norm(s)); }

ModeListState packet(double mass, double period, const Vec3& k0, const Vec3& x0, double sigma, double cutoff,
                     const Spinor& pol = Spinor::UnitX()) {
    GaussianPacket spec;
    spec.momentum = k0;
    spec.center = x0;
    spec.sigma_p = sigma;
    spec.cutoff_sigmas = cutoff;
    spec.polarization = pol;
    return gaussian_packet(spec, mass, period);
}

/// Detector resting at x whose clock starts on the backward light cone of
/// the origin at tau = 0; c converts proper time to the x^0 coordinate.
DetectorSpec resting_detector(int id, const Vec3& x, double kappa, double width, double c = 1.0) {
    DetectorSpec d;
    d.id = id;
    d.kappa = kappa;
    d.width = width;
    const double r = x.norm();
    d.worldline = {{0.0, Vec4(-r, x[0], x[1], x[2])}, {1.0, Vec4(c - r, x[0], x[1], x[2])}};
    return d;
}

// ---------------------------------------------------------------------------
// Reference scenarios shared by several checks.

constexpr double kPdpMass = 1.0;
constexpr double kPdpRadius = 6.0;
constexpr int kPdpPoints = 16;

DetectionSetup pdp_setup(const Tolerances& tol) {
    DetectionSetup s;
    s.mass = kPdpMass;
    s.grid = {kPdpRadius, kPdpPoints, Vec3::Zero()};
    s.tau_max = 6.0;
    s.integrator.tolerance = tol.integrator;
    s.integrator.jump_tolerance = tol.jump_bracket;
    s.integrator.dtau = 0.1;
    return s;
}

ModeListState pdp_packet(const Vec3& k0) {
    return packet(kPdpMass, 2.0 * kPdpRadius, k0, Vec3::Zero(), 0.6, 5.0);
}

/// Two Gaussian detectors mirror-symmetric about the origin.
DetectionScenario two_detector_scenario(const Tolerances& tol, const Vec3& k0) {
    DetectionScenario s{pdp_packet(k0), pdp_setup(tol)};
    s.setup.detectors = {resting_detector(1, Vec3(-1.5, 0, 0), 2.0, 0.8),
                         resting_detector(2, Vec3(1.5, 0, 0), 2.0, 0.8)};
    return s;
}

/// Two orthonormal packets forming an observable with eigenvalues -1 and 1.
Observable two_packet_observable() {
    const double period = 2.0 * kPdpRadius;
    const ModeListState a = packet(kPdpMass, period, Vec3(0.3, 0, 0), Vec3(-1.5, 0, 0), 0.6, 5.0);
    const ModeListState b = packet(kPdpMass, period, Vec3(-0.3, 0, 0), Vec3(1.5, 0, 0), 0.6, 5.0);
    Observable obs;
    obs.eigenvalues = {-1.0, 1.0};
    obs.projectors = {a, unit(linear_combination(1.0, b, -hilbert_inner(a, b), a))};
    return obs;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---------------------------------------------------------------------------
// Checks.

CheckResult frame_independence(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    const Stopwatch clock;
    // sigma_p = 0.2 m. The box holds the packet on planes tilted up to
    // |alpha| = 0.75, where the far edge sits at x^0 = 0.75 R and the packet
    // has spread; the period keeps periodic images outside the box.
    const double mass = 1.0, sigma = 0.2, radius = 30.0, period = 80.0;
    const ModeListState f1 = packet(mass, period, Vec3::Zero(), Vec3::Zero(), sigma, 8.0);
    const ModeListState f2 = packet(mass, period, Vec3(0.15, -0.1, 0.05), Vec3(0.6, -0.4, 0.3), sigma, 8.0,
                                    Spinor(1.0, 0.0, 0.0, cplx(0.0, 1.0)));
    const cplx exact = hilbert_inner(f1, f2);
    const double scale = hilbert_norm(f1) * hilbert_norm(f2);

    Sampler gen(1001);
    double worst = 0.0, worst_tail = 0.0, worst_refine = 0.0, worst64 = 0.0, worst96 = 0.0;
    const double ratio = std::pow(64.0 / 96.0, 2);
    for (double a : {0.0, 0.25, 0.5, 0.75}) {
        const Vec3 alpha = a * gen.direction();
        const HyperplaneParams params = HyperplaneParams::make(gen.vec4(1.0), alpha, gen.ball(pi));
        double err[2];
        int idx = 0;
        for (int n : {64, 96}) {
            const GridSliceState s1 = restrict_to(f1, params, radius, n);
            const GridSliceState s2 = restrict_to(f2, params, radius, n);
            const cplx ip = inner_product_on(s1.grid, s1.values, s2.values);
            err[idx++] = std::abs(ip - exact) / scale;
            worst_tail = std::max({worst_tail, tail_fraction(s1), tail_fraction(s2)});
        }
        worst = std::max({worst, err[0], err[1]});
        worst64 = std::max(worst64, err[0]);
        worst96 = std::max(worst96, err[1]);
        worst_refine = std::max(worst_refine, err[1] / std::max(ratio * err[0], tol.refinement_floor));
    }
    r.measures = {{"max_rel_error", worst, tol.frame_independence},
                  {"error_n64", worst64, kInf},
                  {"error_n96", worst96, kInf},
                  {"tail_fraction", worst_tail, tol.tail_fraction},
                  {"refinement_ratio_vs_n^-2", worst_refine, 1.0},
                  {"runtime_s", clock.seconds(), tol.runtime_frame_independence}};
    return r;
}

CheckResult unitarity(const VerifyOptions& opt) {
    CheckResult r;
    Sampler gen(1002);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const ModeListState a = gen.modes(1.0, 6.0, 12, 4);
        const ModeListState b = gen.modes(1.0, 6.0, 12, 4);
        const LorentzTransform t = gen.transform(1.5, true);
        const cplx before = hilbert_inner(a, b);
        const cplx after = hilbert_inner(poincare_transform(a, t), poincare_transform(b, t));
        worst = std::max(worst, std::abs(after - before) / (hilbert_norm(a) * hilbert_norm(b)));
    }
    r.measures = {{"max_rel_defect", worst, opt.tolerances.unitarity}};
    return r;
}

CheckResult conjugation(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    Sampler gen(1003);
    double pairing = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const ModeListState a = gen.modes(1.0, 6.0, 12, 4);
        const ModeListState b = gen.modes(1.0, 6.0, 12, 4);
        pairing = std::max(pairing, std::abs(hilbert_inner(charge_conjugate(a), charge_conjugate(b)) -
                                             std::conj(hilbert_inner(a, b))));
    }

    MeasurementScenario m;
    const Observable obs = two_packet_observable();
    const ModeListState extra = packet(kPdpMass, 2.0 * kPdpRadius, Vec3(0, 0.4, 0), Vec3(0, 0, 1), 0.6, 5.0);
    m.psi0 = unit(linear_combination(0.6, obs.projectors[0], cplx(0.3, 0.5),
                                     linear_combination(1.0, obs.projectors[1], 0.7, extra)));
    m.schedule = {{1.0, Vec4(1, 0, 0, 0), obs}, {2.0, Vec4(2, 0.5, 0, 0), obs}};
    const MeasurementScenario mc = conjugate_scenario(m);
    const auto p = outcome_distribution(m.psi0, m.schedule);
    const auto pc = outcome_distribution(mc.psi0, mc.schedule);
    double prob = p.size() == pc.size() ? 0.0 : kInf;
    for (std::size_t i = 0; i < std::min(p.size(), pc.size()); ++i)
        prob = std::max(prob, std::abs(p[i].probability - pc[i].probability));

    DetectionScenario d = two_detector_scenario(tol, Vec3(0.3, 0.1, 0));
    d.setup.max_events = 2;
    const DetectionScenario dc = conjugate_scenario(d);
    double tau = 0.0, ids = 0.0;
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        RandomStream ra(seed), rb(seed);
        const DetectionRun x = run_detection(d.psi0, d.setup, ra);
        const DetectionRun y = run_detection(dc.psi0, dc.setup, rb);
        if (x.events.size() != y.events.size()) {
            ids += 1.0;
            continue;
        }
        for (std::size_t i = 0; i < x.events.size(); ++i) {
            ids += x.events[i].detail != y.events[i].detail;
            tau = std::max(tau, std::abs(x.events[i].tau - y.events[i].tau));
        }
    }
    r.measures = {{"inner_product_defect", pairing, tol.conjugation},
                  {"probability_defect", prob, tol.conjugation},
                  {"pdp_tau_defect", tau, tol.conjugation},
                  {"pdp_id_mismatches", ids, 0.0}};
    return r;
}

CheckResult reduction_equivalence(const VerifyOptions& opt) {
    CheckResult r;
    const double mass = 1.0, radius = 8.0;
    const int points = 24;
    const ModeListState psi = packet(mass, 2.0 * radius, Vec3(0.4, 0.1, 0), Vec3(-0.5, 0, 0), 0.5, 5.0);
    const GridSliceState slice = restrict_to(psi, HyperplaneParams::lab(0.0), radius, points);
    const std::vector<Vec3> c1{Vec3(-0.5, 0, 0), Vec3(1.0, 0, 0)};
    const std::vector<Vec3> c2{Vec3(0.5, 0, 0), Vec3(0, 1.2, 0)};
    const Spinor up = Spinor::UnitX();
    const std::vector<SliceObservable> slices{
        window_observable(make_grid(HyperplaneParams::lab(0.6), radius, points), mass, c1, 0.8, up),
        window_observable(make_grid(HyperplaneParams::lab(1.4), radius, points), mass, c2, 0.8, up)};
    std::vector<ScheduledMeasurement> sched;
    for (const SliceObservable& m : slices) sched.push_back({m.time, Vec4(m.time, 0, 0, 0), covariant_observable(m)});
    const auto cov = outcome_distribution(psi, sched);
    const auto ref = standard_reduction_reference(slice, slices);
    double gap = cov.size() == ref.size() ? 0.0 : kInf;
    double total = 0.0;
    for (std::size_t i = 0; i < std::min(cov.size(), ref.size()); ++i) {
        if (cov[i].outcomes != ref[i].outcomes) gap = kInf;
        gap = std::max(gap, std::abs(cov[i].probability - ref[i].probability));
        total += cov[i].probability;
    }
    r.measures = {{"max_probability_gap", gap, opt.tolerances.reduction_equivalence},
                  {"total_probability_defect", std::abs(total - 1.0), opt.tolerances.probability_sum}};
    return r;
}

CheckResult pdp_oracle(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    DetectionSetup s = pdp_setup(tol);
    const double kappa = 1.3;
    s.detectors = {resting_detector(1, Vec3::Zero(), kappa, kInf)};
    s.max_events = 1;
    s.tau_max = 60.0;
    const QuantumState psi = pdp_packet(Vec3(0.2, 0, 0));
    double tau_err = 0.0, defect = 0.0, wrong = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RandomStream rng(seed);
        const DetectionRun run = run_detection(psi, s, rng);
        const double u = RandomStream(seed).uniform();
        const double expected = -std::log(1.0 - u) / (kappa * kappa);
        if (run.events.size() != 2 || run.events[1].detail != 1) {
            wrong += 1.0;
            continue;
        }
        tau_err = std::max(tau_err, std::abs(run.events[1].tau - expected));
        defect = std::max(defect, run.bookkeeping_defect);
    }
    r.measures = {{"max_jump_time_error", tau_err, tol.jump_time},
                  {"max_bookkeeping_defect", defect, tol.bookkeeping_factor * tol.integrator},
                  {"wrong_detector_or_missing", wrong, 0.0}};
    return r;
}

CheckResult pdp_covariance(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    DetectionScenario plain = two_detector_scenario(tol, Vec3(0.3, 0, 0));
    plain.setup.max_events = 2;
    plain.setup.tau_max = 4.0;
    const LorentzTransform t =
        LorentzTransform::translation(Vec4(0.2, 0.5, -0.3, 0.1)) * LorentzTransform::boost(1, 0.5);
    const DetectionScenario moved = transform_scenario(plain, t);
    double tau = 0.0, point = 0.0, ids = 0.0;
    std::size_t detections = 0;
    for (std::uint64_t seed : {3u, 8u, 13u}) {
        RandomStream ra(seed), rb(seed);
        const DetectionRun x = run_detection(plain.psi0, plain.setup, ra);
        const DetectionRun y = run_detection(moved.psi0, moved.setup, rb);
        if (x.events.size() != y.events.size()) {
            ids += 1.0;
            continue;
        }
        detections += x.events.size() - 1;
        for (std::size_t i = 0; i < x.events.size(); ++i) {
            ids += x.events[i].detail != y.events[i].detail;
            tau = std::max(tau, std::abs(x.events[i].tau - y.events[i].tau));
            point = std::max(point, (t.apply(x.events[i].z) - y.events[i].z).norm());
        }
    }
    r.measures = {{"id_mismatches", ids, 0.0},
                  {"max_tau_gap", tau, tol.covariance_tau},
                  {"max_point_gap", point, tol.covariance_point},
                  {"missing_detections", detections > 0 ? 0.0 : 1.0, 0.0}};
    return r;
}

CheckResult born_statistics(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    const Stopwatch clock;
    const int runs = 10000;

    const Observable obs = two_packet_observable();
    const ModeListState psi = unit(linear_combination(1.0, obs.projectors[0], 1.0, obs.projectors[1]));
    const std::vector<ScheduledMeasurement> sched{{1.0, Vec4(1, 0, 0, 0), obs}};
    int first = 0;
    for (int i = 0; i < runs; ++i) {
        RandomStream rng(RandomStream::derive(7001, static_cast<std::uint64_t>(i)));
        first += run_measurement_sequence(psi, {}, sched, rng).events[1].detail == 1;
    }
    const double f_measure = static_cast<double>(first) / runs;

    const DetectionScenario d = [&] {
        DetectionScenario s = two_detector_scenario(tol, Vec3::Zero());
        s.setup.max_events = 1;
        s.setup.tau_max = 20.0;
        return s;
    }();
    const EnsembleResult ens = run_detection_ensemble(d.psi0, d.setup, 7002, runs, opt.threads);
    std::size_t left = 0, detected = 0;
    for (const EventRecord& e : ens.first_events) {
        if (e.kind != EventKind::detection) continue;
        ++detected;
        left += e.detail == 1;
    }
    const double f_detect = detected ? static_cast<double>(left) / detected : 0.0;
    r.measures = {{"measurement_frequency_gap", std::abs(f_measure - 0.5), tol.born_band},
                  {"detector_frequency_gap", std::abs(f_detect - 0.5), tol.born_band},
                  {"three_sigma_band", detected ? 1.5 / std::sqrt(static_cast<double>(detected)) : kInf, tol.born_band},
                  {"runtime_s", clock.seconds(), tol.runtime_born}};
    return r;
}

/// Survival curves of the relativistic run and the Pauli reference for a
/// slow packet under a detector resting at the preparation point.
std::pair<std::vector<double>, NonrelativisticReport> limit_curves(double c, const Tolerances& tol,
                                                                   std::span<const double> taus) {
    const double mass = 1.0, radius = 8.0;
    const int points = 32;
    DetectionSetup s;
    s.mass = mass;
    s.c = c;
    s.grid = {radius, points, Vec3::Zero()};
    s.tau_max = taus.back();
    s.integrator.method = IntegratorMethod::split_step;
    s.integrator.dtau = 0.01;
    s.integrator.tolerance = tol.integrator;
    s.integrator.jump_tolerance = tol.jump_bracket;
    s.detectors = {resting_detector(1, Vec3::Zero(), 1.5, 1.5, c)};
    const auto lattice = SpectralLattice::for_slice(mass, c, radius, points, Vec3::Zero());
    GaussianPacket spec;
    spec.momentum = Vec3(2.5, 0, 0);
    spec.sigma_p = 0.5;
    spec.cutoff_sigmas = 5.0;
    const std::vector<cplx> coeffs = gaussian_coefficients(spec, *lattice);
    std::vector<cplx> values(coeffs.size());
    lattice->to_values(coeffs, values);
    GridSliceState slice(make_grid(HyperplaneParams::lab(0.0), radius, points), mass, c);
    slice.values = lattice->to_slice(values);
    return {survival_curve(slice, s, taus), nonrelativistic_reference(slice, s, taus)};
}

CheckResult nonrelativistic_limit(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    std::vector<double> taus;
    for (int i = 1; i <= 40; ++i) taus.push_back(0.1 * i);
    std::vector<double> gaps;
    for (double c : {10.0, 50.0, 250.0}) {
        const auto [rel, nr] = limit_curves(c, tol, taus);
        double gap = 0.0;
        for (std::size_t i = 0; i < taus.size(); ++i) gap = std::max(gap, std::abs(rel[i] - nr.survival[i]));
        gaps.push_back(gap);
        r.measures.push_back({"gap_c" + std::to_string(static_cast<int>(c)), gap, kInf});
        if (c == 250.0) r.measures.push_back({"lower_fraction_c250", nr.lower_fraction, 1e-3});
    }
    double violations = 0.0;
    for (std::size_t i = 1; i < gaps.size(); ++i) violations += !(gaps[i] < gaps[i - 1]);
    r.measures.push_back({"monotonicity_violations", violations, 0.0});
    r.measures.push_back({"gap_at_c250", gaps.back(), tol.limit_gap});
    return r;
}

CheckResult algebra(const VerifyOptions& opt) {
    const Tolerances& tol = opt.tolerances;
    CheckResult r;
    const Stopwatch clock;
    const GammaSet& g = dirac();
    const ChargeConjugator& cc = dirac_charge_conjugator();
    double clifford = 0.0, intertwine = 0.0, current = 0.0, compose = 0.0, conj = 0.0;
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu)
            clifford = std::max(clifford, max_abs(g[mu] * g[nu] + g[nu] * g[mu] -
                                                  2.0 * metric()(mu, nu) * Mat4c::Identity()));
    for (int mu = 0; mu < 4; ++mu) conj = std::max(conj, max_abs(cc.C * g[mu].transpose() * cc.C.adjoint() + g[mu]));
    conj = std::max(conj, max_abs(cc.state_map * cc.state_map.conjugate() - Mat4c::Identity()));
    conj = std::max(conj, max_abs(cc.C.adjoint() * cc.C - Mat4c::Identity()));

    Sampler gen(1009);
    for (int trial = 0; trial < 100; ++trial) {
        const LorentzTransform t = gen.transform(1.5, true);
        const LorentzTransform u = gen.transform(1.5, true);
        const SpinorRep rep = spinor_rep(t);
        const Mat4& l = t.matrix();
        for (int mu = 0; mu < 4; ++mu) {
            Mat4c rhs = Mat4c::Zero();
            for (int nu = 0; nu < 4; ++nu) rhs += l(mu, nu) * g[nu];
            intertwine = std::max(intertwine, max_abs(rep.S_inv * g[mu] * rep.S - rhs) / std::max(1.0, l.cwiseAbs().maxCoeff()));
        }
        current = std::max(current, max_abs(rep.S.adjoint() * g[0] * rep.S - g[0]) / std::max(1.0, max_abs(rep.S) * max_abs(rep.S)));
        const Mat4c prod = rep.S * spinor_rep(u).S;
        const Mat4c joint = spinor_rep(t * u).S;
        compose = std::max(compose, std::min(max_abs(joint - prod), max_abs(joint + prod)) / std::max(1.0, max_abs(prod)));
        conj = std::max(conj, max_abs(cc.state_map * rep.S.conjugate() - rep.S * cc.state_map) / std::max(1.0, max_abs(rep.S)));
    }
    r.measures = {{"clifford_defect", clifford, tol.algebra},
                  {"intertwining_defect", intertwine, tol.algebra},
                  {"current_invariance_defect", current, tol.algebra},
                  {"projective_composition_defect", compose, tol.algebra},
                  {"charge_conjugator_defect", conj, tol.algebra},
                  {"runtime_s", clock.seconds(), tol.runtime_algebra}};
    return r;
}

struct CheckEntry {
    const char* title;
    CheckResult (*run)(const VerifyOptions&);
};

const std::map<std::string, CheckEntry>& registry() {
    static const std::map<std::string, CheckEntry> m{
        {"frame-independence", {"inner product independent of the hyperplane", frame_independence}},
        {"unitarity", {"Poincare action preserves inner products", unitarity}},
        {"conjugation", {"charge conjugation of states, probabilities and detection runs", conjugation}},
        {"reduction-equivalence", {"covariant measurements match lab-frame reduction", reduction_equivalence}},
        {"pdp-oracle", {"uniform detector: exponential jump times and bookkeeping identity", pdp_oracle}},
        {"pdp-covariance", {"boosted detection scenario reproduces events", pdp_covariance}},
        {"born-statistics", {"Born-rule frequencies for measurement and symmetric detectors", born_statistics}},
        {"nonrelativistic-limit", {"survival curves converge to the Pauli reference", nonrelativistic_limit}},
        {"algebra", {"gamma matrices, spinor representation and charge conjugator", algebra}},
    };
    return m;
}

}  // namespace

const std::vector<std::string>& check_ids() {
    static const std::vector<std::string> ids{"frame-independence", "unitarity",      "conjugation",
                                              "reduction-equivalence", "pdp-oracle",  "pdp-covariance",
                                              "born-statistics",    "nonrelativistic-limit", "algebra"};
    return ids;
}

std::vector<std::string> suite_members(const std::string& suite) {
    if (suite == "all") return check_ids();
    if (suite == "theorem1") return {"frame-independence"};
    if (suite == "covariance") return {"unitarity", "conjugation", "pdp-covariance"};
    if (suite == "limit") return {"nonrelativistic-limit"};
    if (registry().count(suite)) return {suite};
    throw DomainError("unknown verification suite '" + suite + "'");
}

CheckResult run_check(const std::string& id, const VerifyOptions& options) {
    const auto it = registry().find(id);
    if (it == registry().end()) throw DomainError("unknown check '" + id + "'");
    const Stopwatch clock;
    CheckResult r;
    try {
        r = it->second.run(options);
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.id = id;
    r.title = it->second.title;
    r.seconds = clock.seconds();
    return r;
}

std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options,
                                   const std::function<void(const CheckResult&)>& on_result) {
    std::vector<CheckResult> out;
    for (const std::string& id : suite_members(suite)) {
        out.push_back(run_check(id, options));
        if (on_result) on_result(out.back());
    }
    return out;
}

std::string format_result(const CheckResult& r) {
    std::string s = r.passed() ? "PASS " : "FAIL ";
    s += r.id + " (" + r.title + ")";
    char buf[160];
    for (const Measure& m : r.measures) {
        std::snprintf(buf, sizeof buf, " %s=%.3e%s", m.name.c_str(), m.value, m.passed() ? "" : "!");
        s += buf;
        if (std::isfinite(m.bound)) {
            std::snprintf(buf, sizeof buf, "<=%.1e", m.bound);
            s += buf;
        }
    }
    if (!r.error.empty()) s += " error: " + r.error;
    std::snprintf(buf, sizeof buf, " [%.2f s]", r.seconds);
    return s + buf;
}

}  // namespace releqt
