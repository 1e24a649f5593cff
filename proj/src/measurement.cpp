#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "releqt/events.hpp"

namespace releqt {

namespace {

constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

/// Index of the first cumulative probability exceeding u * total; zero-weight
/// outcomes are never returned.
std::size_t pick(std::span<const double> weights, double u) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double target = u * total;
    double acc = 0.0;
    std::size_t last = weights.size();
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (weights[j] <= 0.0) continue;
        acc += weights[j];
        last = j;
        if (target < acc) return j;
    }
    if (last == weights.size()) throw NumericalError("no outcome has positive probability");
    return last;
}

}  // namespace

std::uint64_t RandomStream::mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t RandomStream::next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * golden);
}

double RandomStream::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RandomStream::derive(std::uint64_t seed, std::uint64_t index) {
    return mix(seed ^ mix((index + 1) * golden));
}

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::preparation: return "preparation";
        case EventKind::measurement: return "measurement";
        case EventKind::detection: return "detection";
    }
    return "unknown";
}

bool in_backward_cone(const Vec4& prev, const Vec4& next) {
    if (next == prev) return false;
    return minkowski_sq(prev - next) >= 0.0 && next[0] <= prev[0];
}

void check_event_order(std::span<const EventRecord> events) {
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (!(events[i].tau >= events[i - 1].tau))
            throw DomainError("event " + std::to_string(i) + " precedes its predecessor in proper time");
        if (in_backward_cone(events[i - 1].z, events[i].z))
            throw DomainError("event " + std::to_string(i) +
                              " lies in the backward light cone of the previous event");
    }
}

void write_event_csv(std::ostream& os, std::span<const EventRecord> events) {
    os << "kind,tau,z0,z1,z2,z3,omega_before,omega_after,detail,seed,draws_consumed\n";
    char buf[512];
    for (const EventRecord& e : events) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d,%llu,%llu\n", to_string(e.kind),
                      e.tau, e.z[0], e.z[1], e.z[2], e.z[3], e.omega_before, e.omega_after, e.detail,
                      static_cast<unsigned long long>(e.seed), static_cast<unsigned long long>(e.rng_draws_consumed));
        os << buf;
    }
}

// ---------------------------------------------------------------------------

void Observable::validate(double tol) const {
    if (eigenvalues.size() != projectors.size())
        throw DomainError("observable: eigenvalue count does not match projector count");
    for (std::size_t j = 0; j < projectors.size(); ++j)
        for (std::size_t k = j; k < projectors.size(); ++k) {
            const cplx g = hilbert_inner(projectors[j], projectors[k]);
            const double expect = j == k ? 1.0 : 0.0;
            if (std::abs(g - expect) > tol)
                throw DomainError("observable: projector states " + std::to_string(j + 1) + " and " +
                                  std::to_string(k + 1) + " are not orthonormal (deviation " +
                                  std::to_string(std::abs(g - expect)) + ")");
        }
}

OutcomeSplit measurement_probabilities(const ModeListState& psi, const Observable& obs) {
    OutcomeSplit out;
    out.complement = psi;
    for (const ModeListState& phi : obs.projectors) {
        const cplx a = hilbert_inner(phi, psi);
        out.amplitudes.push_back(a);
        out.probabilities.push_back(std::norm(a));
        out.complement = linear_combination(1.0, out.complement, -a, phi);
    }
    out.probabilities.push_back(hilbert_inner(out.complement, out.complement).real());
    double total = 0.0;
    for (double p : out.probabilities) total += p;
    const double norm = hilbert_inner(psi, psi).real();
    if (std::abs(total - norm) > 1e-8 * std::max(1.0, norm))
        throw NumericalError("measurement probabilities sum to " + std::to_string(total) + " instead of " +
                             std::to_string(norm) + "; the observable is not complete on this state");
    return out;
}

ModeListState collapse(const OutcomeSplit& split, const Observable& obs, std::size_t outcome) {
    if (outcome < obs.size()) return obs.projectors[outcome];
    if (outcome != obs.size()) throw DomainError("collapse: outcome index out of range");
    ModeListState out = split.complement;
    const double n = hilbert_norm(out);
    if (!(n > 0.0)) throw NumericalError("collapse onto a complement of zero norm");
    for (Mode& m : out.modes) m.amp /= n;
    return out;
}

void validate_schedule(const Preparation& prep, std::span<const ScheduledMeasurement> schedule) {
    double tau = prep.tau;
    Vec4 z = prep.point;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const ScheduledMeasurement& m = schedule[i];
        const std::string who = "measurement " + std::to_string(i + 1) + ": ";
        if (!(m.tau > tau)) throw DomainError(who + "proper times must increase strictly from the preparation");
        if (in_backward_cone(z, m.z))
            throw DomainError(who + "point lies in the backward light cone of the previous event");
        m.observable.validate();
        tau = m.tau;
        z = m.z;
    }
}

MeasurementRun run_measurement_sequence(const ModeListState& psi0, const Preparation& prep,
                                        std::span<const ScheduledMeasurement> schedule, RandomStream& rng) {
    const double n0 = hilbert_inner(psi0, psi0).real();
    if (std::abs(n0 - 1.0) > 1e-8) throw DomainError("initial state must be normalized");
    validate_schedule(prep, schedule);

    MeasurementRun run;
    EventRecord prep_event;
    prep_event.kind = EventKind::preparation;
    prep_event.tau = prep.tau;
    prep_event.z = prep.point;
    prep_event.seed = rng.seed();
    prep_event.rng_draws_consumed = rng.counter();
    run.events.push_back(prep_event);
    run.trajectory.push_back({prep.tau, 0, psi0});

    ModeListState psi = psi0;
    int omega = 0;
    for (const ScheduledMeasurement& m : schedule) {
        const OutcomeSplit split = measurement_probabilities(psi, m.observable);
        const std::size_t j = pick(split.probabilities, rng.uniform());
        psi = collapse(split, m.observable, j);
        EventRecord e;
        e.kind = EventKind::measurement;
        e.tau = m.tau;
        e.z = m.z;
        e.omega_before = omega;
        omega = static_cast<int>(j) + 1;
        e.omega_after = omega;
        e.detail = omega;
        e.seed = rng.seed();
        e.rng_draws_consumed = rng.counter();
        run.events.push_back(e);
        run.trajectory.push_back({m.tau, omega, psi});
    }
    return run;
}

std::vector<OutcomePath> outcome_distribution(const ModeListState& psi0,
                                              std::span<const ScheduledMeasurement> schedule) {
    std::vector<OutcomePath> out;
    std::vector<std::size_t> path;
    std::function<void(const ModeListState&, std::size_t, double)> walk = [&](const ModeListState& psi,
                                                                              std::size_t level, double prob) {
        if (level == schedule.size()) {
            out.push_back({path, prob});
            return;
        }
        const Observable& obs = schedule[level].observable;
        const OutcomeSplit split = prob > 0.0 ? measurement_probabilities(psi, obs) : OutcomeSplit{};
        for (std::size_t j = 0; j <= obs.size(); ++j) {
            path.push_back(j);
            const double p = prob > 0.0 ? split.probabilities[j] : 0.0;
            if (p > 0.0)
                walk(collapse(split, obs, j), level + 1, prob * p);
            else
                walk(psi, level + 1, 0.0);
            path.pop_back();
        }
    };
    walk(psi0, 0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------

SliceObservable window_observable(const HyperplaneGrid& slice_grid, double mass, std::span<const Vec3> centers,
                                  double width, const Spinor& spinor) {
    if (!slice_grid.params().is_lab_plane()) throw DomainError("window observables live on constant-time slices");
    if (!(width > 0.0)) throw DomainError("window width must be positive");
    SliceObservable m;
    m.time = slice_grid.params().y[0];
    for (std::size_t j = 0; j < centers.size(); ++j) {
        GridSliceState phi(slice_grid, mass);
        for (std::size_t i = 0; i < slice_grid.size(); ++i) {
            const double r2 = (slice_grid.point(i).tail<3>() - centers[j]).squaredNorm();
            phi.set(i, std::exp(-r2 / (4.0 * width * width)) * spinor);
        }
        for (const GridSliceState& prev : m.projectors) {
            const cplx a = inner_product_on(slice_grid, prev.values, phi.values);
            for (std::size_t k = 0; k < phi.values.size(); ++k) phi.values[k] -= a * prev.values[k];
        }
        const double n = std::sqrt(norm_sq_on(slice_grid, phi.values));
        if (!(n > 1e-6)) throw DomainError("window " + std::to_string(j + 1) + " is linearly dependent on earlier ones");
        for (cplx& v : phi.values) v /= n;
        m.projectors.push_back(std::move(phi));
        m.eigenvalues.push_back(static_cast<double>(j + 1));
    }
    return m;
}

Observable covariant_observable(const SliceObservable& m) {
    Observable obs;
    obs.eigenvalues = m.eigenvalues;
    for (const GridSliceState& phi : m.projectors) obs.projectors.push_back(lift(phi));
    obs.validate();
    return obs;
}

std::vector<OutcomePath> standard_reduction_reference(const GridSliceState& psi0,
                                                      std::span<const SliceObservable> schedule) {
    std::vector<OutcomePath> out;
    std::vector<std::size_t> path;
    std::function<void(const GridSliceState&, std::size_t, double)> walk = [&](const GridSliceState& psi,
                                                                               std::size_t level, double prob) {
        if (level == schedule.size()) {
            out.push_back({path, prob});
            return;
        }
        const SliceObservable& m = schedule[level];
        const GridSliceState now = prob > 0.0 ? evolve_free(psi, m.time - psi.grid.params().y[0]) : psi;
        std::vector<double> probs;
        GridSliceState rest = now;
        if (prob > 0.0) {
            for (const GridSliceState& phi : m.projectors) {
                if (phi.grid.n() != now.grid.n() || phi.grid.radius() != now.grid.radius())
                    throw DomainError("slice observable lives on a different grid");
                const cplx a = inner_product_on(now.grid, phi.values, now.values);
                probs.push_back(std::norm(a));
                for (std::size_t k = 0; k < rest.values.size(); ++k) rest.values[k] -= a * phi.values[k];
            }
            probs.push_back(norm_sq_on(rest.grid, rest.values));
        }
        for (std::size_t j = 0; j <= m.projectors.size(); ++j) {
            path.push_back(j);
            const double p = prob > 0.0 ? probs[j] : 0.0;
            if (p <= 0.0) {
                walk(now, level + 1, 0.0);
            } else if (j < m.projectors.size()) {
                GridSliceState next = now;
                next.values = m.projectors[j].values;
                walk(next, level + 1, prob * p);
            } else {
                GridSliceState next = rest;
                const double n = std::sqrt(p);
                for (cplx& v : next.values) v /= n;
                walk(next, level + 1, prob * p);
            }
            path.pop_back();
        }
    };
    walk(psi0, 0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------

MeasurementScenario transform_scenario(const MeasurementScenario& s, const LorentzTransform& t) {
    validate_restricted(t.matrix());
    MeasurementScenario out;
    out.psi0 = poincare_transform(s.psi0, t);
    out.preparation = {s.preparation.tau, t.apply(s.preparation.point)};
    for (const ScheduledMeasurement& m : s.schedule) {
        ScheduledMeasurement r;
        r.tau = m.tau;
        r.z = t.apply(m.z);
        r.observable.eigenvalues = m.observable.eigenvalues;
        r.observable.complement_eigenvalue = m.observable.complement_eigenvalue;
        for (const ModeListState& phi : m.observable.projectors)
            r.observable.projectors.push_back(poincare_transform(phi, t));
        out.schedule.push_back(std::move(r));
    }
    return out;
}

MeasurementScenario conjugate_scenario(const MeasurementScenario& s) {
    MeasurementScenario out = s;
    out.psi0 = charge_conjugate(s.psi0);
    for (ScheduledMeasurement& m : out.schedule)
        for (ModeListState& phi : m.observable.projectors) phi = charge_conjugate(phi);
    return out;
}

}  // namespace releqt
