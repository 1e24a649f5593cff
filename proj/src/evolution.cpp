#include "releqt/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "releqt/numerics.hpp"

namespace releqt {

namespace {

std::unique_ptr<SpectralLattice> slice_lattice(const GridSliceState& slice) {
    const HyperplaneParams& p = slice.grid.params();
    if (!p.is_lab_plane()) throw DomainError("lab-frame evolution needs a slice on a constant-time plane");
    return SpectralLattice::for_slice(slice.mass, slice.c, slice.grid.radius(), slice.grid.n(), p.y.tail<3>());
}

GridSliceState with_values(const GridSliceState& like, double new_x0, std::vector<cplx> values) {
    HyperplaneParams p = like.grid.params();
    p.y[0] = new_x0;
    GridSliceState out(HyperplaneGrid(p, like.grid.radius(), like.grid.n()), like.mass, like.c);
    out.values = std::move(values);
    out.potential = like.potential;
    return out;
}

/// Potential samples e A_0 and e (A_1, A_2, A_3) on the lattice nodes.
struct PotentialSamples {
    std::vector<double> scalar;
    std::array<std::vector<double>, 3> vector;
};

PotentialSamples sample_potential(const StaticPotential& pot, const SpectralLattice& lat) {
    PotentialSamples s;
    const std::size_t n = lat.size();
    s.scalar.resize(n);
    for (auto& v : s.vector) v.resize(n);
    const int m = lat.m();
    std::size_t f = 0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int l = 0; l < m; ++l, ++f) {
                const Vec4 a = pot.covariant(lat.node(i, j, l));
                s.scalar[f] = pot.charge * a[0];
                for (int d = 0; d < 3; ++d) s.vector[static_cast<std::size_t>(d)][f] = pot.charge * a[d + 1];
            }
    return s;
}

/// values <- exp(-i V dt) values, V = e A_0 + alpha^k e A_k per node.
void potential_phase(const PotentialSamples& v, double dt, std::span<cplx> values) {
    const std::size_t n = v.scalar.size();
    for (std::size_t f = 0; f < n; ++f) {
        const Vec3 b(v.vector[0][f], v.vector[1][f], v.vector[2][f]);
        const double bn = b.norm();
        const cplx global = std::polar(1.0, -v.scalar[f] * dt);
        cplx psi[4] = {values[f], values[n + f], values[2 * n + f], values[3 * n + f]};
        if (bn > 0.0) {
            const Vec3 bh = b / bn;
            const double cs = std::cos(bn * dt);
            const cplx is(0.0, -std::sin(bn * dt));
            const auto [l0, l1] = detail::sigma_dot(bh, psi[2], psi[3]);
            const auto [u0, u1] = detail::sigma_dot(bh, psi[0], psi[1]);
            const cplx ab[4] = {l0, l1, u0, u1};
            for (int c = 0; c < 4; ++c) psi[c] = cs * psi[c] + is * ab[c];
        }
        for (std::size_t c = 0; c < 4; ++c) values[c * n + f] = global * psi[c];
    }
}

double values_norm_sq(std::span<const cplx> values) {
    return detail::pairwise_sum<double>(0, values.size(), [&](std::size_t i) { return std::norm(values[i]); });
}

}  // namespace

GridSliceState evolve_free(const GridSliceState& slice, double dt, double nyquist_fraction) {
    const auto lat = slice_lattice(slice);
    const std::vector<cplx> values = lat->from_slice(slice.values);
    std::vector<cplx> coeffs(values.size());
    lat->to_coeffs(values, coeffs);
    if (lat->edge_fraction(coeffs) > nyquist_fraction)
        throw NumericalError("evolve_free: slice content reaches the grid's Nyquist band; refine the grid");
    lat->propagate(coeffs, dt);
    std::vector<cplx> out(values.size());
    lat->to_values(coeffs, out);
    return with_values(slice, slice.grid.params().y[0] + slice.c * dt, lat->to_slice(out));
}

GridSliceState evolve_potential(const GridSliceState& slice, double t, int steps, const DiracHamiltonian& h,
                                EvolutionReport* report) {
    if (steps < 1) throw DomainError("evolve_potential needs at least one step");
    if (h.mass != slice.mass || h.c != slice.c)
        throw DomainError("evolve_potential: Hamiltonian and slice disagree on mass or c");
    const auto lat = slice_lattice(slice);
    std::vector<cplx> values = lat->from_slice(slice.values);
    std::vector<cplx> coeffs(values.size());
    const double dt = t / steps;
    EvolutionReport rep;

    std::optional<PotentialSamples> pot;
    if (h.potential) pot = sample_potential(*h.potential, *lat);

    for (int s = 0; s < steps; ++s) {
        const double before = values_norm_sq(values);
        if (pot) potential_phase(*pot, 0.5 * dt, values);
        lat->to_coeffs(values, coeffs);
        lat->propagate(coeffs, dt);
        lat->to_values(coeffs, values);
        if (pot) potential_phase(*pot, 0.5 * dt, values);
        const double after = values_norm_sq(values);
        const double drift = before > 0.0 ? std::abs(after - before) / before : 0.0;
        rep.norm_drift = std::max(rep.norm_drift, drift);
        if (drift > 1e-8) rep.step_warning = true;
    }
    if (report) *report = rep;
    GridSliceState out = with_values(slice, slice.grid.params().y[0] + slice.c * t, lat->to_slice(values));
    out.potential = h.potential;
    return out;
}

GridSliceState evolve_potential(const GridSliceState& slice, double dt, const DiracHamiltonian& h,
                                EvolutionReport* report) {
    return evolve_potential(slice, dt, 1, h, report);
}

std::vector<cplx> apply_hamiltonian(const GridSliceState& slice, const DiracHamiltonian& h) {
    const auto lat = slice_lattice(slice);
    const std::vector<cplx> values = lat->from_slice(slice.values);
    std::vector<cplx> coeffs(values.size()), hc(values.size()), out(values.size());
    lat->to_coeffs(values, coeffs);
    lat->apply_hamiltonian(coeffs, hc);
    lat->to_values(hc, out);
    if (h.potential) {
        const PotentialSamples pot = sample_potential(*h.potential, *lat);
        const std::size_t n = lat->size();
        for (std::size_t f = 0; f < n; ++f) {
            const Vec3 b(pot.vector[0][f], pot.vector[1][f], pot.vector[2][f]);
            const cplx psi[4] = {values[f], values[n + f], values[2 * n + f], values[3 * n + f]};
            const auto [l0, l1] = detail::sigma_dot(b, psi[2], psi[3]);
            const auto [u0, u1] = detail::sigma_dot(b, psi[0], psi[1]);
            const cplx ab[4] = {l0, l1, u0, u1};
            for (std::size_t c = 0; c < 4; ++c) out[c * n + f] += pot.scalar[f] * psi[c] + ab[c];
        }
    }
    return lat->to_slice(out);
}

// ---------------------------------------------------------------------------

Vec4 DetectorSpec::position(double tau) const {
    const auto& w = worldline;
    std::size_t seg = 0;
    while (seg + 2 < w.size() && tau > w[seg + 1].tau) ++seg;
    const WorldlineNode& a = w[seg];
    const WorldlineNode& b = w[seg + 1];
    const double s = (tau - a.tau) / (b.tau - a.tau);
    return a.z + s * (b.z - a.z);
}

double DetectorSpec::profile(const Vec3& x, const Vec3& zc) const {
    if (uniform()) return kappa;
    return kappa * std::exp(-(x - zc).squaredNorm() / (2.0 * width * width));
}

void DetectorSpec::validate() const {
    const std::string who = "detector " + std::to_string(id) + ": ";
    if (worldline.size() < 2) throw DomainError(who + "worldline needs at least two nodes");
    if (!(kappa >= 0.0) || std::isinf(kappa)) throw DomainError(who + "coupling strength kappa must be finite and >= 0");
    if (!(width > 0.0)) throw DomainError(who + "profile width must be positive (or infinite)");
    for (std::size_t i = 0; i + 1 < worldline.size(); ++i) {
        const WorldlineNode& a = worldline[i];
        const WorldlineNode& b = worldline[i + 1];
        if (!(b.tau > a.tau)) throw DomainError(who + "worldline proper times must increase");
        const Vec4 d = b.z - a.z;
        if (!(d[0] > 0.0) || !(minkowski_sq(d) > 0.0))
            throw DomainError(who + "worldline segment " + std::to_string(i) +
                              " is not future-directed timelike (detector faster than light)");
    }
}

void check_profile_support(const DetectorSpec& d, const Vec3& zc, const GridSpec& grid, double edge_tolerance) {
    if (d.uniform()) return;
    for (int k = 0; k < 3; ++k) {
        const double gap = std::min(zc[k] - (grid.center[k] - grid.radius), grid.center[k] + grid.radius - zc[k]);
        if (gap < 0.0 || std::exp(-gap * gap / (2.0 * d.width * d.width)) > edge_tolerance)
            throw DomainError("detector " + std::to_string(d.id) +
                              ": profile support exceeds the grid truncation radius");
    }
}

std::vector<double> profile_on_lattice(const DetectorSpec& d, const Vec3& zc, const SpectralLattice& lattice) {
    const int m = lattice.m();
    const std::size_t mm = static_cast<std::size_t>(m);
    std::vector<double> g(lattice.size(), d.kappa);
    if (d.uniform()) return g;
    std::array<std::vector<double>, 3> axis;
    const double h = lattice.spacing();
    for (int k = 0; k < 3; ++k) {
        axis[static_cast<std::size_t>(k)].resize(mm);
        const double start = lattice.center()[k] - lattice.radius();
        for (int i = 0; i < m; ++i) {
            const double dx = start + h * i - zc[k];
            axis[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = std::exp(-dx * dx / (2.0 * d.width * d.width));
        }
    }
    for (std::size_t i = 0; i < mm; ++i)
        for (std::size_t j = 0; j < mm; ++j)
            for (std::size_t l = 0; l < mm; ++l) g[(i * mm + j) * mm + l] *= axis[0][i] * axis[1][j] * axis[2][l];
    return g;
}

namespace {

/// Lab slice of the (coupling-frame) state at x^0 together with its lattice.
struct LabSlice {
    std::unique_ptr<SpectralLattice> lattice;
    std::vector<cplx> values;  ///< lattice layout
};

LabSlice lab_values(const QuantumState& state, double x0, const GridSpec& grid, const LorentzTransform& frame) {
    LabSlice out;
    if (const auto* ml = std::get_if<ModeListState>(&state)) {
        const ModeListState own = frame.is_identity(0.0) ? *ml : poincare_transform(*ml, frame.inverse());
        const auto params = HyperplaneParams::make(Vec4(x0, grid.center[0], grid.center[1], grid.center[2]));
        const GridSliceState s = restrict_to(own, params, grid.radius, grid.n);
        out.lattice = SpectralLattice::for_slice(own.mass, 1.0, grid.radius, grid.n, grid.center);
        out.values = out.lattice->from_slice(s.values);
        return out;
    }
    const auto& slice = std::get<GridSliceState>(state);
    if (!frame.is_identity(0.0)) throw DomainError("grid slices are tied to the lab frame; transform mode lists instead");
    const double y0 = slice.grid.params().y[0];
    const GridSliceState at = y0 == x0 ? slice : evolve_free(slice, (x0 - y0) / slice.c, 1.0);
    out.lattice = SpectralLattice::for_slice(slice.mass, slice.c, slice.grid.radius(), slice.grid.n(),
                                             slice.grid.params().y.tail<3>());
    out.values = out.lattice->from_slice(at.values);
    return out;
}

double state_norm_sq(const QuantumState& state) {
    if (const auto* ml = std::get_if<ModeListState>(&state)) return hilbert_inner(*ml, *ml).real();
    const auto& s = std::get<GridSliceState>(state);
    return norm_sq_on(s.grid, s.values);
}

}  // namespace

QuantumState apply_coupling(const QuantumState& state, const CouplingOperator& op) {
    if (!op.detector) throw DomainError("coupling operator has no detector");
    const DetectorSpec& d = *op.detector;
    if (d.uniform()) {
        if (const auto* ml = std::get_if<ModeListState>(&state)) {
            ModeListState out = *ml;
            for (Mode& m : out.modes) m.amp *= d.kappa;
            return out;
        }
        GridSliceState out = std::get<GridSliceState>(state);
        for (cplx& v : out.values) v *= d.kappa;
        return out;
    }
    const Vec4 z = d.position(op.tau);
    check_profile_support(d, z.tail<3>(), op.grid, op.edge_tolerance);
    LabSlice lab = lab_values(state, z[0], op.grid, op.frame);
    const std::vector<double> g = profile_on_lattice(d, z.tail<3>(), *lab.lattice);
    const std::size_t n = lab.lattice->size();
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t f = 0; f < n; ++f) lab.values[c * n + f] *= g[f];

    if (const auto* ml = std::get_if<ModeListState>(&state)) {
        std::vector<cplx> coeffs(lab.values.size());
        lab.lattice->to_coeffs(lab.values, coeffs);
        ModeListState out = modes_from_lattice(*lab.lattice, coeffs, z[0]);
        out.mass = ml->mass;
        return op.frame.is_identity(0.0) ? out : poincare_transform(out, op.frame);
    }
    const auto& slice = std::get<GridSliceState>(state);
    HyperplaneParams p = slice.grid.params();
    p.y[0] = z[0];
    GridSliceState out(HyperplaneGrid(p, slice.grid.radius(), slice.grid.n()), slice.mass, slice.c);
    out.values = lab.lattice->to_slice(lab.values);
    out.potential = slice.potential;
    return out;
}

CouplingRates total_coupling(const QuantumState& state, std::span<const DetectorSpec> detectors, double tau,
                             const GridSpec& grid, const LorentzTransform& frame) {
    CouplingRates out;
    out.per_detector.assign(detectors.size(), 0.0);
    std::map<double, LabSlice> slices;
    std::optional<double> norm;
    for (std::size_t j = 0; j < detectors.size(); ++j) {
        const DetectorSpec& d = detectors[j];
        if (d.uniform()) {
            if (!norm) norm = state_norm_sq(state);
            out.per_detector[j] = d.kappa * d.kappa * *norm;
            continue;
        }
        const Vec4 z = d.position(tau);
        auto it = slices.find(z[0]);
        if (it == slices.end()) it = slices.emplace(z[0], lab_values(state, z[0], grid, frame)).first;
        const LabSlice& lab = it->second;
        const std::vector<double> g = profile_on_lattice(d, z.tail<3>(), *lab.lattice);
        const std::size_t n = lab.lattice->size();
        const double h3 = std::pow(lab.lattice->spacing(), 3);
        out.per_detector[j] = h3 * detail::pairwise_sum<double>(0, n, [&](std::size_t f) {
                                  double s = 0.0;
                                  for (std::size_t c = 0; c < 4; ++c) s += std::norm(lab.values[c * n + f]);
                                  return g[f] * g[f] * s;
                              });
    }
    for (double v : out.per_detector) out.rate += v;
    return out;
}

}  // namespace releqt
