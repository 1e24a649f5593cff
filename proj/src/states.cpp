#include "releqt/states.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "releqt/nufft.hpp"
#include "releqt/numerics.hpp"

namespace releqt {

namespace {

const cplx I(0.0, 1.0);

bool mode_less(const Mode& a, const Mode& b) { return std::tie(a.key, a.sign) < std::tie(b.key, b.sign); }

/// Energy-sign projector of the c = 1 momentum Hamiltonian applied to chi.
Spinor energy_projection(const Vec3& k, double mass, int sign, const Spinor& chi) {
    const double e = std::sqrt(k.squaredNorm() + mass * mass);
    const cplx in[4] = {chi[0], chi[1], chi[2], chi[3]};
    cplx h[4];
    detail::apply_free_hamiltonian(k, mass, in, h);
    Spinor out;
    for (int c = 0; c < 4; ++c) out[c] = 0.5 * (in[c] + (sign / e) * h[c]);
    return out;
}

void require_unit_c(double c, const char* what) {
    if (c != 1.0) throw DomainError(std::string(what) + " requires c = 1 (mode lists use natural units)");
}

void require_pairable(const ModeListState& a, const ModeListState& b, const std::string& what) {
    if (a.mass != b.mass) throw DomainError(what + ": states have different masses");
    if (std::abs(a.period - b.period) > 1e-12 * std::max(a.period, b.period))
        throw DomainError(what + ": states originate on different lattices");
    if ((a.frame.matrix() - b.frame.matrix()).cwiseAbs().maxCoeff() > 1e-10)
        throw DomainError(what + ": states are expressed in different frames");
}

}  // namespace

void ModeListState::canonicalize() { std::sort(modes.begin(), modes.end(), mode_less); }

double ModeListState::shell_residual() const {
    const GammaSet& g = dirac();
    double worst = 0.0;
    for (const Mode& m : modes) {
        const double n = m.amp.norm();
        if (n == 0.0) continue;
        Mat4c op = m.p[0] * g[0] - (m.sign * mass) * Mat4c::Identity();
        for (int k = 1; k < 4; ++k) op -= m.p[k] * g[k];
        worst = std::max(worst, (op * m.amp).norm() / (n * std::max(1.0, m.p[0])));
    }
    return worst;
}

GridSliceState::GridSliceState(const HyperplaneGrid& g, double mass_, double c_)
    : grid(g), values(4 * g.size(), cplx(0.0, 0.0)), mass(mass_), c(c_) {}

Spinor GridSliceState::at(std::size_t index) const {
    const std::size_t n = grid.size();
    return {values[index], values[n + index], values[2 * n + index], values[3 * n + index]};
}

void GridSliceState::set(std::size_t index, const Spinor& v) {
    const std::size_t n = grid.size();
    for (std::size_t c = 0; c < 4; ++c) values[c * n + index] = v[static_cast<Eigen::Index>(c)];
}

// ---------------------------------------------------------------------------

Spinor evaluate(const ModeListState& state, const Vec4& x) {
    Spinor sum = Spinor::Zero();
    for (const Mode& m : state.modes) {
        const double phase = -m.sign * minkowski_dot(m.p, x);
        sum += (m.weight * std::polar(1.0, phase)) * m.amp;
    }
    return sum;
}

cplx inner_product_on(const HyperplaneGrid& grid, std::span<const cplx> f, std::span<const cplx> g) {
    const std::size_t n = grid.size();
    if (f.size() != 4 * n || g.size() != 4 * n)
        throw DomainError("inner_product_on: value arrays do not match the grid point count");
    const Vec3& alpha = grid.params().alpha;
    const bool tilted = !alpha.isZero(0.0);
    return detail::pairwise_sum<cplx>(0, n, [&](std::size_t i) {
        cplx gi[4] = {g[i], g[n + i], g[2 * n + i], g[3 * n + i]};
        if (tilted) {
            const auto [a0, a1] = detail::sigma_dot(alpha, gi[2], gi[3]);
            const auto [b0, b1] = detail::sigma_dot(alpha, gi[0], gi[1]);
            gi[0] -= a0;
            gi[1] -= a1;
            gi[2] -= b0;
            gi[3] -= b1;
        }
        cplx s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += std::conj(f[c * n + i]) * gi[c];
        return grid.weight(i) * s;
    });
}

double norm_sq_on(const HyperplaneGrid& grid, std::span<const cplx> f) {
    return inner_product_on(grid, f, f).real();
}

cplx hilbert_inner(const ModeListState& a, const ModeListState& b) {
    require_pairable(a, b, "hilbert_inner");
    cplx sum = 0.0;
    std::size_t j = 0;
    std::vector<cplx> terms;
    for (const Mode& ma : a.modes) {
        while (j < b.modes.size() && mode_less(b.modes[j], ma)) ++j;
        if (j == b.modes.size()) break;
        const Mode& mb = b.modes[j];
        if (mb.key != ma.key || mb.sign != ma.sign) continue;
        terms.push_back(ma.weight * ma.amp.dot(mb.amp));
    }
    sum = detail::pairwise_sum<cplx>(0, terms.size(), [&](std::size_t i) { return terms[i]; });
    return std::pow(2.0 * pi, 3) * sum;
}

double hilbert_norm(const ModeListState& a) { return std::sqrt(hilbert_inner(a, a).real()); }

ModeListState linear_combination(cplx a_coeff, const ModeListState& a, cplx b_coeff, const ModeListState& b) {
    require_pairable(a, b, "linear_combination");
    ModeListState out;
    out.mass = a.mass;
    out.period = a.period;
    out.frame = a.frame;
    out.modes.reserve(a.modes.size() + b.modes.size());
    std::size_t i = 0, j = 0;
    while (i < a.modes.size() || j < b.modes.size()) {
        const bool take_a = j == b.modes.size() || (i < a.modes.size() && !mode_less(b.modes[j], a.modes[i]));
        const bool take_b = i == a.modes.size() || (j < b.modes.size() && !mode_less(a.modes[i], b.modes[j]));
        Mode m = take_a ? a.modes[i] : b.modes[j];
        if (take_a && take_b) {
            m.amp = a_coeff * a.modes[i].amp + (b_coeff * (b.modes[j].weight / m.weight)) * b.modes[j].amp;
        } else if (take_a) {
            m.amp *= a_coeff;
        } else {
            m.amp *= b_coeff;
        }
        if (take_a) ++i;
        if (take_b) ++j;
        out.modes.push_back(m);
    }
    return out;
}

cplx inner_product(const QuantumState& a, const QuantumState& b, const HyperplaneParams& params, double radius,
                   int n) {
    const GridSliceState sa = restrict_to(a, params, radius, n);
    const GridSliceState sb = restrict_to(b, params, radius, n);
    return inner_product_on(sa.grid, sa.values, sb.values);
}

// ---------------------------------------------------------------------------

std::vector<cplx> lattice_coefficients(const ModeListState& state, const SpectralLattice& lattice, double x0) {
    require_unit_c(lattice.c(), "lattice_coefficients");
    if (std::abs(state.period - lattice.period()) > 1e-12 * lattice.period())
        throw DomainError("lattice_coefficients: state period does not match the lattice");
    if (!state.frame.is_identity_linear(1e-14))
        throw DomainError("lattice_coefficients: state has been boosted or rotated off the lattice");
    const std::size_t n = lattice.size();
    std::vector<cplx> coeffs(4 * n, cplx(0.0, 0.0));
    for (const Mode& m : state.modes) {
        if (!lattice.key_in_range(m.key))
            throw NumericalError("lattice_coefficients: mode wavevector beyond the grid's Nyquist band");
        const std::size_t f = lattice.flat(m.key);
        const cplx ph = m.weight * std::polar(1.0, -m.sign * m.p[0] * x0);
        for (std::size_t c = 0; c < 4; ++c) coeffs[c * n + f] += ph * m.amp[static_cast<Eigen::Index>(c)];
    }
    return coeffs;
}

ModeListState modes_from_lattice(const SpectralLattice& lattice, std::span<const cplx> coeffs, double x0,
                                 double prune_fraction) {
    require_unit_c(lattice.c(), "modes_from_lattice");
    const std::size_t n = lattice.size();
    std::vector<cplx> proj[2] = {std::vector<cplx>(4 * n), std::vector<cplx>(4 * n)};
    lattice.project(coeffs, +1, proj[0]);
    lattice.project(coeffs, -1, proj[1]);

    const double w = std::pow(lattice.dk(), 3);
    ModeListState out;
    out.mass = lattice.mass();
    out.period = lattice.period();

    double total = 0.0;
    for (const auto& p : proj)
        for (const cplx& v : p) total += std::norm(v);

    for (std::size_t f = 0; f < n; ++f) {
        const WaveKey key = lattice.key(f);
        const Vec3 k = lattice.wavevector(f);
        const double e = lattice.energy(f);
        for (int s : {+1, -1}) {
            const auto& p = proj[s > 0 ? 0 : 1];
            double contrib = 0.0;
            for (std::size_t c = 0; c < 4; ++c) contrib += std::norm(p[c * n + f]);
            if (contrib == 0.0 || contrib <= prune_fraction * total) continue;
            Mode m;
            m.key = key;
            m.sign = s;
            m.p = Vec4(e, s * k[0], s * k[1], s * k[2]);
            m.weight = w;
            const cplx ph = std::polar(1.0 / w, s * e * x0);
            for (std::size_t c = 0; c < 4; ++c) m.amp[static_cast<Eigen::Index>(c)] = ph * p[c * n + f];
            out.modes.push_back(m);
        }
    }
    out.canonicalize();
    return out;
}

GridSliceState restrict_to(const ModeListState& state, const HyperplaneParams& params, double radius, int n,
                           const RestrictOptions& options) {
    const HyperplaneGrid grid(params, radius, n);
    GridSliceState out(grid, state.mass, 1.0);
    if (state.modes.empty()) return out;

    const bool on_lattice = params.is_lab_plane() && state.frame.is_identity_linear(1e-14) && n >= 2 &&
                            std::abs(state.period - 2.0 * radius) <= 1e-12 * state.period;
    if (on_lattice) {
        const SpectralLattice lattice(state.mass, 1.0, radius, n - 1, params.y.tail<3>());
        bool in_band = true;
        for (const Mode& m : state.modes) in_band = in_band && lattice.key_in_range(m.key);
        if (in_band) {
            const std::vector<cplx> coeffs = lattice_coefficients(state, lattice, params.y[0]);
            std::vector<cplx> values(coeffs.size());
            lattice.to_values(coeffs, values);
            out.values = lattice.to_slice(values);
            return out;
        }
    }

    // General plane: F(sigma(u)) = sum w a exp(-i s p.y) exp(i k'.u), k' = s R^T (p - p^0 alpha).
    const Mat3 rt = params.rotation().transpose();
    const double h = grid.spacing();
    std::vector<Vec3> theta;
    std::vector<Spinor> strength;
    theta.reserve(state.modes.size());
    strength.reserve(state.modes.size());
    for (const Mode& m : state.modes) {
        const Vec3 kp = m.sign * (rt * (m.p.tail<3>() - m.p[0] * params.alpha));
        const double phase = -m.sign * minkowski_dot(m.p, params.y) - kp.sum() * radius;
        theta.push_back(kp * h);
        strength.push_back((m.weight * std::polar(1.0, phase)) * m.amp);
        for (int d = 0; d < 3; ++d)
            if (!(std::abs(theta.back()[d]) < pi))
                throw NumericalError("restrict: grid spacing " + std::to_string(h) +
                                     " too coarse for the state's wavevectors on this hyperplane");
    }
    const double work = static_cast<double>(state.modes.size()) * static_cast<double>(grid.size());
    out.values = work <= options.direct_limit ? detail::direct_spinor_sum(theta, strength, n)
                                              : detail::nufft_spinor_sum(theta, strength, n, options.nufft_spread);
    return out;
}

namespace {

bool same_grid(const HyperplaneGrid& a, const HyperplaneParams& params, double radius, int n) {
    return a.n() == n && a.radius() == radius && a.params().y == params.y && a.params().alpha == params.alpha &&
           a.params().phi == params.phi;
}

}  // namespace

GridSliceState restrict_to(const QuantumState& state, const HyperplaneParams& params, double radius, int n,
                           const RestrictOptions& options) {
    if (const auto* modes = std::get_if<ModeListState>(&state)) return restrict_to(*modes, params, radius, n, options);
    const auto& slice = std::get<GridSliceState>(state);
    if (same_grid(slice.grid, params, radius, n)) return slice;
    if (slice.potential)
        throw DomainError("restrict: a slice evolving in an external potential is confined to its own lab plane");
    return restrict_to(lift(slice), params, radius, n, options);
}

double tail_fraction(const GridSliceState& slice) {
    const HyperplaneGrid& g = slice.grid;
    const int n = g.n();
    const std::size_t size = g.size();
    double edge = 0.0, total = 0.0;
    for (std::size_t idx = 0; idx < size; ++idx) {
        const int l = static_cast<int>(idx % static_cast<std::size_t>(n));
        const int j = static_cast<int>((idx / static_cast<std::size_t>(n)) % static_cast<std::size_t>(n));
        const int i = static_cast<int>(idx / (static_cast<std::size_t>(n) * static_cast<std::size_t>(n)));
        double v = 0.0;
        for (std::size_t c = 0; c < 4; ++c) v += std::norm(slice.values[c * size + idx]);
        v *= g.weight(idx);
        total += v;
        if (i == 0 || j == 0 || l == 0 || i == n - 1 || j == n - 1 || l == n - 1) edge += v;
    }
    return total > 0.0 ? edge / total : 0.0;
}

ModeListState lift(const GridSliceState& slice, const LiftOptions& options, LiftReport* report) {
    const HyperplaneParams& params = slice.grid.params();
    if (!params.is_lab_plane()) throw DomainError("lift: slice must lie on a constant-time lab plane");
    if (slice.potential) throw DomainError("lift: only free data (A = 0) can be expanded in plane waves");
    require_unit_c(slice.c, "lift");
    const auto lattice =
        SpectralLattice::for_slice(slice.mass, 1.0, slice.grid.radius(), slice.grid.n(), params.y.tail<3>());
    const std::vector<cplx> values = lattice->from_slice(slice.values);
    std::vector<cplx> coeffs(values.size());
    lattice->to_coeffs(values, coeffs);
    const double edge = lattice->edge_fraction(coeffs);
    if (report) {
        report->edge_fraction = edge;
        report->tail_fraction = tail_fraction(slice);
    }
    if (edge > options.nyquist_fraction)
        throw NumericalError("lift: " + std::to_string(edge) +
                             " of the norm sits at the grid's Nyquist band; refine the grid");
    ModeListState out = modes_from_lattice(*lattice, coeffs, params.y[0], options.prune_fraction);
    if (report) report->modes = out.modes.size();
    return out;
}

// ---------------------------------------------------------------------------

ModeListState poincare_transform(const ModeListState& state, const LorentzTransform& t) {
    const SpinorRep rep = spinor_rep(t);
    ModeListState out;
    out.mass = state.mass;
    out.period = state.period;
    out.frame = t * state.frame;
    out.modes.reserve(state.modes.size());
    for (const Mode& m : state.modes) {
        Mode r = m;
        r.p = t.apply_linear(m.p);
        const double ratio = m.p[0] / r.p[0];
        r.weight = m.weight / ratio;
        r.amp = (ratio * std::polar(1.0, m.sign * minkowski_dot(r.p, t.shift()))) * (rep.S * m.amp);
        out.modes.push_back(r);
    }
    return out;
}

QuantumState poincare_transform(const QuantumState& state, const LorentzTransform& t) {
    if (const auto* modes = std::get_if<ModeListState>(&state)) return poincare_transform(*modes, t);
    const auto& slice = std::get<GridSliceState>(state);
    const ModeListState moved = poincare_transform(lift(slice), t);
    return restrict_to(moved, slice.grid.params(), slice.grid.radius(), slice.grid.n());
}

ModeListState charge_conjugate(const ModeListState& state) {
    const Mat4c& cm = dirac_charge_conjugator().state_map;
    ModeListState out;
    out.mass = state.mass;
    out.period = state.period;
    out.frame = state.frame;
    out.modes.reserve(state.modes.size());
    for (const Mode& m : state.modes) {
        Mode r = m;
        for (int& k : r.key) k = -k;
        r.sign = -m.sign;
        r.amp = cm * m.amp.conjugate();
        out.modes.push_back(r);
    }
    out.canonicalize();
    return out;
}

GridSliceState charge_conjugate(const GridSliceState& state) {
    const Mat4c& cm = dirac_charge_conjugator().state_map;
    GridSliceState out = state;
    for (std::size_t i = 0; i < state.grid.size(); ++i) out.set(i, cm * state.at(i).conjugate());
    return out;
}

QuantumState charge_conjugate(const QuantumState& state) {
    if (const auto* modes = std::get_if<ModeListState>(&state)) return charge_conjugate(*modes);
    return charge_conjugate(std::get<GridSliceState>(state));
}

// ---------------------------------------------------------------------------

ModeListState gaussian_packet(const GaussianPacket& spec, double mass, double period) {
    if (!(spec.sigma_p > 0.0)) throw DomainError("packet momentum spread must be positive");
    if (!(mass > 0.0)) throw DomainError("mass must be positive");
    if (!(period > 0.0)) throw DomainError("lattice period must be positive");
    if (spec.sign != 1 && spec.sign != -1) throw DomainError("energy sign must be +1 or -1");
    const double dk = 2.0 * pi / period;
    const double w = dk * dk * dk;
    const double reach = spec.cutoff_sigmas * spec.sigma_p;
    ModeListState out;
    out.mass = mass;
    out.period = period;

    int lo[3], hi[3];
    for (int d = 0; d < 3; ++d) {
        lo[d] = static_cast<int>(std::floor((spec.momentum[d] - reach) / dk));
        hi[d] = static_cast<int>(std::ceil((spec.momentum[d] + reach) / dk));
    }
    for (int a = lo[0]; a <= hi[0]; ++a)
        for (int b = lo[1]; b <= hi[1]; ++b)
            for (int c = lo[2]; c <= hi[2]; ++c) {
                const Vec3 k = dk * Vec3(a, b, c);
                const double d2 = (k - spec.momentum).squaredNorm();
                if (d2 > reach * reach) continue;
                const Spinor chi = energy_projection(k, mass, spec.sign, spec.polarization);
                if (chi.norm() == 0.0) continue;
                Mode m;
                m.key = {a, b, c};
                m.sign = spec.sign;
                m.p = Vec4(std::sqrt(k.squaredNorm() + mass * mass), spec.sign * k[0], spec.sign * k[1],
                           spec.sign * k[2]);
                m.weight = w;
                m.amp = (std::exp(-d2 / (4.0 * spec.sigma_p * spec.sigma_p)) * std::polar(1.0, -k.dot(spec.center))) *
                        chi;
                out.modes.push_back(m);
            }
    out.canonicalize();
    const double norm = hilbert_norm(out);
    if (!(norm > 0.0)) throw DomainError("packet polarization has no overlap with the requested energy sign");
    for (Mode& m : out.modes) m.amp /= norm;
    return out;
}

std::vector<cplx> gaussian_coefficients(const GaussianPacket& spec, const SpectralLattice& lattice) {
    if (!(spec.sigma_p > 0.0)) throw DomainError("packet momentum spread must be positive");
    const std::size_t n = lattice.size();
    const double reach = spec.cutoff_sigmas * spec.sigma_p;
    std::vector<cplx> raw(4 * n, cplx(0.0, 0.0));
    for (std::size_t f = 0; f < n; ++f) {
        const Vec3 k = lattice.wavevector(f);
        const double d2 = (k - spec.momentum).squaredNorm();
        if (d2 > reach * reach) continue;
        const cplx g = std::exp(-d2 / (4.0 * spec.sigma_p * spec.sigma_p)) * std::polar(1.0, -k.dot(spec.center));
        for (std::size_t c = 0; c < 4; ++c) raw[c * n + f] = g * spec.polarization[static_cast<Eigen::Index>(c)];
    }
    std::vector<cplx> coeffs(4 * n);
    lattice.project(raw, spec.sign, coeffs);
    const double norm = std::sqrt(lattice.norm_sq(coeffs));
    if (!(norm > 0.0)) throw DomainError("packet has no content on this lattice");
    for (cplx& v : coeffs) v /= norm;
    return coeffs;
}

}  // namespace releqt
