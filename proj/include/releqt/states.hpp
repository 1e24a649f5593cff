#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "releqt/algebra.hpp"
#include "releqt/hyperplane.hpp"
#include "releqt/lattice.hpp"
#include "releqt/types.hpp"

namespace releqt {

/// One plane-wave component  w * amp * exp(-i s p.x)  of a free solution.
///
/// p is the on-shell momentum with p^0 = +sqrt(|p|^2 + m^2) for both energy
/// signs; the spatial wavevector of the mode is s * p. amp lies in the
/// s-energy eigenspace of H(s p), i.e. (gamma^mu p_mu - s m) amp = 0.
struct Mode {
    WaveKey key{};   ///< lattice index of the wavevector in the defining frame
    int sign = 1;    ///< energy sign s
    Vec4 p = Vec4::Zero();
    double weight = 0.0;
    Spinor amp = Spinor::Zero();
};

/// Free solution as a finite superposition of on-shell modes. The modes
/// originate on a periodic lattice of period `period` and have since been
/// carried by the Poincare transform `frame`; two mode lists can be paired
/// only when they share mass, period and frame.
struct ModeListState {
    double mass = 1.0;
    double period = 0.0;
    LorentzTransform frame;
    std::vector<Mode> modes;  ///< sorted by (key, sign), keys unique per sign

    /// Restores the canonical ordering after modes were edited.
    void canonicalize();
    /// max |(gamma^mu p_mu - s m) amp| / |amp| over modes.
    double shell_residual() const;
};

/// Static lab-frame electromagnetic potential, covariant components A_mu(x).
struct StaticPotential {
    double charge = 1.0;
    std::function<Vec4(const Vec3&)> covariant;
};

/// Spinor samples on a hyperplane grid, component-major (value of
/// component c at point i is values[c * size + i]).
struct GridSliceState {
    HyperplaneGrid grid;
    std::vector<cplx> values;
    double mass = 1.0;
    double c = 1.0;
    std::shared_ptr<const StaticPotential> potential;

    GridSliceState(const HyperplaneGrid& g, double mass_, double c_ = 1.0);

    Spinor at(std::size_t index) const;
    void set(std::size_t index, const Spinor& v);
};

using QuantumState = std::variant<ModeListState, GridSliceState>;

/// F(x) = sum w amp exp(-i s p.x).
Spinor evaluate(const ModeListState& state, const Vec4& x);

/// sum_i w_i f^dagger (1 - gamma^0 gamma.alpha) g over the grid.
cplx inner_product_on(const HyperplaneGrid& grid, std::span<const cplx> f, std::span<const cplx> g);
double norm_sq_on(const HyperplaneGrid& grid, std::span<const cplx> f);

/// Exact inner product of two mode lists, (2 pi)^3 sum w a^dagger b over
/// modes with matching key and sign.
cplx hilbert_inner(const ModeListState& a, const ModeListState& b);
double hilbert_norm(const ModeListState& a);

/// a_coeff * a + b_coeff * b, merging modes by (key, sign). Both states must
/// be pairable as for hilbert_inner.
ModeListState linear_combination(cplx a_coeff, const ModeListState& a, cplx b_coeff, const ModeListState& b);

/// Inner product computed on the grid of (params, R, N).
cplx inner_product(const QuantumState& a, const QuantumState& b, const HyperplaneParams& params, double radius,
                   int n);

/// Options for sampling a mode list on a grid.
struct RestrictOptions {
    /// Mode-count x point-count below which the sum is evaluated directly.
    double direct_limit = 2.0e6;
    int nufft_spread = 12;
};

/// The restriction map U_lambda.
GridSliceState restrict_to(const QuantumState& state, const HyperplaneParams& params, double radius, int n,
                           const RestrictOptions& options = {});
GridSliceState restrict_to(const ModeListState& state, const HyperplaneParams& params, double radius, int n,
                           const RestrictOptions& options = {});

struct LiftOptions {
    /// Maximum norm fraction allowed in the outermost wavevector shell.
    double nyquist_fraction = 1e-8;
    /// Modes with w |a|^2 below this fraction of the total are dropped.
    double prune_fraction = 1e-28;
};

struct LiftReport {
    double edge_fraction = 0.0;
    double tail_fraction = 0.0;
    std::size_t modes = 0;
};

/// The inverse map U_lambda^{-1} for free data on a constant-time lab plane.
ModeListState lift(const GridSliceState& slice, const LiftOptions& options = {}, LiftReport* report = nullptr);

/// Norm fraction of a slice carried by the outermost grid shell.
double tail_fraction(const GridSliceState& slice);

/// Lattice coefficients at lab time x0 of a mode list whose frame is a pure
/// translation and whose period matches the lattice.
std::vector<cplx> lattice_coefficients(const ModeListState& state, const SpectralLattice& lattice, double x0);
/// Mode list from lattice coefficients taken at lab time x0.
ModeListState modes_from_lattice(const SpectralLattice& lattice, std::span<const cplx> coeffs, double x0,
                                 double prune_fraction = 1e-28);

/// The operator W_(Lambda, a).
ModeListState poincare_transform(const ModeListState& state, const LorentzTransform& t);
QuantumState poincare_transform(const QuantumState& state, const LorentzTransform& t);

/// F -> C gamma^{0T} F^*.
ModeListState charge_conjugate(const ModeListState& state);
GridSliceState charge_conjugate(const GridSliceState& state);
QuantumState charge_conjugate(const QuantumState& state);

/// Gaussian packet in wavevector space.
struct GaussianPacket {
    Vec3 center = Vec3::Zero();
    Vec3 momentum = Vec3::Zero();  ///< mean wavevector
    double sigma_p = 0.2;
    Spinor polarization = Spinor::UnitX();
    int sign = 1;
    /// Modes further than this many sigma_p from the mean are omitted.
    double cutoff_sigmas = 8.0;
};

/// Normalized packet a(k) ~ exp(-|k - k0|^2 / (4 sigma^2)) exp(-i k.x_c) P_s(k) chi
/// on the lattice of the given period, Hilbert norm 1.
ModeListState gaussian_packet(const GaussianPacket& spec, double mass, double period);

/// Same packet directly as lattice coefficients at time 0.
std::vector<cplx> gaussian_coefficients(const GaussianPacket& spec, const SpectralLattice& lattice);

void write_state(std::ostream& os, const QuantumState& state);
QuantumState read_state(std::istream& is);
void save_state(const std::string& path, const QuantumState& state);
QuantumState load_state(const std::string& path);

}  // namespace releqt
