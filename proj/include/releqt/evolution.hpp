#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "releqt/algebra.hpp"
#include "releqt/lattice.hpp"
#include "releqt/states.hpp"

namespace releqt {

/// H_D = c alpha.p + e gamma^0 gamma^mu A_mu + beta m c^2 on a lab slice.
struct DiracHamiltonian {
    double mass = 1.0;
    double c = 1.0;
    std::shared_ptr<const StaticPotential> potential;  ///< null means A = 0
};

/// Exact spectral propagation of a lab slice by coordinate time dt.
/// Throws NumericalError when the slice has content at the Nyquist band.
GridSliceState evolve_free(const GridSliceState& slice, double dt, double nyquist_fraction = 1e-8);

struct EvolutionReport {
    double norm_drift = 0.0;  ///< max relative norm change over the steps taken
    bool step_warning = false;  ///< some step drifted by more than 1e-8
};

/// One Strang step exp(-iV dt/2) exp(-iK dt) exp(-iV dt/2).
GridSliceState evolve_potential(const GridSliceState& slice, double dt, const DiracHamiltonian& h,
                                EvolutionReport* report = nullptr);
/// `steps` Strang steps covering total time t.
GridSliceState evolve_potential(const GridSliceState& slice, double t, int steps, const DiracHamiltonian& h,
                                EvolutionReport* report = nullptr);

/// H_D applied to a lab slice (spectral kinetic part plus local potential).
std::vector<cplx> apply_hamiltonian(const GridSliceState& slice, const DiracHamiltonian& h);

/// Geometry of the periodic lab lattice shared by couplings and the PDP engine.
struct GridSpec {
    double radius = 8.0;
    int n = 32;  ///< slice points per axis; the FFT uses n - 1
    Vec3 center = Vec3::Zero();
};

struct WorldlineNode {
    double tau = 0.0;
    Vec4 z = Vec4::Zero();
};

/// Detector j with Gaussian profile g(x) = kappa exp(-|x - z(tau)|^2 / (2 w^2))
/// on the slice x^0 = z^0(tau); w = infinity gives the scalar g = kappa.
struct DetectorSpec {
    int id = 1;
    std::vector<WorldlineNode> worldline;  ///< piecewise linear, tau increasing
    double kappa = 1.0;
    double width = std::numeric_limits<double>::infinity();

    /// Linear interpolation between nodes; the last segment is extended for
    /// tau beyond the final node.
    Vec4 position(double tau) const;
    double start_tau() const { return worldline.front().tau; }
    bool uniform() const { return std::isinf(width); }
    /// Profile at spatial point x for detector centre zc.
    double profile(const Vec3& x, const Vec3& zc) const;
    /// Throws DomainError: fewer than two nodes, non-increasing tau,
    /// spacelike or past-directed segments, kappa < 0, width <= 0.
    void validate() const;
};

/// G(tau) = W_F U^{-1}_{z0} g U_{z0} W_F^{-1}: lab-slice multiplication in the
/// coupling frame, carried to the current frame F.
struct CouplingOperator {
    const DetectorSpec* detector = nullptr;  ///< worldline given in the coupling frame
    double tau = 0.0;
    GridSpec grid;
    LorentzTransform frame;

    /// Profile edge value relative to kappa above which the profile is
    /// considered truncated by the grid.
    double edge_tolerance = 1e-4;
};

/// Checks that the profile decays to edge_tolerance * kappa inside the box.
void check_profile_support(const DetectorSpec& d, const Vec3& zc, const GridSpec& grid, double edge_tolerance);

/// G Psi (unnormalized).
QuantumState apply_coupling(const QuantumState& state, const CouplingOperator& op);

struct CouplingRates {
    double rate = 0.0;                ///< sum_j ||G_j Psi||^2
    std::vector<double> per_detector; ///< ||G_j Psi||^2
};

CouplingRates total_coupling(const QuantumState& state, std::span<const DetectorSpec> detectors, double tau,
                             const GridSpec& grid, const LorentzTransform& frame = LorentzTransform::identity());

/// Profile samples on the lattice nodes for detector centre zc.
std::vector<double> profile_on_lattice(const DetectorSpec& d, const Vec3& zc, const SpectralLattice& lattice);

}  // namespace releqt
