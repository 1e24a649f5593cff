#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "releqt/types.hpp"

namespace releqt {

using WaveKey = std::array<int, 3>;

/// Periodic spectral lattice on the box [center - R, center + R)^3 with M
/// points per axis and period L = 2R. A lab slice grid with N = M + 1
/// points per axis maps onto it by dropping the duplicate +R face.
///
/// Spinor fields are stored component-major: entry c * size() + flat.
/// Coefficients c_hat(k) represent the field
///     f(x) = sum_k c_hat(k) exp(i k.x)   (absolute coordinates x),
/// with k = (2 pi / L) * key and key in [-floor(M/2), ceil(M/2) - 1]^3.
class SpectralLattice {
public:
    SpectralLattice(double mass, double c, double radius, int points_per_axis,
                    const Vec3& center = Vec3::Zero());
    ~SpectralLattice();
    SpectralLattice(const SpectralLattice&) = delete;
    SpectralLattice& operator=(const SpectralLattice&) = delete;

    /// Builds the lattice for a lab slice grid of N points per axis.
    static std::unique_ptr<SpectralLattice> for_slice(double mass, double c, double radius, int n_grid,
                                                      const Vec3& center);

    int m() const { return m_; }
    std::size_t size() const { return size_; }
    double mass() const { return mass_; }
    double c() const { return c_; }
    double radius() const { return radius_; }
    double period() const { return 2.0 * radius_; }
    double spacing() const { return 2.0 * radius_ / m_; }
    double dk() const { return dk_; }
    const Vec3& center() const { return center_; }

    int min_key() const { return -(m_ / 2); }
    int max_key() const { return (m_ - 1) / 2; }
    bool key_in_range(const WaveKey& key) const;
    WaveKey key(std::size_t flat) const;
    std::size_t flat(const WaveKey& key) const;
    Vec3 wavevector(std::size_t flat) const;
    /// E(k) = sqrt(c^2 k^2 + m^2 c^4).
    double energy(std::size_t flat) const { return energy_[flat]; }
    /// Lattice node position for index (i, j, l).
    Vec3 node(int i, int j, int l) const;

    void to_values(std::span<const cplx> coeffs, std::span<cplx> values) const;
    void to_coeffs(std::span<const cplx> values, std::span<cplx> coeffs) const;

    /// exp(-i H(k) dt / hbar) per wavevector, in place, with H = c alpha.k + beta m c^2.
    void propagate(std::span<cplx> coeffs, double dt) const;
    /// H(k) applied per wavevector.
    void apply_hamiltonian(std::span<const cplx> coeffs, std::span<cplx> out) const;
    /// Energy-sign projector (1 + sign H/E)/2 per wavevector.
    void project(std::span<const cplx> coeffs, int sign, std::span<cplx> out) const;

    /// L^3 sum |c_hat|^2, the L2 norm squared over one period.
    double norm_sq(std::span<const cplx> coeffs) const;
    cplx inner(std::span<const cplx> a, std::span<const cplx> b) const;

    /// Fraction of norm carried by the outermost key shell.
    double edge_fraction(std::span<const cplx> coeffs) const;

    /// Drops the duplicate +R faces of an N^3 slice array (N = M + 1).
    std::vector<cplx> from_slice(std::span<const cplx> slice_values) const;
    /// Extends periodic lattice values to the N^3 slice layout.
    std::vector<cplx> to_slice(std::span<const cplx> values) const;

private:
    struct Plans;

    double mass_;
    double c_;
    double radius_;
    int m_;
    std::size_t size_;
    double dk_;
    Vec3 center_;
    std::vector<double> energy_;
    std::array<std::vector<cplx>, 3> phase_;  ///< exp(i k x_start) per axis, FFT order
    std::unique_ptr<Plans> plans_;
};

}  // namespace releqt
