#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "releqt/lattice.hpp"
#include "releqt/states.hpp"

namespace releqt {
namespace {

using testing::Gen;

std::vector<cplx> random_coeffs(Gen& gen, std::size_t n) {
    std::vector<cplx> c(4 * n);
    for (cplx& v : c) v = cplx(gen.uniform(-1, 1), gen.uniform(-1, 1));
    return c;
}

TEST(Lattice, KeyLayout) {
    const SpectralLattice odd(1.0, 1.0, 1.0, 5);
    EXPECT_EQ(odd.min_key(), -2);
    EXPECT_EQ(odd.max_key(), 2);
    const SpectralLattice even(1.0, 1.0, 1.0, 4);
    EXPECT_EQ(even.min_key(), -2);
    EXPECT_EQ(even.max_key(), 1);
    for (std::size_t f = 0; f < odd.size(); ++f) EXPECT_EQ(odd.flat(odd.key(f)), f);
}

TEST(Lattice, TransformRoundTrip) {
    Gen gen(51);
    const SpectralLattice lat(1.0, 1.0, 2.5, 9, Vec3(0.3, -0.2, 1.0));
    const auto c = random_coeffs(gen, lat.size());
    std::vector<cplx> v(c.size()), back(c.size());
    lat.to_values(c, v);
    lat.to_coeffs(v, back);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT(std::abs(back[i] - c[i]), 1e-14);
}

TEST(Lattice, ValuesMatchPlaneWaveSum) {
    Gen gen(52);
    const SpectralLattice lat(1.0, 1.0, 1.5, 5, Vec3(0.4, 0.1, -0.3));
    const auto c = random_coeffs(gen, lat.size());
    std::vector<cplx> v(c.size());
    lat.to_values(c, v);
    const Vec3 x = lat.node(1, 3, 2);
    const std::size_t idx = (1 * 5 + 3) * 5 + 2;
    for (std::size_t comp = 0; comp < 4; ++comp) {
        cplx sum = 0.0;
        for (std::size_t f = 0; f < lat.size(); ++f)
            sum += c[comp * lat.size() + f] * std::polar(1.0, lat.wavevector(f).dot(x));
        EXPECT_LT(std::abs(sum - v[comp * lat.size() + idx]), 1e-12);
    }
}

TEST(Lattice, ParsevalNorm) {
    Gen gen(53);
    const SpectralLattice lat(1.0, 1.0, 2.0, 7);
    const auto c = random_coeffs(gen, lat.size());
    std::vector<cplx> v(c.size());
    lat.to_values(c, v);
    const double h = lat.spacing();
    double direct = 0.0;
    for (const cplx& x : v) direct += std::norm(x) * h * h * h;
    EXPECT_NEAR(lat.norm_sq(c), direct, 1e-10 * direct);
}

TEST(Lattice, PropagationMatchesModePhases) {
    Gen gen(54);
    const double period = 5.0;
    const ModeListState s = testing::random_modes(gen, 1.2, period, 20, 3);
    const SpectralLattice lat(1.2, 1.0, period / 2, 9);
    auto c = lattice_coefficients(s, lat, 0.0);
    const double t = 1.7;
    lat.propagate(c, t);
    const auto expected = lattice_coefficients(s, lat, t);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT(std::abs(c[i] - expected[i]), 1e-12);
}

TEST(Lattice, PropagationIsUnitaryAndComposes) {
    Gen gen(55);
    const SpectralLattice lat(0.7, 3.0, 2.0, 7);
    auto a = random_coeffs(gen, lat.size());
    auto b = a;
    const double n0 = lat.norm_sq(a);
    lat.propagate(a, 0.3);
    lat.propagate(a, 0.45);
    lat.propagate(b, 0.75);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(std::abs(a[i] - b[i]), 1e-12);
    EXPECT_NEAR(lat.norm_sq(a), n0, 1e-12 * n0);
}

TEST(Lattice, ProjectorsAreComplementaryAndIdempotent) {
    Gen gen(56);
    const SpectralLattice lat(1.0, 2.0, 2.0, 5);
    const auto a = random_coeffs(gen, lat.size());
    std::vector<cplx> p(a.size()), m(a.size()), pp(a.size());
    lat.project(a, +1, p);
    lat.project(a, -1, m);
    lat.project(p, +1, pp);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LT(std::abs(p[i] + m[i] - a[i]), 1e-14);
        EXPECT_LT(std::abs(pp[i] - p[i]), 1e-14);
    }
    EXPECT_LT(std::abs(lat.inner(p, m)), 1e-12);
}

TEST(Lattice, HamiltonianIsHermitian) {
    Gen gen(57);
    const SpectralLattice lat(1.0, 1.0, 2.0, 5);
    const auto a = random_coeffs(gen, lat.size());
    const auto b = random_coeffs(gen, lat.size());
    std::vector<cplx> ha(a.size()), hb(b.size());
    lat.apply_hamiltonian(a, ha);
    lat.apply_hamiltonian(b, hb);
    EXPECT_LT(std::abs(lat.inner(a, hb) - lat.inner(ha, b)), 1e-10);
}

TEST(Lattice, SliceLayoutWrapsPeriodically) {
    const SpectralLattice lat(1.0, 1.0, 1.0, 3);
    std::vector<cplx> v(4 * lat.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = cplx(static_cast<double>(i), 0.0);
    const auto slice = lat.to_slice(v);
    EXPECT_EQ(slice.size(), 4u * 64u);
    EXPECT_EQ(slice[(3 * 4 + 3) * 4 + 3], v[0]);
    EXPECT_EQ(lat.from_slice(slice), v);
}

}  // namespace
}  // namespace releqt
