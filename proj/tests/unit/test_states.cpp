#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "generators.hpp"
#include "releqt/nufft.hpp"
#include "releqt/states.hpp"

namespace releqt {
namespace {

using testing::Gen;
using testing::random_modes;

ModeListState rest_mode(double mass, double weight, const Spinor& amp) {
    ModeListState s;
    s.mass = mass;
    s.period = 2.0 * pi;
    Mode m;
    m.sign = 1;
    m.p = Vec4(mass, 0, 0, 0);
    m.weight = weight;
    m.amp = amp;
    s.modes.push_back(m);
    return s;
}

double max_diff(std::span<const cplx> a, std::span<const cplx> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

double max_abs(std::span<const cplx> a) {
    double d = 0.0;
    for (const cplx& v : a) d = std::max(d, std::abs(v));
    return d;
}

TEST(Evaluate, RestModeExamples) {
    const ModeListState s = rest_mode(1.0, 0.5, Spinor::UnitX());
    EXPECT_LT((evaluate(s, Vec4::Zero()) - 0.5 * Spinor::UnitX()).norm(), 1e-15);
    const double t = 2.0;
    const Spinor expected = 0.5 * std::polar(1.0, -t) * Spinor::UnitX();
    EXPECT_LT((evaluate(s, Vec4(t, 0, 0, 0)) - expected).norm(), 1e-15);
}

TEST(Evaluate, TwoModeLinearity) {
    ModeListState s = rest_mode(1.0, 0.5, Spinor::UnitX());
    Mode m = s.modes[0];
    m.key = {1, 0, 0};
    m.p = Vec4(std::sqrt(2.0), 1, 0, 0);
    m.weight = 0.25;
    m.amp = Spinor::UnitY();
    s.modes.push_back(m);
    EXPECT_LT((evaluate(s, Vec4::Zero()) - (0.5 * Spinor::UnitX() + 0.25 * Spinor::UnitY())).norm(), 1e-15);
}

TEST(InnerProductOn, ConstantSpinors) {
    const auto grid = make_grid(HyperplaneParams::lab(0.0), 0.5, 5);
    GridSliceState f(grid, 1.0), g(grid, 1.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        f.set(i, Spinor::UnitX());
        g.set(i, Spinor::UnitY());
    }
    EXPECT_NEAR(inner_product_on(grid, f.values, f.values).real(), 1.0, 1e-14);
    EXPECT_EQ(inner_product_on(grid, f.values, g.values), cplx(0.0, 0.0));
}

TEST(InnerProductOn, TiltedWeightMatchesExplicitMatrix) {
    Gen gen(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto params = HyperplaneParams::make(gen.vec4(1.0), gen.ball(0.95), gen.ball(2.0));
        const auto grid = make_grid(params, 1.0, 4);
        GridSliceState f(grid, 1.0), g(grid, 1.0);
        const Mat4c w = tilt_weight(params.alpha);
        cplx expected = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            f.set(i, gen.spinor());
            g.set(i, gen.spinor());
            expected += grid.weight(i) * f.at(i).dot(w * g.at(i));
        }
        EXPECT_LT(std::abs(inner_product_on(grid, f.values, g.values) - expected), 1e-13);
        const double nf = norm_sq_on(grid, f.values);
        double plain = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) plain += grid.weight(i) * f.at(i).squaredNorm();
        EXPECT_GE(nf, (1.0 - params.alpha.norm()) * plain - 1e-12);
        EXPECT_LE(nf, (1.0 + params.alpha.norm()) * plain + 1e-12);
    }
}

TEST(InnerProductOn, SpinorCouplingAlongTilt) {
    // e1 + e4 couples through alpha^1: weight 1 - a on each of the two
    // diagonal entries and -a on each off-diagonal one, total 2 - 2a.
    const double a = 0.4;
    const auto grid = make_grid(HyperplaneParams::make(Vec4::Zero(), Vec3(a, 0, 0)), 0.5, 2);
    GridSliceState f(grid, 1.0);
    for (std::size_t i = 0; i < grid.size(); ++i) f.set(i, Spinor(1, 0, 0, 1));
    EXPECT_NEAR(norm_sq_on(grid, f.values), 2.0 - 2.0 * a, 1e-14);
}

TEST(InnerProductOn, RejectsMismatchedArrays) {
    const auto grid = make_grid(HyperplaneParams::lab(0.0), 1.0, 3);
    std::vector<cplx> f(4 * grid.size()), g(4 * grid.size() - 1);
    EXPECT_THROW(inner_product_on(grid, f, g), DomainError);
}

TEST(Nufft, MatchesDirectSum) {
    Gen gen(32);
    std::vector<Vec3> theta;
    std::vector<Spinor> strength;
    for (int p = 0; p < 40; ++p) {
        theta.push_back(gen.vec3(3.1));
        strength.push_back(gen.spinor());
    }
    for (int n : {7, 16}) {
        const auto fast = detail::nufft_spinor_sum(theta, strength, n);
        const auto ref = detail::direct_spinor_sum(theta, strength, n);
        EXPECT_LT(max_diff(fast, ref), 1e-10 * max_abs(ref)) << "n = " << n;
    }
}

TEST(Nufft, RejectsAliasedWavevectors) {
    std::vector<Vec3> theta{Vec3(3.2, 0, 0)};
    std::vector<Spinor> strength{Spinor::UnitX()};
    EXPECT_THROW(detail::nufft_spinor_sum(theta, strength, 8), NumericalError);
}

TEST(Restrict, RestModeGivesConstantSamples) {
    const ModeListState s = rest_mode(1.0, 0.3, Spinor::UnitX());
    const GridSliceState slice = restrict_to(s, HyperplaneParams::lab(0.0), pi, 6);
    for (std::size_t i = 0; i < slice.grid.size(); ++i)
        EXPECT_LT((slice.at(i) - 0.3 * Spinor::UnitX()).norm(), 1e-14);
}

TEST(Restrict, LatticeAndGeneralPathsAgreeWithPointEvaluation) {
    Gen gen(33);
    const double period = 6.0;
    const ModeListState s = random_modes(gen, 1.3, period, 30, 3);
    // Lattice path: lab plane, matching period, N - 1 = 9 points per period.
    const auto lab = HyperplaneParams::make(Vec4(0.7, 0.2, -0.1, 0.4));
    const GridSliceState a = restrict_to(s, lab, period / 2, 10);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.grid.size(); ++i)
        worst = std::max(worst, (a.at(i) - evaluate(s, a.grid.point(i))).norm());
    EXPECT_LT(worst, 1e-12);
    // General path on a tilted, rotated plane (direct and NUFFT).
    const auto tilted = HyperplaneParams::make(Vec4(0.3, 0.1, 0.2, -0.3), Vec3(0.3, -0.2, 0.1), Vec3(0.2, 0.5, -0.4));
    for (double limit : {1e12, 0.0}) {
        RestrictOptions opt;
        opt.direct_limit = limit;
        const GridSliceState b = restrict_to(s, tilted, 2.0, 12, opt);
        worst = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < b.grid.size(); ++i) {
            const Spinor ref = evaluate(s, b.grid.point(i));
            worst = std::max(worst, (b.at(i) - ref).norm());
            scale = std::max(scale, ref.norm());
        }
        EXPECT_LT(worst, 1e-11 * scale) << "direct_limit " << limit;
    }
}

TEST(Restrict, ReportsNyquistViolation) {
    Gen gen(34);
    const ModeListState s = random_modes(gen, 1.0, 2.0, 10, 6);
    const auto tilted = HyperplaneParams::make(Vec4::Zero(), Vec3(0.5, 0, 0));
    EXPECT_THROW(restrict_to(s, tilted, 4.0, 5), NumericalError);
}

TEST(Lift, RoundTripRecoversModes) {
    Gen gen(35);
    const double period = 7.0;
    const ModeListState s = random_modes(gen, 0.8, period, 25, 3);
    const auto plane = HyperplaneParams::make(Vec4(0.4, 0.3, 0.0, -0.2));
    const GridSliceState slice = restrict_to(s, plane, period / 2, 12);
    const ModeListState back = lift(slice);
    ASSERT_EQ(back.modes.size(), s.modes.size());
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
        EXPECT_EQ(back.modes[i].key, s.modes[i].key);
        EXPECT_EQ(back.modes[i].sign, s.modes[i].sign);
        EXPECT_LT((back.modes[i].amp - s.modes[i].amp).norm(), 1e-8 * s.modes[i].amp.norm());
    }
    EXPECT_LT(back.shell_residual(), 1e-10);
}

TEST(Lift, ConstantSliceSplitsIntoRestPair) {
    const auto grid = make_grid(HyperplaneParams::lab(0.0), 2.0, 6);
    GridSliceState slice(grid, 1.0);
    const Spinor chi(1.0, 0.0, 0.5, 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) slice.set(i, chi);
    const ModeListState m = lift(slice);
    ASSERT_EQ(m.modes.size(), 2u);
    for (const Mode& mode : m.modes) {
        EXPECT_EQ(mode.key, (WaveKey{0, 0, 0}));
        EXPECT_NEAR(mode.p[0], 1.0, 1e-15);
    }
    // At k = 0 the projectors are (1 +- beta)/2: upper and lower components.
    const Mode& neg = m.modes[0].sign < 0 ? m.modes[0] : m.modes[1];
    const Mode& posm = m.modes[0].sign > 0 ? m.modes[0] : m.modes[1];
    EXPECT_LT((posm.weight * posm.amp - Spinor(1.0, 0, 0, 0)).norm(), 1e-14);
    EXPECT_LT((neg.weight * neg.amp - Spinor(0, 0, 0.5, 0)).norm(), 1e-14);
}

TEST(Lift, ZeroSliceIsEmpty) {
    const GridSliceState slice(make_grid(HyperplaneParams::lab(0.0), 1.0, 4), 1.0);
    EXPECT_TRUE(lift(slice).modes.empty());
}

TEST(Lift, RejectsUnderResolvedSlice) {
    const auto grid = make_grid(HyperplaneParams::lab(0.0), 2.0, 8);
    GridSliceState slice(grid, 1.0);
    // Checkerboard along x^1: all content at the grid's band edge.
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const int l = static_cast<int>(i / 64);
        slice.set(i, (l % 2 ? 1.0 : -1.0) * Spinor::UnitX());
    }
    EXPECT_THROW(lift(slice), NumericalError);
    EXPECT_THROW(lift(GridSliceState(make_grid(HyperplaneParams::make(Vec4::Zero(), Vec3(0.1, 0, 0)), 1.0, 4), 1.0)),
                 DomainError);
}

TEST(Poincare, IdentityLeavesStateUnchanged) {
    Gen gen(36);
    const ModeListState s = random_modes(gen, 1.0, 5.0, 10);
    const ModeListState t = poincare_transform(s, LorentzTransform::identity());
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
        EXPECT_EQ(t.modes[i].amp, s.modes[i].amp);
        EXPECT_EQ(t.modes[i].p, s.modes[i].p);
    }
}

TEST(Poincare, TranslationOnlyAddsPhases) {
    Gen gen(37);
    const ModeListState a = random_modes(gen, 1.0, 5.0, 12);
    ModeListState b = random_modes(gen, 1.0, 5.0, 12);
    const auto shift = LorentzTransform::translation(Vec4(0.3, -1.0, 2.0, 0.5));
    const ModeListState ta = poincare_transform(a, shift);
    for (std::size_t i = 0; i < a.modes.size(); ++i) {
        EXPECT_NEAR(ta.modes[i].amp.norm(), a.modes[i].amp.norm(), 1e-15);
        EXPECT_EQ(ta.modes[i].weight, a.modes[i].weight);
    }
    const double before = std::norm(hilbert_inner(a, b));
    const double after = std::norm(hilbert_inner(ta, poincare_transform(b, shift)));
    EXPECT_NEAR(after, before, 1e-13 * std::max(1.0, before));
}

TEST(Poincare, BoostOfRestMode) {
    ModeListState s = rest_mode(1.0, 1.0, Spinor::UnitX());
    const double before = hilbert_norm(s);
    const ModeListState t = poincare_transform(s, LorentzTransform::boost(1, 1.0));
    EXPECT_NEAR(t.modes[0].p[1], std::sinh(1.0), 1e-15);
    EXPECT_NEAR(t.modes[0].p[0], std::cosh(1.0), 1e-15);
    EXPECT_NEAR(hilbert_norm(t), before, 1e-12 * before);
    EXPECT_LT(t.shell_residual(), 1e-12);
}

TEST(Poincare, Unitarity) {
    Gen gen(38);
    for (int trial = 0; trial < 50; ++trial) {
        const ModeListState a = random_modes(gen, 1.0, 6.0, 15);
        const ModeListState b = random_modes(gen, 1.0, 6.0, 15);
        const LorentzTransform t = gen.transform();
        const cplx before = hilbert_inner(a, b);
        const cplx after = hilbert_inner(poincare_transform(a, t), poincare_transform(b, t));
        EXPECT_LT(std::abs(after - before), 1e-12 * hilbert_norm(a) * hilbert_norm(b));
    }
}

TEST(Poincare, PointwiseCovariance) {
    // (W F)(Lambda x + a) = S F(x).
    Gen gen(39);
    const ModeListState s = random_modes(gen, 1.0, 6.0, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const LorentzTransform t = gen.transform();
        const ModeListState w = poincare_transform(s, t);
        const Mat4c S = spinor_rep(t).S;
        const Vec4 x = gen.vec4(2.0);
        const Spinor lhs = evaluate(w, t.apply(x));
        const Spinor rhs = S * evaluate(s, x);
        EXPECT_LT((lhs - rhs).norm(), 1e-11 * std::max(1.0, rhs.norm()));
        EXPECT_LT(w.shell_residual(), 1e-10);
    }
}

TEST(Poincare, RejectsPairsFromDifferentFrames) {
    Gen gen(40);
    const ModeListState a = random_modes(gen, 1.0, 6.0, 5);
    EXPECT_THROW(hilbert_inner(a, poincare_transform(a, LorentzTransform::boost(1, 0.2))), DomainError);
}

TEST(ChargeConjugation, AntiunitaryPairing) {
    Gen gen(41);
    for (int trial = 0; trial < 50; ++trial) {
        const ModeListState a = random_modes(gen, 1.0, 6.0, 15);
        const ModeListState b = random_modes(gen, 1.0, 6.0, 15);
        const cplx direct = hilbert_inner(a, b);
        const cplx conj = hilbert_inner(charge_conjugate(a), charge_conjugate(b));
        EXPECT_LT(std::abs(conj - std::conj(direct)), 1e-10);
        EXPECT_NEAR(hilbert_norm(charge_conjugate(a)), hilbert_norm(a), 1e-12);
    }
}

TEST(ChargeConjugation, InvolutionAndPointwiseMap) {
    Gen gen(42);
    const ModeListState a = random_modes(gen, 1.0, 6.0, 15);
    const ModeListState cc = charge_conjugate(charge_conjugate(a));
    ASSERT_EQ(cc.modes.size(), a.modes.size());
    for (std::size_t i = 0; i < a.modes.size(); ++i) EXPECT_LT((cc.modes[i].amp - a.modes[i].amp).norm(), 1e-15);
    const ModeListState c = charge_conjugate(a);
    EXPECT_LT(c.shell_residual(), 1e-12);
    const Mat4c& map = dirac_charge_conjugator().state_map;
    for (int trial = 0; trial < 10; ++trial) {
        const Vec4 x = gen.vec4(3.0);
        EXPECT_LT((evaluate(c, x) - map * evaluate(a, x).conjugate()).norm(), 1e-12);
    }
}

TEST(ChargeConjugation, CommutesWithPoincareAction) {
    Gen gen(43);
    const ModeListState a = random_modes(gen, 1.0, 6.0, 10);
    for (int trial = 0; trial < 10; ++trial) {
        const LorentzTransform t = gen.transform();
        const ModeListState lhs = charge_conjugate(poincare_transform(a, t));
        const ModeListState rhs = poincare_transform(charge_conjugate(a), t);
        ASSERT_EQ(lhs.modes.size(), rhs.modes.size());
        for (std::size_t i = 0; i < lhs.modes.size(); ++i) {
            EXPECT_EQ(lhs.modes[i].key, rhs.modes[i].key);
            EXPECT_LT((lhs.modes[i].amp - rhs.modes[i].amp).norm(), 1e-12 * (1.0 + rhs.modes[i].amp.norm()));
        }
    }
}

TEST(Packet, NormalizedAndPositiveEnergy) {
    GaussianPacket spec;
    spec.sigma_p = 0.5;
    spec.momentum = Vec3(0.5, 0, 0);
    const ModeListState s = gaussian_packet(spec, 1.0, 20.0);
    EXPECT_NEAR(hilbert_norm(s), 1.0, 1e-14);
    for (const Mode& m : s.modes) EXPECT_EQ(m.sign, 1);
    EXPECT_LT(s.shell_residual(), 1e-12);
    // Restricted to its own lattice the L2 norm equals the Hilbert norm.
    const GridSliceState slice = restrict_to(s, HyperplaneParams::lab(0.0), 10.0, 40);
    EXPECT_NEAR(norm_sq_on(slice.grid, slice.values), 1.0, 1e-10);
}

TEST(Packet, FrameIndependentNormOnTiltedPlanes) {
    GaussianPacket spec;
    spec.sigma_p = 0.5;
    spec.cutoff_sigmas = 7.0;
    const double mass = 4.0;
    const ModeListState s = gaussian_packet(spec, mass, 24.0);
    const QuantumState q = s;
    Gen gen(44);
    for (double a : {0.25, 0.5}) {
        Vec3 dir = gen.vec3(1.0).normalized();
        const auto params = HyperplaneParams::make(Vec4(0.2, 0.1, -0.1, 0.0), a * dir, gen.ball(1.0));
        const double n2 = inner_product(q, q, params, 8.0, 32).real();
        EXPECT_NEAR(n2, 1.0, 1e-6) << "|alpha| = " << a;
    }
}

TEST(Serialization, BitExactRoundTrip) {
    Gen gen(45);
    const ModeListState s = poincare_transform(random_modes(gen, 1.3, 6.0, 12), gen.transform());
    std::stringstream ss;
    write_state(ss, s);
    const auto back = std::get<ModeListState>(read_state(ss));
    ASSERT_EQ(back.modes.size(), s.modes.size());
    EXPECT_EQ(back.mass, s.mass);
    EXPECT_EQ(back.period, s.period);
    EXPECT_EQ(back.frame.matrix(), s.frame.matrix());
    EXPECT_EQ(back.frame.shift(), s.frame.shift());
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
        EXPECT_EQ(back.modes[i].key, s.modes[i].key);
        EXPECT_EQ(back.modes[i].sign, s.modes[i].sign);
        EXPECT_EQ(back.modes[i].p, s.modes[i].p);
        EXPECT_EQ(back.modes[i].weight, s.modes[i].weight);
        EXPECT_EQ(back.modes[i].amp, s.modes[i].amp);
    }

    const auto params = HyperplaneParams::make(Vec4(0.1, 0.2, 0.3, 0.4), Vec3(0.3, 0, 0), Vec3(0, 0.1, 0));
    GridSliceState slice(make_grid(params, 1.7, 5), 1.3, 2.5);
    for (std::size_t i = 0; i < slice.grid.size(); ++i) slice.set(i, gen.spinor());
    std::stringstream ss2;
    write_state(ss2, slice);
    const auto back2 = std::get<GridSliceState>(read_state(ss2));
    EXPECT_EQ(back2.values, slice.values);
    EXPECT_EQ(back2.grid.radius(), slice.grid.radius());
    EXPECT_EQ(back2.grid.params().alpha, params.alpha);
    EXPECT_EQ(back2.c, 2.5);
}

}  // namespace
}  // namespace releqt
