#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "releqt/algebra.hpp"

namespace releqt {
namespace {

using testing::Gen;
using testing::max_abs;

TEST(Gamma, CliffordRelations) {
    const GammaSet& g = dirac();
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
            const Mat4c anti = g[mu] * g[nu] + g[nu] * g[mu];
            const Mat4c expected = 2.0 * metric()(mu, nu) * Mat4c::Identity();
            EXPECT_LT(max_abs(anti - expected), 1e-15) << mu << nu;
        }
}

TEST(Gamma, HermiticityStructure) {
    const GammaSet& g = dirac();
    EXPECT_LT(max_abs(g[0] - g[0].adjoint()), 1e-15);
    for (int k = 1; k < 4; ++k) {
        EXPECT_LT(max_abs(g[k] + g[k].adjoint()), 1e-15);
        EXPECT_LT(max_abs(g.alpha(k) - g.alpha(k).adjoint()), 1e-15);
    }
}

TEST(Gamma, HamiltonianSquaresToEnergy) {
    Gen gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 k = gen.vec3(5.0);
        const double m = gen.uniform(0.1, 3.0);
        const double c = gen.uniform(0.5, 20.0);
        const Mat4c h = momentum_hamiltonian(k, m, c);
        const double e2 = c * c * k.squaredNorm() + m * m * std::pow(c, 4);
        EXPECT_LT(max_abs(h * h - e2 * Mat4c::Identity()), 1e-12 * e2);
    }
}

TEST(Gamma, TiltWeightEigenvalues) {
    Gen gen(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 a = gen.ball(0.99);
        Eigen::SelfAdjointEigenSolver<Mat4c> es(tilt_weight(a));
        const auto ev = es.eigenvalues();
        EXPECT_NEAR(ev[0], 1.0 - a.norm(), 1e-13);
        EXPECT_NEAR(ev[1], 1.0 - a.norm(), 1e-13);
        EXPECT_NEAR(ev[2], 1.0 + a.norm(), 1e-13);
        EXPECT_NEAR(ev[3], 1.0 + a.norm(), 1e-13);
    }
}

TEST(Lorentz, BoostOfRestMomentum) {
    const double m = 1.0;
    const double eta = 0.5;
    const Vec4 p = LorentzTransform::boost(1, eta).apply_linear(Vec4(m, 0, 0, 0));
    EXPECT_NEAR(p[0], std::cosh(eta), 1e-15);
    EXPECT_NEAR(p[1], std::sinh(eta), 1e-15);
    EXPECT_NEAR(p[1], 0.5210953054937474, 1e-15);
}

TEST(Lorentz, FromMatrixRejectsImproper) {
    Mat4 parity = metric();
    EXPECT_THROW(LorentzTransform::from_matrix(parity), DomainError);
    Mat4 time_rev = -metric();
    EXPECT_THROW(LorentzTransform::from_matrix(time_rev), DomainError);
    Mat4 scale = 2.0 * Mat4::Identity();
    EXPECT_THROW(LorentzTransform::from_matrix(scale), DomainError);
    EXPECT_NO_THROW(LorentzTransform::from_matrix(LorentzTransform::boost(2, 0.3).matrix()));
}

TEST(Lorentz, InverseAndComposition) {
    Gen gen(13);
    for (int trial = 0; trial < 100; ++trial) {
        const LorentzTransform a = gen.transform();
        const LorentzTransform b = gen.transform();
        const Vec4 x = gen.vec4(3.0);
        EXPECT_LT((a.inverse().apply(a.apply(x)) - x).norm(), 1e-10);
        EXPECT_LT(((a * b).apply(x) - a.apply(b.apply(x))).norm(), 1e-10);
        EXPECT_LT((a * b).metric_defect(), 1e-12);
        EXPECT_EQ((a * b).record().size(), a.record().size() + b.record().size());
    }
}

TEST(Spinor, IntertwinesGammaMatrices) {
    const GammaSet& g = dirac();
    Gen gen(14);
    for (int trial = 0; trial < 100; ++trial) {
        const LorentzTransform t = gen.transform(1.5, false);
        const SpinorRep rep = spinor_rep(t);
        const Mat4& l = t.matrix();
        for (int mu = 0; mu < 4; ++mu) {
            Mat4c rhs = Mat4c::Zero();
            for (int nu = 0; nu < 4; ++nu) rhs += l(mu, nu) * g[nu];
            EXPECT_LT(max_abs(rep.S_inv * g[mu] * rep.S - rhs), 1e-11) << "trial " << trial;
        }
        EXPECT_LT(max_abs(rep.S * rep.S_inv - Mat4c::Identity()), 1e-11);
    }
}

TEST(Spinor, BoostAndRotationClosedForms) {
    const GammaSet& g = dirac();
    const double eta = 0.7;
    const SpinorRep rep = spinor_rep(LorentzTransform::boost(3, eta));
    const Mat4c expected = std::cosh(eta / 2) * Mat4c::Identity() + std::sinh(eta / 2) * g[0] * g[3];
    EXPECT_LT(max_abs(rep.S - expected), 1e-13);
}

TEST(Spinor, FullTurnIsMinusIdentity) {
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 phi = Vec3::Zero();
        phi[axis] = 2.0 * pi;
        EXPECT_LT(max_abs(spinor_rotation(phi) + Mat4c::Identity()), 1e-14);
    }
}

TEST(Spinor, ProjectiveComposition) {
    Gen gen(15);
    for (int trial = 0; trial < 100; ++trial) {
        const LorentzTransform a = gen.transform(1.5, false);
        const LorentzTransform b = gen.transform(1.5, false);
        const Mat4c sab = spinor_rep(a * b).S;
        const Mat4c prod = spinor_rep(a).S * spinor_rep(b).S;
        const double plus = max_abs(sab - prod);
        const double minus = max_abs(sab + prod);
        EXPECT_LT(std::min(plus, minus), 1e-10 * std::max(1.0, max_abs(prod)));
    }
}

TEST(Spinor, PreservesCurrentInnerProduct) {
    // psi-bar phi is invariant: S^dagger gamma^0 S = gamma^0.
    const GammaSet& g = dirac();
    Gen gen(16);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat4c s = spinor_rep(gen.transform(1.0, false)).S;
        EXPECT_LT(max_abs(s.adjoint() * g[0] * s - g[0]), 1e-11);
    }
}

TEST(ChargeConjugation, Properties) {
    const GammaSet& g = dirac();
    const ChargeConjugator& cc = dirac_charge_conjugator();
    EXPECT_LT(max_abs(cc.C.adjoint() * cc.C - Mat4c::Identity()), 1e-15);
    for (int mu = 0; mu < 4; ++mu)
        EXPECT_LT(max_abs(cc.C * g[mu].transpose() * cc.C.adjoint() + g[mu]), 1e-15);
    // (F^C)^C = F.
    EXPECT_LT(max_abs(cc.state_map * cc.state_map.conjugate() - Mat4c::Identity()), 1e-15);
    // Equals i gamma^2 in this representation.
    EXPECT_LT(max_abs(cc.state_map - cplx(0, 1) * g[2]), 1e-15);
}

TEST(ChargeConjugation, CommutesWithSpinorRep) {
    const ChargeConjugator& cc = dirac_charge_conjugator();
    Gen gen(17);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat4c s = spinor_rep(gen.transform(1.5, false)).S;
        EXPECT_LT(max_abs(cc.state_map * s.conjugate() - s * cc.state_map), 1e-11);
    }
}

TEST(Rotation, RodriguesMatchesAngleAxis) {
    Gen gen(18);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 phi = gen.ball(3.0);
        const Mat3 ref = Eigen::AngleAxisd(phi.norm(), phi.normalized()).toRotationMatrix();
        EXPECT_LT((rotation_matrix(phi) - ref).cwiseAbs().maxCoeff(), 1e-14);
    }
}

}  // namespace
}  // namespace releqt
