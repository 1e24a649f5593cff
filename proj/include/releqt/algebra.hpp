#pragma once

#include <array>
#include <string>
#include <vector>

#include "releqt/types.hpp"

namespace releqt {

/// Gamma matrices gamma^0..gamma^3 in the Dirac representation,
/// metric (+,-,-,-).
struct GammaSet {
    std::array<Mat4c, 4> gamma;

    const Mat4c& operator[](int mu) const { return gamma[static_cast<std::size_t>(mu)]; }

    /// alpha^k = gamma^0 gamma^k (k = 1..3).
    Mat4c alpha(int k) const { return gamma[0] * gamma[static_cast<std::size_t>(k)]; }
    const Mat4c& beta() const { return gamma[0]; }
};

GammaSet build_gamma_dirac();

/// Process-wide Dirac-representation gamma set (immutable).
const GammaSet& dirac();

/// Free Dirac Hamiltonian in momentum space, c alpha.k + beta m c^2.
Mat4c momentum_hamiltonian(const Vec3& k, double mass, double c = 1.0);

/// 1 - gamma^0 gamma.alpha, the weight matrix of the hyperplane inner product.
Mat4c tilt_weight(const Vec3& alpha);

/// One factor of a decomposition record.
struct TransformStep {
    enum class Kind { boost, rotation, translation };
    Kind kind;
    int axis = 0;        ///< boost axis 1..3
    double rapidity = 0; ///< boost
    Vec3 axis_angle = Vec3::Zero();  ///< rotation vector, right-hand rule
    Vec4 shift = Vec4::Zero();       ///< translation
};

/// Restricted Poincare transformation x -> Lambda x + a with Lambda in L_+^up.
class LorentzTransform {
public:
    LorentzTransform();

    static LorentzTransform identity() { return {}; }
    /// Active boost: a particle at rest acquires momentum m sinh(eta) along +axis.
    static LorentzTransform boost(int axis, double rapidity);
    static LorentzTransform rotation(const Vec3& axis_angle);
    static LorentzTransform translation(const Vec4& a);
    /// Validating constructor from an explicit matrix; throws DomainError
    /// outside L_+^up or when the metric is not preserved.
    static LorentzTransform from_matrix(const Mat4& lambda, const Vec4& a = Vec4::Zero());

    const Mat4& matrix() const { return lambda_; }
    const Vec4& shift() const { return shift_; }
    const std::vector<TransformStep>& record() const { return record_; }

    Vec4 apply(const Vec4& x) const { return lambda_ * x + shift_; }
    Vec4 apply_inverse(const Vec4& x) const;
    /// Acts on momenta (no translation part).
    Vec4 apply_linear(const Vec4& p) const { return lambda_ * p; }

    LorentzTransform inverse() const;
    /// (this * other)(x) = this(other(x)).
    LorentzTransform operator*(const LorentzTransform& other) const;

    bool is_identity_linear(double tol = 1e-14) const;
    bool is_identity(double tol = 1e-14) const;

    /// Max |Lambda^T g Lambda - g| scaled by max(1, |Lambda|^2).
    double metric_defect() const;

private:
    LorentzTransform(const Mat4& lambda, const Vec4& a, std::vector<TransformStep> rec);

    Mat4 lambda_;
    Vec4 shift_;
    std::vector<TransformStep> record_;
};

void validate_restricted(const Mat4& lambda, double tol = 1e-12);

/// Right-hand-rule rotation by |phi| about phi/|phi| (Rodrigues).
Mat3 rotation_matrix(const Vec3& phi);

/// Spinor representation S(Lambda) of a restricted transform.
struct SpinorRep {
    Mat4c S;
    Mat4c S_inv;
    LorentzTransform transform;
};

/// Builds S(Lambda) by factoring Lambda = R_1 B_x(eta) R_2 and composing the
/// generator exponentials. The overall sign follows the principal-angle lift
/// of each rotation factor; probabilities never depend on it.
SpinorRep spinor_rep(const LorentzTransform& t);

/// exp((eta/2) gamma^0 gamma^axis).
Mat4c spinor_boost(int axis, double rapidity);
/// exp((theta/2) n.(gamma^2 gamma^3, gamma^3 gamma^1, gamma^1 gamma^2)).
Mat4c spinor_rotation(const Vec3& axis_angle);

struct ChargeConjugator {
    Mat4c C;
    /// C gamma^{0T}, the matrix applied to F^* in F^C = C gamma^{0T} F^*.
    Mat4c state_map;
};

ChargeConjugator charge_conjugator(const GammaSet& g);
const ChargeConjugator& dirac_charge_conjugator();

}  // namespace releqt
