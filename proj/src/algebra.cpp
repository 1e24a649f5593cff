#include "releqt/algebra.hpp"

#include <cmath>

namespace releqt {

namespace {

const cplx I(0.0, 1.0);

Mat4c block(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b,
            const Eigen::Matrix2cd& c, const Eigen::Matrix2cd& d) {
    Mat4c m;
    m << a, b, c, d;
    return m;
}

Mat4 rotation_lambda(const Vec3& axis_angle) {
    Mat4 l = Mat4::Identity();
    l.block<3, 3>(1, 1) = rotation_matrix(axis_angle);
    return l;
}

Mat4 boost_lambda(int axis, double rapidity) {
    Mat4 l = Mat4::Identity();
    const double ch = std::cosh(rapidity);
    const double sh = std::sinh(rapidity);
    l(0, 0) = ch;
    l(axis, axis) = ch;
    l(0, axis) = sh;
    l(axis, 0) = sh;
    return l;
}

/// Pure boost with rapidity eta along unit vector n.
Mat4 boost_lambda_dir(const Vec3& n, double eta) {
    Mat4 l = Mat4::Identity();
    const double ch = std::cosh(eta);
    const double sh = std::sinh(eta);
    l(0, 0) = ch;
    l.block<3, 1>(1, 0) = sh * n;
    l.block<1, 3>(0, 1) = sh * n.transpose();
    l.block<3, 3>(1, 1) = Mat3::Identity() + (ch - 1.0) * n * n.transpose();
    return l;
}

/// Rotation vector carrying the x^1 axis onto the unit vector n.
Vec3 align_x_with(const Vec3& n) {
    const Vec3 ex = Vec3::UnitX();
    const Vec3 cross = ex.cross(n);
    const double s = cross.norm();
    const double c = ex.dot(n);
    if (s < 1e-15) {
        if (c > 0.0) return Vec3::Zero();
        return Vec3(0.0, 0.0, pi);
    }
    return cross / s * std::atan2(s, c);
}

Vec3 axis_angle_of(const Mat3& r) {
    Eigen::AngleAxisd aa(r);
    return aa.axis() * aa.angle();
}

}  // namespace

GammaSet build_gamma_dirac() {
    const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
    const Eigen::Matrix2cd zero = Eigen::Matrix2cd::Zero();
    Eigen::Matrix2cd s1, s2, s3;
    s1 << 0, 1, 1, 0;
    s2 << 0, -I, I, 0;
    s3 << 1, 0, 0, -1;

    GammaSet g;
    g.gamma[0] = block(id, zero, zero, -id);
    g.gamma[1] = block(zero, s1, -s1, zero);
    g.gamma[2] = block(zero, s2, -s2, zero);
    g.gamma[3] = block(zero, s3, -s3, zero);
    return g;
}

const GammaSet& dirac() {
    static const GammaSet g = build_gamma_dirac();
    return g;
}

Mat4c momentum_hamiltonian(const Vec3& k, double mass, double c) {
    const GammaSet& g = dirac();
    Mat4c h = (mass * c * c) * g.beta();
    for (int i = 0; i < 3; ++i) h += (c * k[i]) * g.alpha(i + 1);
    return h;
}

Mat4c tilt_weight(const Vec3& alpha) {
    const GammaSet& g = dirac();
    Mat4c w = Mat4c::Identity();
    for (int i = 0; i < 3; ++i) w -= alpha[i] * g.alpha(i + 1);
    return w;
}

Mat3 rotation_matrix(const Vec3& phi) {
    const double theta = phi.norm();
    if (theta == 0.0) return Mat3::Identity();
    const Vec3 n = phi / theta;
    Mat3 k;
    k << 0, -n[2], n[1],
         n[2], 0, -n[0],
         -n[1], n[0], 0;
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

// ---------------------------------------------------------------------------

LorentzTransform::LorentzTransform() : lambda_(Mat4::Identity()), shift_(Vec4::Zero()) {}

LorentzTransform::LorentzTransform(const Mat4& lambda, const Vec4& a, std::vector<TransformStep> rec)
    : lambda_(lambda), shift_(a), record_(std::move(rec)) {}

LorentzTransform LorentzTransform::boost(int axis, double rapidity) {
    if (axis < 1 || axis > 3) throw DomainError("boost axis must be 1, 2 or 3");
    TransformStep step{TransformStep::Kind::boost};
    step.axis = axis;
    step.rapidity = rapidity;
    return {boost_lambda(axis, rapidity), Vec4::Zero(), {step}};
}

LorentzTransform LorentzTransform::rotation(const Vec3& axis_angle) {
    TransformStep step{TransformStep::Kind::rotation};
    step.axis_angle = axis_angle;
    return {rotation_lambda(axis_angle), Vec4::Zero(), {step}};
}

LorentzTransform LorentzTransform::translation(const Vec4& a) {
    TransformStep step{TransformStep::Kind::translation};
    step.shift = a;
    return {Mat4::Identity(), a, {step}};
}

LorentzTransform LorentzTransform::from_matrix(const Mat4& lambda, const Vec4& a) {
    validate_restricted(lambda);
    return {lambda, a, {}};
}

Vec4 LorentzTransform::apply_inverse(const Vec4& x) const {
    const Mat4& g = metric();
    return g * lambda_.transpose() * g * (x - shift_);
}

LorentzTransform LorentzTransform::inverse() const {
    const Mat4& g = metric();
    const Mat4 inv = g * lambda_.transpose() * g;
    std::vector<TransformStep> rec;
    rec.reserve(record_.size());
    for (auto it = record_.rbegin(); it != record_.rend(); ++it) {
        TransformStep s = *it;
        s.rapidity = -s.rapidity;
        s.axis_angle = -s.axis_angle;
        s.shift = -s.shift;
        rec.push_back(s);
    }
    return {inv, -(inv * shift_), std::move(rec)};
}

LorentzTransform LorentzTransform::operator*(const LorentzTransform& other) const {
    std::vector<TransformStep> rec = other.record_;
    rec.insert(rec.end(), record_.begin(), record_.end());
    return {lambda_ * other.lambda_, lambda_ * other.shift_ + shift_, std::move(rec)};
}

bool LorentzTransform::is_identity_linear(double tol) const {
    return (lambda_ - Mat4::Identity()).cwiseAbs().maxCoeff() <= tol;
}

bool LorentzTransform::is_identity(double tol) const {
    return is_identity_linear(tol) && shift_.cwiseAbs().maxCoeff() <= tol;
}

double LorentzTransform::metric_defect() const {
    const Mat4& g = metric();
    const double scale = std::max(1.0, lambda_.cwiseAbs().maxCoeff() * lambda_.cwiseAbs().maxCoeff());
    return (lambda_.transpose() * g * lambda_ - g).cwiseAbs().maxCoeff() / scale;
}

void validate_restricted(const Mat4& lambda, double tol) {
    const Mat4& g = metric();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff() * lambda.cwiseAbs().maxCoeff());
    const double defect = (lambda.transpose() * g * lambda - g).cwiseAbs().maxCoeff() / scale;
    if (!(defect <= tol))
        throw DomainError("Lambda does not preserve the Minkowski metric (defect " +
                          std::to_string(defect) + ")");
    if (lambda(0, 0) < 1.0 - tol)
        throw DomainError("Lambda^0_0 < 1: transform reverses time, not in L_+^up");
    if (lambda.determinant() <= 0.0)
        throw DomainError("det Lambda != +1: transform mirrors space, not in L_+^up");
}

// ---------------------------------------------------------------------------

Mat4c spinor_boost(int axis, double rapidity) {
    const GammaSet& g = dirac();
    const Mat4c a = g[0] * g[axis];
    return std::cosh(0.5 * rapidity) * Mat4c::Identity() + std::sinh(0.5 * rapidity) * a;
}

Mat4c spinor_rotation(const Vec3& axis_angle) {
    const double theta = axis_angle.norm();
    if (theta == 0.0) return Mat4c::Identity();
    const GammaSet& g = dirac();
    const Vec3 n = axis_angle / theta;
    const Mat4c b = n[0] * g[2] * g[3] + n[1] * g[3] * g[1] + n[2] * g[1] * g[2];
    return std::cos(0.5 * theta) * Mat4c::Identity() + std::sin(0.5 * theta) * b;
}

SpinorRep spinor_rep(const LorentzTransform& t) {
    const Mat4& lambda = t.matrix();
    validate_restricted(lambda);

    // Lambda = B_n(eta) R with B_n(eta) = R_n B_x(eta) R_n^{-1}.
    const Vec3 col = lambda.block<3, 1>(1, 0);
    const double sh = col.norm();
    Mat4c s;
    if (sh < 1e-15) {
        s = spinor_rotation(axis_angle_of(lambda.block<3, 3>(1, 1)));
    } else {
        const Vec3 n = col / sh;
        const double eta = std::asinh(sh);
        const Mat4 rest = boost_lambda_dir(n, -eta) * lambda;
        const Vec3 align = align_x_with(n);
        const Mat4c s_align = spinor_rotation(align);
        s = s_align * spinor_boost(1, eta) * spinor_rotation(-align) *
            spinor_rotation(axis_angle_of(rest.block<3, 3>(1, 1)));
    }
    const GammaSet& g = dirac();
    Mat4c s_inv = g[0] * s.adjoint() * g[0];
    return {s, s_inv, t};
}

// ---------------------------------------------------------------------------

ChargeConjugator charge_conjugator(const GammaSet& g) {
    ChargeConjugator cc;
    cc.C = I * g[2] * g[0];
    cc.state_map = cc.C * g[0].transpose();
    return cc;
}

const ChargeConjugator& dirac_charge_conjugator() {
    static const ChargeConjugator cc = charge_conjugator(dirac());
    return cc;
}

}  // namespace releqt
