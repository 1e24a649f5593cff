#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace releqt {

using cplx = std::complex<double>;

using Vec3 = Eigen::Vector3d;
/// Contravariant 4-vector (x^0, x^1, x^2, x^3), x^0 = ct.
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

using Spinor = Eigen::Vector4cd;
using Mat4c = Eigen::Matrix4cd;

inline constexpr double pi = 3.141592653589793238462643383279502884;

/// Minkowski square (x^0)^2 - |x|^2, signature (+,-,-,-).
inline double minkowski_sq(const Vec4& x) {
    return x[0] * x[0] - x.tail<3>().squaredNorm();
}

/// Minkowski product a^mu b_mu.
inline double minkowski_dot(const Vec4& a, const Vec4& b) {
    return a[0] * b[0] - a.tail<3>().dot(b.tail<3>());
}

inline const Mat4& metric() {
    static const Mat4 g = Eigen::Vector4d(1.0, -1.0, -1.0, -1.0).asDiagonal();
    return g;
}

/// A precondition or domain constraint was violated by the caller.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical representation cannot carry the requested operation
/// (Nyquist violation, integrator failure, broken operator).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace releqt
