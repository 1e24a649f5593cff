#include "releqt/hyperplane.hpp"

#include <cmath>
#include <string>

#include "releqt/algebra.hpp"

namespace releqt {

HyperplaneParams HyperplaneParams::make(const Vec4& y, const Vec3& alpha, const Vec3& phi) {
    HyperplaneParams p{y, alpha, phi};
    p.validate();
    return p;
}

void HyperplaneParams::validate() const {
    if (!(alpha.norm() < 1.0))
        throw DomainError("hyperplane tilt |alpha| = " + std::to_string(alpha.norm()) +
                          " violates the strict bound |alpha| < 1");
    if (!(phi.norm() < pi))
        throw DomainError("hyperplane rotation |phi| = " + std::to_string(phi.norm()) +
                          " violates the strict bound |phi| < pi");
    if (!y.allFinite() || !alpha.allFinite() || !phi.allFinite())
        throw DomainError("hyperplane parameters must be finite");
}

Mat3 HyperplaneParams::rotation() const { return rotation_matrix(phi); }

Vec4 sigma(const HyperplaneParams& params, const Vec3& u) {
    const Vec3 ru = params.rotation() * u;
    Vec4 x;
    x[0] = params.y[0] + params.alpha.dot(ru);
    x.tail<3>() = params.y.tail<3>() + ru;
    return x;
}

Vec4 surface_element(const HyperplaneParams& params) {
    return Vec4(1.0, -params.alpha[0], -params.alpha[1], -params.alpha[2]);
}

HyperplaneGrid::HyperplaneGrid(const HyperplaneParams& params, double radius, int n)
    : params_(params), radius_(radius), n_(n), h_(0.0) {
    params_.validate();
    if (!(radius > 0.0)) throw DomainError("grid radius R must be positive");
    if (n < 2) throw DomainError("grid needs N >= 2 points per axis");
    h_ = 2.0 * radius / (n - 1);
}

Vec3 HyperplaneGrid::u(std::size_t index) const {
    const std::size_t nn = static_cast<std::size_t>(n_);
    const int l = static_cast<int>(index % nn);
    const int j = static_cast<int>((index / nn) % nn);
    const int i = static_cast<int>(index / (nn * nn));
    return {axis(i), axis(j), axis(l)};
}

double HyperplaneGrid::weight(std::size_t index) const {
    const std::size_t nn = static_cast<std::size_t>(n_);
    const int l = static_cast<int>(index % nn);
    const int j = static_cast<int>((index / nn) % nn);
    const int i = static_cast<int>(index / (nn * nn));
    return axis_weight(i) * axis_weight(j) * axis_weight(l);
}

double HyperplaneGrid::total_weight() const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += axis_weight(i);
    return s * s * s;
}

HyperplaneGrid make_grid(const HyperplaneParams& params, double radius, int n) {
    return HyperplaneGrid(params, radius, n);
}

}  // namespace releqt
