#pragma once

#include <cstddef>
#include <vector>

#include "releqt/types.hpp"

namespace releqt {

/// A point lambda = (y, alpha, phi) of the hyperplane parameter domain:
/// |alpha| < 1 and |phi| < pi, both strict.
struct HyperplaneParams {
    Vec4 y = Vec4::Zero();
    Vec3 alpha = Vec3::Zero();
    Vec3 phi = Vec3::Zero();

    /// Validating factory; throws DomainError when a bound is violated.
    static HyperplaneParams make(const Vec4& y, const Vec3& alpha = Vec3::Zero(),
                                 const Vec3& phi = Vec3::Zero());
    /// The constant-time plane x^0 = x0 through the spatial origin.
    static HyperplaneParams lab(double x0) { return make(Vec4(x0, 0, 0, 0)); }

    void validate() const;
    Mat3 rotation() const;
    /// alpha = 0 and phi = 0: a constant-time plane of the lab frame.
    bool is_lab_plane() const { return alpha.isZero(0.0) && phi.isZero(0.0); }
};

/// sigma_lambda(u) = (y^0 + alpha.R u, y + R u).
Vec4 sigma(const HyperplaneParams& params, const Vec3& u);

/// Covector (1, -alpha) per unit du.
Vec4 surface_element(const HyperplaneParams& params);

/// Uniform N^3 Cartesian grid on [-R, R]^3 in u-coordinates with trapezoid
/// weights. Point index = (i * N + j) * N + l, axis u^3 fastest.
class HyperplaneGrid {
public:
    HyperplaneGrid(const HyperplaneParams& params, double radius, int n);

    const HyperplaneParams& params() const { return params_; }
    double radius() const { return radius_; }
    int n() const { return n_; }
    double spacing() const { return h_; }
    std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }

    double axis(int i) const { return -radius_ + h_ * i; }
    double axis_weight(int i) const { return (i == 0 || i == n_ - 1) ? 0.5 * h_ : h_; }

    Vec3 u(std::size_t index) const;
    double weight(std::size_t index) const;
    Vec4 point(std::size_t index) const { return sigma(params_, u(index)); }

    /// Sum of all weights, equal to (2R)^3.
    double total_weight() const;

private:
    HyperplaneParams params_;
    double radius_;
    int n_;
    double h_;
};

HyperplaneGrid make_grid(const HyperplaneParams& params, double radius, int n);

}  // namespace releqt
