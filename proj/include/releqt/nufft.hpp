#pragma once

#include <span>
#include <vector>

#include "releqt/types.hpp"

namespace releqt::detail {

/// Evaluates f_c[n] = sum_p strength_p[c] exp(i theta_p . n) for the four
/// spinor components c on the uniform index grid n in [0, N)^3 (axis 3
/// fastest, output component-major). Each theta_p component must lie in
/// (-pi, pi). Gaussian-gridding type-1 transform with oversampling 2;
/// relative accuracy is about 1e-12 at the default spread.
std::vector<cplx> nufft_spinor_sum(std::span<const Vec3> theta, std::span<const Spinor> strength, int n,
                                   int spread = 12);

/// Direct O(points * grid) evaluation of the same sum, used as a reference
/// and for small problems.
std::vector<cplx> direct_spinor_sum(std::span<const Vec3> theta, std::span<const Spinor> strength, int n);

}  // namespace releqt::detail
