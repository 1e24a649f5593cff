#pragma once

#include <cstddef>
#include <utility>

#include "releqt/types.hpp"

namespace releqt::detail {

/// Pairwise (cascade) summation of term(i) over [begin, end). The tree shape
/// depends only on the range, so any partition of the work over threads
/// that follows the same tree reproduces the serial result bit for bit.
template <typename T, typename F>
T pairwise_sum(std::size_t begin, std::size_t end, const F& term) {
    constexpr std::size_t block = 128;
    if (end - begin <= block) {
        T s{};
        for (std::size_t i = begin; i < end; ++i) s += term(i);
        return s;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    return pairwise_sum<T>(begin, mid, term) + pairwise_sum<T>(mid, end, term);
}

/// sigma.k applied to a 2-spinor (a, b).
inline std::pair<cplx, cplx> sigma_dot(const Vec3& k, cplx a, cplx b) {
    const cplx kp(k[0], k[1]);   // k1 + i k2
    const cplx km(k[0], -k[1]);  // k1 - i k2
    return {k[2] * a + km * b, kp * a - k[2] * b};
}

/// c alpha.k psi + beta m c^2 psi for a spinor stored as four scalars.
inline void apply_free_hamiltonian(const Vec3& ck, double mc2, const cplx in[4], cplx out[4]) {
    const auto [l0, l1] = sigma_dot(ck, in[2], in[3]);
    const auto [u0, u1] = sigma_dot(ck, in[0], in[1]);
    out[0] = l0 + mc2 * in[0];
    out[1] = l1 + mc2 * in[1];
    out[2] = u0 - mc2 * in[2];
    out[3] = u1 - mc2 * in[3];
}

}  // namespace releqt::detail
