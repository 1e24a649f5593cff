#include "releqt/nufft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

namespace releqt::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// Smallest 2^a 3^b 5^c not below n.
int fft_friendly(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int f : {2, 3, 5})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

}  // namespace

std::vector<cplx> nufft_spinor_sum(std::span<const Vec3> theta, std::span<const Spinor> strength, int n,
                                   int spread) {
    if (theta.size() != strength.size()) throw DomainError("nufft: point and strength counts differ");
    if (n < 1) throw DomainError("nufft: grid size must be positive");
    const std::size_t nn = static_cast<std::size_t>(n);
    const std::size_t total = nn * nn * nn;
    std::vector<cplx> out(4 * total, cplx(0.0, 0.0));
    if (theta.empty()) return out;

    const int mr = fft_friendly(std::max(2 * n, 2 * spread));
    const double ratio = static_cast<double>(mr) / n;
    const double tau = pi * spread / (static_cast<double>(n) * n * ratio * (ratio - 0.5));
    const double dxi = 2.0 * pi / mr;
    const int n0 = n / 2;
    const int width = 2 * spread;
    const std::size_t mrs = static_cast<std::size_t>(mr);
    const std::size_t grid_size = mrs * mrs * mrs;

    // Shift output indices to m = n - n0 so the kernel deconvolution stays small.
    std::vector<Spinor> shifted(strength.size());
    for (std::size_t p = 0; p < theta.size(); ++p) {
        for (int d = 0; d < 3; ++d)
            if (!(std::abs(theta[p][d]) < pi))
                throw NumericalError("nufft: wavevector outside the grid's Nyquist band");
        const double arg = n0 * (theta[p][0] + theta[p][1] + theta[p][2]);
        shifted[p] = strength[p] * cplx(std::cos(arg), std::sin(arg));
    }

    // Kernel tables per point and axis.
    std::vector<double> kern(theta.size() * 3 * static_cast<std::size_t>(width));
    std::vector<int> first(theta.size() * 3);
    for (std::size_t p = 0; p < theta.size(); ++p)
        for (int d = 0; d < 3; ++d) {
            const int j0 = static_cast<int>(std::floor(theta[p][d] / dxi)) - spread + 1;
            first[p * 3 + d] = j0;
            double* k = &kern[(p * 3 + d) * width];
            for (int w = 0; w < width; ++w) {
                const double dist = theta[p][d] - dxi * (j0 + w);
                k[w] = std::exp(-dist * dist / (4.0 * tau));
            }
        }

    std::vector<cplx> grid(grid_size);
    std::vector<cplx> spectrum(grid_size);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_3d(mr, mr, mr, reinterpret_cast<fftw_complex*>(grid.data()),
                                reinterpret_cast<fftw_complex*>(spectrum.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    if (!plan) throw NumericalError("nufft: FFT planning failed");

    std::vector<std::size_t> iz(static_cast<std::size_t>(width));
    const double pre = std::pow(std::sqrt(pi / tau) / mr, 3);
    std::vector<double> deconv(nn);
    for (int i = 0; i < n; ++i) {
        const double m = i - n0;
        deconv[static_cast<std::size_t>(i)] = std::exp(tau * m * m);
    }

    for (int c = 0; c < 4; ++c) {
        std::fill(grid.begin(), grid.end(), cplx(0.0, 0.0));
        for (std::size_t p = 0; p < theta.size(); ++p) {
            const cplx s = shifted[p][c];
            if (s == cplx(0.0, 0.0)) continue;
            const double* kx = &kern[(p * 3 + 0) * width];
            const double* ky = &kern[(p * 3 + 1) * width];
            const double* kz = &kern[(p * 3 + 2) * width];
            const int jx = first[p * 3 + 0], jy = first[p * 3 + 1], jz = first[p * 3 + 2];
            for (int w = 0; w < width; ++w) iz[static_cast<std::size_t>(w)] = static_cast<std::size_t>(((jz + w) % mr + mr) % mr);
            for (int a = 0; a < width; ++a) {
                const std::size_t ix = static_cast<std::size_t>(((jx + a) % mr + mr) % mr);
                const cplx sx = s * kx[a];
                for (int b = 0; b < width; ++b) {
                    const std::size_t iy = static_cast<std::size_t>(((jy + b) % mr + mr) % mr);
                    const cplx sxy = sx * ky[b];
                    cplx* row = &grid[(ix * mrs + iy) * mrs];
                    for (int w = 0; w < width; ++w) row[iz[static_cast<std::size_t>(w)]] += sxy * kz[w];
                }
            }
        }
        fftw_execute(plan);
        cplx* dst = &out[static_cast<std::size_t>(c) * total];
        for (int i = 0; i < n; ++i) {
            const std::size_t si = static_cast<std::size_t>(((i - n0) % mr + mr) % mr);
            for (int j = 0; j < n; ++j) {
                const std::size_t sj = static_cast<std::size_t>(((j - n0) % mr + mr) % mr);
                const double dij = pre * deconv[static_cast<std::size_t>(i)] * deconv[static_cast<std::size_t>(j)];
                for (int l = 0; l < n; ++l) {
                    const std::size_t sl = static_cast<std::size_t>(((l - n0) % mr + mr) % mr);
                    dst[(static_cast<std::size_t>(i) * nn + j) * nn + l] =
                        dij * deconv[static_cast<std::size_t>(l)] * spectrum[(si * mrs + sj) * mrs + sl];
                }
            }
        }
    }
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

std::vector<cplx> direct_spinor_sum(std::span<const Vec3> theta, std::span<const Spinor> strength, int n) {
    const std::size_t nn = static_cast<std::size_t>(n);
    const std::size_t total = nn * nn * nn;
    std::vector<cplx> out(4 * total, cplx(0.0, 0.0));
    std::vector<cplx> ex(nn), ey(nn), ez(nn);
    for (std::size_t p = 0; p < theta.size(); ++p) {
        for (std::size_t i = 0; i < nn; ++i) {
            const double d = static_cast<double>(i);
            ex[i] = std::polar(1.0, theta[p][0] * d);
            ey[i] = std::polar(1.0, theta[p][1] * d);
            ez[i] = std::polar(1.0, theta[p][2] * d);
        }
        for (std::size_t i = 0; i < nn; ++i)
            for (std::size_t j = 0; j < nn; ++j) {
                const cplx eij = ex[i] * ey[j];
                for (std::size_t l = 0; l < nn; ++l) {
                    const cplx e = eij * ez[l];
                    const std::size_t idx = (i * nn + j) * nn + l;
                    for (std::size_t c = 0; c < 4; ++c) out[c * total + idx] += strength[p][static_cast<Eigen::Index>(c)] * e;
                }
            }
    }
    return out;
}

}  // namespace releqt::detail
