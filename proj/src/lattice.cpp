#include "releqt/lattice.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <string>

#include "releqt/numerics.hpp"

namespace releqt {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

struct SpectralLattice::Plans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    Plans(int m, std::size_t size) {
        std::vector<cplx> a(4 * size), b(4 * size);
        const int n[3] = {m, m, m};
        const int dist = static_cast<int>(size);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        std::lock_guard<std::mutex> lock(planner_mutex());
        forward = fftw_plan_many_dft(3, n, 4, as_fftw(a.data()), nullptr, 1, dist, as_fftw(b.data()), nullptr, 1,
                                     dist, FFTW_FORWARD, flags);
        backward = fftw_plan_many_dft(3, n, 4, as_fftw(a.data()), nullptr, 1, dist, as_fftw(b.data()), nullptr, 1,
                                      dist, FFTW_BACKWARD, flags);
        if (!forward || !backward) throw NumericalError("FFT planning failed");
    }
    ~Plans() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }
};

SpectralLattice::SpectralLattice(double mass, double c, double radius, int points_per_axis, const Vec3& center)
    : mass_(mass), c_(c), radius_(radius), m_(points_per_axis), center_(center) {
    if (!(mass > 0.0)) throw DomainError("mass must be positive");
    if (!(c > 0.0)) throw DomainError("c-parameter must be positive");
    if (!(radius > 0.0)) throw DomainError("grid radius R must be positive");
    if (m_ < 1) throw DomainError("spectral lattice needs at least one point per axis");
    size_ = static_cast<std::size_t>(m_) * m_ * m_;
    dk_ = 2.0 * pi / period();

    energy_.resize(size_);
    const double mc2 = mass_ * c_ * c_;
    for (std::size_t f = 0; f < size_; ++f) {
        const double ck = c_ * wavevector(f).norm();
        energy_[f] = std::sqrt(ck * ck + mc2 * mc2);
    }
    for (int d = 0; d < 3; ++d) {
        const double start = center_[d] - radius_;
        phase_[d].resize(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i) {
            const int k = i <= max_key() ? i : i - m_;
            const double arg = dk_ * k * start;
            phase_[d][static_cast<std::size_t>(i)] = cplx(std::cos(arg), std::sin(arg));
        }
    }
    plans_ = std::make_unique<Plans>(m_, size_);
}

SpectralLattice::~SpectralLattice() = default;

std::unique_ptr<SpectralLattice> SpectralLattice::for_slice(double mass, double c, double radius, int n_grid,
                                                            const Vec3& center) {
    if (n_grid < 2) throw DomainError("slice grid needs N >= 2 points per axis");
    return std::make_unique<SpectralLattice>(mass, c, radius, n_grid - 1, center);
}

bool SpectralLattice::key_in_range(const WaveKey& key) const {
    for (int k : key)
        if (k < min_key() || k > max_key()) return false;
    return true;
}

WaveKey SpectralLattice::key(std::size_t flat) const {
    const std::size_t mm = static_cast<std::size_t>(m_);
    const int idx[3] = {static_cast<int>(flat / (mm * mm)), static_cast<int>((flat / mm) % mm),
                        static_cast<int>(flat % mm)};
    WaveKey k;
    for (int d = 0; d < 3; ++d) k[d] = idx[d] <= max_key() ? idx[d] : idx[d] - m_;
    return k;
}

std::size_t SpectralLattice::flat(const WaveKey& key) const {
    std::size_t f = 0;
    for (int d = 0; d < 3; ++d) {
        const int i = key[d] >= 0 ? key[d] : key[d] + m_;
        f = f * static_cast<std::size_t>(m_) + static_cast<std::size_t>(i);
    }
    return f;
}

Vec3 SpectralLattice::wavevector(std::size_t flat) const {
    const WaveKey k = key(flat);
    return dk_ * Vec3(k[0], k[1], k[2]);
}

Vec3 SpectralLattice::node(int i, int j, int l) const {
    const double h = spacing();
    return center_ + Vec3(-radius_ + h * i, -radius_ + h * j, -radius_ + h * l);
}

void SpectralLattice::to_values(std::span<const cplx> coeffs, std::span<cplx> values) const {
    if (coeffs.size() != 4 * size_ || values.size() != 4 * size_)
        throw DomainError("lattice array size mismatch");
    std::vector<cplx> buf(4 * size_);
    const std::size_t mm = static_cast<std::size_t>(m_);
    for (std::size_t i = 0; i < mm; ++i)
        for (std::size_t j = 0; j < mm; ++j) {
            const cplx pij = phase_[0][i] * phase_[1][j];
            const std::size_t row = (i * mm + j) * mm;
            for (std::size_t l = 0; l < mm; ++l) {
                const cplx p = pij * phase_[2][l];
                for (std::size_t c = 0; c < 4; ++c) buf[c * size_ + row + l] = coeffs[c * size_ + row + l] * p;
            }
        }
    fftw_execute_dft(plans_->backward, as_fftw(buf.data()), as_fftw(values.data()));
}

void SpectralLattice::to_coeffs(std::span<const cplx> values, std::span<cplx> coeffs) const {
    if (coeffs.size() != 4 * size_ || values.size() != 4 * size_)
        throw DomainError("lattice array size mismatch");
    std::vector<cplx> in(values.begin(), values.end());
    fftw_execute_dft(plans_->forward, as_fftw(in.data()), as_fftw(coeffs.data()));
    const double scale = 1.0 / static_cast<double>(size_);
    const std::size_t mm = static_cast<std::size_t>(m_);
    for (std::size_t i = 0; i < mm; ++i)
        for (std::size_t j = 0; j < mm; ++j) {
            const cplx pij = std::conj(phase_[0][i] * phase_[1][j]) * scale;
            const std::size_t row = (i * mm + j) * mm;
            for (std::size_t l = 0; l < mm; ++l) {
                const cplx p = pij * std::conj(phase_[2][l]);
                for (std::size_t c = 0; c < 4; ++c) coeffs[c * size_ + row + l] *= p;
            }
        }
}

void SpectralLattice::propagate(std::span<cplx> coeffs, double dt) const {
    if (dt == 0.0) return;
    const double mc2 = mass_ * c_ * c_;
    for (std::size_t f = 0; f < size_; ++f) {
        const cplx in[4] = {coeffs[f], coeffs[size_ + f], coeffs[2 * size_ + f], coeffs[3 * size_ + f]};
        cplx h[4];
        detail::apply_free_hamiltonian(c_ * wavevector(f), mc2, in, h);
        const double e = energy_[f];
        const double cs = std::cos(e * dt);
        const cplx is(0.0, -std::sin(e * dt) / e);
        for (std::size_t c = 0; c < 4; ++c) coeffs[c * size_ + f] = cs * in[c] + is * h[c];
    }
}

void SpectralLattice::apply_hamiltonian(std::span<const cplx> coeffs, std::span<cplx> out) const {
    const double mc2 = mass_ * c_ * c_;
    for (std::size_t f = 0; f < size_; ++f) {
        const cplx in[4] = {coeffs[f], coeffs[size_ + f], coeffs[2 * size_ + f], coeffs[3 * size_ + f]};
        cplx h[4];
        detail::apply_free_hamiltonian(c_ * wavevector(f), mc2, in, h);
        for (std::size_t c = 0; c < 4; ++c) out[c * size_ + f] = h[c];
    }
}

void SpectralLattice::project(std::span<const cplx> coeffs, int sign, std::span<cplx> out) const {
    const double mc2 = mass_ * c_ * c_;
    for (std::size_t f = 0; f < size_; ++f) {
        const cplx in[4] = {coeffs[f], coeffs[size_ + f], coeffs[2 * size_ + f], coeffs[3 * size_ + f]};
        cplx h[4];
        detail::apply_free_hamiltonian(c_ * wavevector(f), mc2, in, h);
        const double s = sign / energy_[f];
        for (std::size_t c = 0; c < 4; ++c) out[c * size_ + f] = 0.5 * (in[c] + s * h[c]);
    }
}

double SpectralLattice::norm_sq(std::span<const cplx> coeffs) const {
    const double sum = detail::pairwise_sum<double>(0, coeffs.size(), [&](std::size_t i) { return std::norm(coeffs[i]); });
    return std::pow(period(), 3) * sum;
}

cplx SpectralLattice::inner(std::span<const cplx> a, std::span<const cplx> b) const {
    const cplx sum =
        detail::pairwise_sum<cplx>(0, a.size(), [&](std::size_t i) { return std::conj(a[i]) * b[i]; });
    return std::pow(period(), 3) * sum;
}

double SpectralLattice::edge_fraction(std::span<const cplx> coeffs) const {
    double edge = 0.0, total = 0.0;
    for (std::size_t f = 0; f < size_; ++f) {
        const WaveKey k = key(f);
        bool outer = false;
        for (int d = 0; d < 3; ++d) outer |= (k[d] == min_key() || k[d] == max_key());
        double w = 0.0;
        for (std::size_t c = 0; c < 4; ++c) w += std::norm(coeffs[c * size_ + f]);
        total += w;
        if (outer) edge += w;
    }
    return total > 0.0 ? edge / total : 0.0;
}

std::vector<cplx> SpectralLattice::from_slice(std::span<const cplx> slice_values) const {
    const std::size_t n = static_cast<std::size_t>(m_) + 1;
    if (slice_values.size() != 4 * n * n * n)
        throw DomainError("slice array does not match lattice (expected N = M + 1 points per axis)");
    const std::size_t mm = static_cast<std::size_t>(m_);
    std::vector<cplx> out(4 * size_);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < mm; ++i)
            for (std::size_t j = 0; j < mm; ++j)
                for (std::size_t l = 0; l < mm; ++l)
                    out[c * size_ + (i * mm + j) * mm + l] = slice_values[c * n * n * n + (i * n + j) * n + l];
    return out;
}

std::vector<cplx> SpectralLattice::to_slice(std::span<const cplx> values) const {
    const std::size_t n = static_cast<std::size_t>(m_) + 1;
    const std::size_t mm = static_cast<std::size_t>(m_);
    std::vector<cplx> out(4 * n * n * n);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t l = 0; l < n; ++l)
                    out[c * n * n * n + (i * n + j) * n + l] =
                        values[c * size_ + ((i % mm) * mm + (j % mm)) * mm + (l % mm)];
    return out;
}

}  // namespace releqt
