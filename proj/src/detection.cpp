#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "releqt/events.hpp"
#include "releqt/numerics.hpp"

namespace releqt {

namespace {

// Dormand-Prince 5(4) with Hairer's continuous extension.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

std::array<double, 5> dense_basis(double th) {
    const double t1 = 1.0 - th;
    return {1.0, th, th * t1, th * th * t1, th * th * t1 * t1};
}

/// Coordinates of Psi seen by the integrator, with the Hilbert inner product.
class Representation {
public:
    virtual ~Representation() = default;
    virtual std::size_t dim() const = 0;
    virtual double inner_re(std::span<const cplx> a, std::span<const cplx> b) const = 0;
    /// Lab lattice coefficients at x^0 = 0 in the coupling frame.
    virtual void to_lab(std::span<const cplx> y, std::span<cplx> lab) const = 0;
    virtual void from_lab(std::span<const cplx> lab, std::span<cplx> y) const = 0;
    double norm_sq(std::span<const cplx> a) const { return inner_re(a, a); }
};

class LabRepresentation final : public Representation {
public:
    explicit LabRepresentation(const SpectralLattice& lat) : lat_(lat) {}
    std::size_t dim() const override { return 4 * lat_.size(); }
    double inner_re(std::span<const cplx> a, std::span<const cplx> b) const override {
        const double vol = std::pow(lat_.period(), 3);
        return vol * detail::pairwise_sum<double>(0, a.size(), [&](std::size_t i) {
                   return a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
               });
    }
    void to_lab(std::span<const cplx> y, std::span<cplx> lab) const override { std::copy(y.begin(), y.end(), lab.begin()); }
    void from_lab(std::span<const cplx> lab, std::span<cplx> y) const override {
        std::copy(lab.begin(), lab.end(), y.begin());
    }

private:
    const SpectralLattice& lat_;
};

/// Transformed-frame mode amplitudes: block s (s = +, -) holds, for each
/// lattice wavevector, the amplitude of W_(Lambda,a) applied to that mode.
class FramedRepresentation final : public Representation {
public:
    FramedRepresentation(const SpectralLattice& lat, const LorentzTransform& t) : lat_(lat) {
        const SpinorRep rep = spinor_rep(t);
        s_ = rep.S;
        s_inv_ = rep.S_inv;
        const std::size_t n = lat.size();
        w_ = std::pow(lat.dk(), 3);
        for (int b = 0; b < 2; ++b) {
            const int s = b == 0 ? 1 : -1;
            factor_[b].resize(n);
            weight_[b].resize(n);
            momentum_[b].resize(n);
            for (std::size_t f = 0; f < n; ++f) {
                const Vec3 k = lat.wavevector(f);
                const double e = lat.energy(f);
                const Vec4 p(e, s * k[0], s * k[1], s * k[2]);
                const Vec4 q = t.apply_linear(p);
                const double ratio = e / q[0];
                factor_[b][f] = ratio * std::polar(1.0, s * minkowski_dot(q, t.shift()));
                weight_[b][f] = w_ / ratio;
                momentum_[b][f] = q;
            }
        }
    }
    std::size_t dim() const override { return 8 * lat_.size(); }
    double inner_re(std::span<const cplx> a, std::span<const cplx> b) const override {
        const std::size_t n = lat_.size();
        const double scale = std::pow(2.0 * pi, 3);
        return scale * detail::pairwise_sum<double>(0, 2 * n, [&](std::size_t i) {
                   const std::size_t blk = i / n, f = i % n, base = blk * 4 * n + f;
                   double s = 0.0;
                   for (std::size_t c = 0; c < 4; ++c)
                       s += a[base + c * n].real() * b[base + c * n].real() + a[base + c * n].imag() * b[base + c * n].imag();
                   return weight_[blk][f] * s;
               });
    }
    void to_lab(std::span<const cplx> y, std::span<cplx> lab) const override {
        const std::size_t n = lat_.size();
        for (std::size_t f = 0; f < n; ++f) {
            Spinor sum = Spinor::Zero();
            for (std::size_t b = 0; b < 2; ++b) {
                Spinor v;
                for (std::size_t c = 0; c < 4; ++c) v[static_cast<Eigen::Index>(c)] = y[b * 4 * n + c * n + f];
                sum += (s_inv_ * v) / factor_[b][f];
            }
            for (std::size_t c = 0; c < 4; ++c) lab[c * n + f] = w_ * sum[static_cast<Eigen::Index>(c)];
        }
    }
    void from_lab(std::span<const cplx> lab, std::span<cplx> y) const override {
        const std::size_t n = lat_.size();
        std::vector<cplx> proj(4 * n);
        for (std::size_t b = 0; b < 2; ++b) {
            lat_.project(lab, b == 0 ? 1 : -1, proj);
            for (std::size_t f = 0; f < n; ++f) {
                Spinor v;
                for (std::size_t c = 0; c < 4; ++c) v[static_cast<Eigen::Index>(c)] = proj[c * n + f];
                const Spinor r = (factor_[b][f] / w_) * (s_ * v);
                for (std::size_t c = 0; c < 4; ++c) y[b * 4 * n + c * n + f] = r[static_cast<Eigen::Index>(c)];
            }
        }
    }

    ModeListState to_modes(std::span<const cplx> y, const ModeListState& like) const {
        const std::size_t n = lat_.size();
        ModeListState out;
        out.mass = like.mass;
        out.period = like.period;
        out.frame = like.frame;
        for (std::size_t f = 0; f < n; ++f)
            for (std::size_t b = 0; b < 2; ++b) {
                Mode m;
                for (std::size_t c = 0; c < 4; ++c) m.amp[static_cast<Eigen::Index>(c)] = y[b * 4 * n + c * n + f];
                if (m.amp.isZero(0.0)) continue;
                m.key = lat_.key(f);
                m.sign = b == 0 ? 1 : -1;
                m.p = momentum_[b][f];
                m.weight = weight_[b][f];
                out.modes.push_back(m);
            }
        out.canonicalize();
        return out;
    }
    std::vector<cplx> from_modes(const ModeListState& ml) const {
        const std::size_t n = lat_.size();
        std::vector<cplx> y(dim(), cplx(0.0, 0.0));
        for (const Mode& m : ml.modes) {
            if (!lat_.key_in_range(m.key))
                throw NumericalError("initial state has wavevectors beyond the grid's Nyquist band");
            const std::size_t f = lat_.flat(m.key);
            const std::size_t b = m.sign > 0 ? 0 : 1;
            for (std::size_t c = 0; c < 4; ++c) y[b * 4 * n + c * n + f] = m.amp[static_cast<Eigen::Index>(c)];
        }
        return y;
    }

private:
    const SpectralLattice& lat_;
    Mat4c s_, s_inv_;
    double w_ = 0.0;
    std::array<std::vector<cplx>, 2> factor_;
    std::array<std::vector<double>, 2> weight_;
    std::array<std::vector<Vec4>, 2> momentum_;
};

using Mask = std::vector<char>;

/// One accepted step as seen by the drivers.
struct StepView {
    double t0 = 0.0;
    double h = 0.0;
    double n0 = 1.0;  ///< ||y||^2 at t0
    double n1 = 1.0;  ///< ||y||^2 at t0 + h
    double q1 = 0.0;  ///< accumulated rate at t0 + h
    Mask active;
    std::function<double(double)> norm_at;
    std::function<double(double)> q_at;
    std::function<void(double, std::span<cplx>)> state_at;
    /// State and accumulated rate at theta from a fresh step of length theta * h.
    std::function<double(double, std::span<cplx>)> land_at;
};

/// Bracket end of the first theta in (0, 1] with 1 - N(theta) >= r.
double locate_jump(const StepView& s, double r, double tol) {
    double lo = 0.0, hi = 1.0;
    while ((hi - lo) * s.h > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (1.0 - s.norm_at(mid) >= r)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

std::size_t pick_detector(std::span<const double> weights, double u) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw NumericalError("detection with zero total coupling");
    const double target = u * total;
    double acc = 0.0;
    std::size_t last = weights.size();
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (!(weights[j] > 0.0)) continue;
        acc += weights[j];
        last = j;
        if (target < acc) return j;
    }
    return last;
}

class Engine {
public:
    explicit Engine(const DetectionSetup& setup)
        : setup_(setup),
          lat_(std::make_unique<SpectralLattice>(setup.mass, setup.c, setup.grid.radius, setup.grid.n - 1,
                                                 setup.grid.center)),
          lab_frame_(setup.frame.is_identity(0.0)) {
        if (lab_frame_) {
            rep_ = std::make_unique<LabRepresentation>(*lat_);
        } else {
            if (setup.c != 1.0) throw DomainError("transformed-frame detection runs require c = 1");
            auto f = std::make_unique<FramedRepresentation>(*lat_, setup.frame);
            framed_ = f.get();
            rep_ = std::move(f);
        }
    }

    const SpectralLattice& lattice() const { return *lat_; }
    const Representation& rep() const { return *rep_; }
    const std::vector<DetectorSpec>& detectors() const { return detectors_; }

    std::vector<cplx> initial(const QuantumState& psi0) const {
        std::vector<cplx> y;
        if (const auto* ml = std::get_if<ModeListState>(&psi0)) {
            const LorentzTransform& fr = setup_.frame;
            const double scale = 1.0 + fr.shift().cwiseAbs().maxCoeff();
            if ((ml->frame.matrix() - fr.matrix()).cwiseAbs().maxCoeff() > 1e-10 ||
                (ml->frame.shift() - fr.shift()).cwiseAbs().maxCoeff() > 1e-10 * scale)
                throw DomainError("initial state is not expressed in the scenario frame");
            if (ml->mass != setup_.mass) throw DomainError("initial state mass differs from the scenario mass");
            if (std::abs(ml->period - lat_->period()) > 1e-12 * lat_->period())
                throw DomainError("initial state period must equal the grid box 2R");
            if (lab_frame_) {
                ModeListState plain = *ml;
                plain.frame = LorentzTransform::identity();
                y = lattice_coefficients(plain, *lat_, 0.0);
            } else {
                y = framed_->from_modes(*ml);
            }
        } else {
            const auto& s = std::get<GridSliceState>(psi0);
            if (!lab_frame_) throw DomainError("grid-slice initial states require the lab frame");
            if (!s.grid.params().is_lab_plane()) throw DomainError("initial slice must lie on a constant-time plane");
            if (s.grid.n() != setup_.grid.n || s.grid.radius() != setup_.grid.radius ||
                (s.grid.params().y.tail<3>() - setup_.grid.center).cwiseAbs().maxCoeff() > 0.0)
                throw DomainError("initial slice grid differs from the scenario grid");
            if (s.c != setup_.c || s.mass != setup_.mass) throw DomainError("initial slice mass or c differs");
            if (s.potential) throw DomainError("detection runs are free-field; the slice carries a potential");
            y.resize(rep_->dim());
            const std::vector<cplx> vals = lat_->from_slice(s.values);
            lat_->to_coeffs(vals, y);
            lat_->propagate(y, -s.grid.params().y[0] / setup_.c);
        }
        std::vector<cplx> lab(4 * lat_->size());
        rep_->to_lab(y, lab);
        if (lat_->edge_fraction(lab) > 1e-8)
            throw NumericalError("initial state reaches the grid's Nyquist band; refine the grid");
        const double n = rep_->norm_sq(y);
        if (std::abs(n - 1.0) > 1e-8) throw DomainError("initial state must be normalized (||Psi||^2 = " + std::to_string(n) + ")");
        const double s = 1.0 / std::sqrt(n);
        for (cplx& v : y) v *= s;
        return y;
    }

    QuantumState final_state(std::span<const cplx> y, const QuantumState& psi0) const {
        if (const auto* ml = std::get_if<ModeListState>(&psi0)) {
            if (!lab_frame_) return framed_->to_modes(y, *ml);
            ModeListState out = modes_from_lattice(*lat_, y, 0.0);
            out.mass = ml->mass;
            return out;
        }
        const auto& s = std::get<GridSliceState>(psi0);
        std::vector<cplx> c(y.begin(), y.end()), vals(y.size());
        lat_->propagate(c, s.grid.params().y[0] / setup_.c);
        lat_->to_values(c, vals);
        GridSliceState out = s;
        out.values = lat_->to_slice(vals);
        return out;
    }

    /// Arms the detector set after an event at `prev` (proper time tau).
    void arm(std::vector<DetectorSpec> detectors, const Vec4& prev, double tau) {
        detectors_ = std::move(detectors);
        exit_.assign(detectors_.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t j = 0; j < detectors_.size(); ++j) {
            const DetectorSpec& d = detectors_[j];
            if (!in_backward_cone(prev, d.position(tau))) continue;
            double lo = tau, span = 1.0, hi = tau + span;
            while (in_backward_cone(prev, d.position(hi))) {
                lo = hi;
                span *= 2.0;
                hi = tau + span;
                if (span > 1e12) throw NumericalError("detector never leaves the backward light cone");
            }
            for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                if (in_backward_cone(prev, d.position(mid)))
                    lo = mid;
                else
                    hi = mid;
            }
            if (hi - tau > 1e-12 * std::max(1.0, std::abs(tau))) exit_[j] = hi;
        }
    }

    Mask active_at(double tau) const {
        Mask m(detectors_.size());
        for (std::size_t j = 0; j < detectors_.size(); ++j) m[j] = tau > exit_[j];
        return m;
    }

    double next_breakpoint(double tau, std::span<const double> extra) const {
        double bp = setup_.tau_max;
        auto consider = [&](double t) {
            if (t > tau && t < bp) bp = t;
        };
        for (std::size_t j = 0; j < detectors_.size(); ++j) {
            consider(exit_[j]);
            for (const WorldlineNode& nd : detectors_[j].worldline) consider(nd.tau);
        }
        for (double t : extra) consider(t);
        return bp;
    }

    /// Coupling-frame centre of detector j at tau.
    Vec4 coupling_point(const DetectorSpec& d, double tau) const {
        const Vec4 z = d.position(tau);
        return lab_frame_ ? z : setup_.frame.apply_inverse(z);
    }

    /// Lambda applied to lab coefficients (into `out` when non-empty) and the
    /// per-detector ||G_j Psi||^2. Returns the total rate.
    double coupling(double tau, std::span<const cplx> c, const Mask& active, std::span<cplx> out,
                    std::vector<double>* per) const {
        const std::size_t n = lat_->size();
        if (!out.empty()) std::fill(out.begin(), out.end(), cplx(0.0, 0.0));
        if (per) per->assign(detectors_.size(), 0.0);
        double total = 0.0;
        std::optional<double> cnorm;
        std::map<double, std::vector<std::size_t>> groups;
        for (std::size_t j = 0; j < detectors_.size(); ++j) {
            if (!active[j]) continue;
            const DetectorSpec& d = detectors_[j];
            if (d.uniform()) {
                if (!cnorm) cnorm = lat_->norm_sq(c);
                const double k2 = d.kappa * d.kappa;
                const double r = k2 * *cnorm;
                if (per) (*per)[j] = r;
                total += r;
                if (!out.empty())
                    for (std::size_t i = 0; i < out.size(); ++i) out[i] += k2 * c[i];
                continue;
            }
            groups[coupling_point(d, tau)[0] / setup_.c].push_back(j);
        }
        if (groups.empty()) return total;
        std::vector<cplx> v(4 * n), vals(4 * n);
        const double h3 = std::pow(lat_->spacing(), 3);
        for (const auto& [t, members] : groups) {
            std::copy(c.begin(), c.end(), v.begin());
            lat_->propagate(v, t);
            lat_->to_values(v, vals);
            std::vector<double> g2(n, 0.0);
            for (std::size_t j : members) {
                const DetectorSpec& d = detectors_[j];
                const Vec3 zc = coupling_point(d, tau).tail<3>();
                check_profile_support(d, zc, setup_.grid, 1e-4);
                const std::vector<double> g = profile_on_lattice(d, zc, *lat_);
                const double r = h3 * detail::pairwise_sum<double>(0, n, [&](std::size_t f) {
                                     double s = 0.0;
                                     for (std::size_t k = 0; k < 4; ++k) s += std::norm(vals[k * n + f]);
                                     return g[f] * g[f] * s;
                                 });
                if (per) (*per)[j] = r;
                total += r;
                for (std::size_t f = 0; f < n; ++f) g2[f] += g[f] * g[f];
            }
            if (out.empty()) continue;
            for (std::size_t k = 0; k < 4; ++k)
                for (std::size_t f = 0; f < n; ++f) vals[k * n + f] *= g2[f];
            lat_->to_coeffs(vals, v);
            lat_->propagate(v, -t);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
        }
        return total;
    }

    /// G_j applied to lab coefficients.
    std::vector<cplx> apply_single(double tau, std::span<const cplx> c, std::size_t j) const {
        const DetectorSpec& d = detectors_[j];
        std::vector<cplx> out(c.begin(), c.end());
        if (d.uniform()) {
            for (cplx& v : out) v *= d.kappa;
            return out;
        }
        const std::size_t n = lat_->size();
        const Vec4 z = coupling_point(d, tau);
        const double t = z[0] / setup_.c;
        std::vector<cplx> vals(4 * n);
        lat_->propagate(out, t);
        lat_->to_values(out, vals);
        const std::vector<double> g = profile_on_lattice(d, z.tail<3>(), *lat_);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t f = 0; f < n; ++f) vals[k * n + f] *= g[f];
        lat_->to_coeffs(vals, out);
        lat_->propagate(out, -t);
        return out;
    }

    /// dy = -1/2 Lambda y in the integrator coordinates; returns the rate.
    double rhs(double tau, std::span<const cplx> y, const Mask& active, std::span<cplx> dy) const {
        const std::size_t n4 = 4 * lat_->size();
        std::vector<cplx> lab(n4), lam(n4);
        rep_->to_lab(y, lab);
        const double rate = coupling(tau, lab, active, lam, nullptr);
        for (cplx& v : lam) v *= -0.5;
        rep_->from_lab(lam, dy);
        return rate;
    }

    std::vector<double> norms(double tau, std::span<const cplx> y, const Mask& active) const {
        std::vector<cplx> lab(4 * lat_->size());
        rep_->to_lab(y, lab);
        std::vector<double> per;
        coupling(tau, lab, active, {}, &per);
        return per;
    }

    /// Normalized G_l Psi.
    std::vector<cplx> collapse(double tau, std::span<const cplx> y, std::size_t l) const {
        std::vector<cplx> lab(4 * lat_->size());
        rep_->to_lab(y, lab);
        const std::vector<cplx> g = apply_single(tau, lab, l);
        std::vector<cplx> out(rep_->dim());
        rep_->from_lab(g, out);
        const double n = rep_->norm_sq(out);
        if (!(n > 0.0)) throw NumericalError("collapse onto a zero-norm state");
        const double s = 1.0 / std::sqrt(n);
        for (cplx& v : out) v *= s;
        return out;
    }

    /// Split-step advance of lab coefficients by h (midpoint clocks).
    void split_advance(double tau, double h, std::span<cplx> c, const Mask& active) const {
        const double mid = tau + 0.5 * h;
        const std::size_t n = lat_->size();
        double k2 = 0.0;
        std::map<double, std::vector<std::size_t>> groups;
        for (std::size_t j = 0; j < detectors_.size(); ++j) {
            if (!active[j]) continue;
            const DetectorSpec& d = detectors_[j];
            if (d.uniform())
                k2 += d.kappa * d.kappa;
            else
                groups[coupling_point(d, mid)[0] / setup_.c].push_back(j);
        }
        std::vector<std::pair<double, std::vector<double>>> factors;
        for (const auto& [t, members] : groups) {
            std::vector<double> g2(n, 0.0);
            for (std::size_t j : members) {
                const Vec3 zc = coupling_point(detectors_[j], mid).tail<3>();
                check_profile_support(detectors_[j], zc, setup_.grid, 1e-4);
                const std::vector<double> g = profile_on_lattice(detectors_[j], zc, *lat_);
                for (std::size_t f = 0; f < n; ++f) g2[f] += g[f] * g[f];
            }
            factors.emplace_back(t, std::move(g2));
        }
        std::vector<cplx> vals(4 * n);
        auto damp = [&](const std::pair<double, std::vector<double>>& fac, double dt) {
            lat_->propagate(c, fac.first);
            lat_->to_values(c, vals);
            for (std::size_t k = 0; k < 4; ++k)
                for (std::size_t f = 0; f < n; ++f) vals[k * n + f] *= std::exp(-0.5 * fac.second[f] * dt);
            lat_->to_coeffs(vals, c);
            lat_->propagate(c, -fac.first);
        };
        if (factors.size() == 1) {
            damp(factors[0], h);
        } else {
            for (std::size_t i = 0; i < factors.size(); ++i) damp(factors[i], 0.5 * h);
            for (std::size_t i = factors.size(); i-- > 0;) damp(factors[i], 0.5 * h);
        }
        if (k2 > 0.0) {
            const double s = std::exp(-0.5 * k2 * h);
            for (cplx& v : c) v *= s;
        }
    }

    struct Outcome {
        bool stopped = false;
        std::size_t accepted = 0;
        std::size_t rejected = 0;
    };

    /// Integrates from tau until on_step returns true or tau_max is reached.
    /// y, tau and q are advanced to the end of the last accepted step.
    Outcome integrate(std::vector<cplx>& y, double& tau, double& q, std::span<const double> extra,
                      const std::function<bool(const StepView&)>& on_step) const {
        if (setup_.integrator.method == IntegratorMethod::split_step) return integrate_split(y, tau, q, extra, on_step);
        return integrate_dp(y, tau, q, extra, on_step);
    }

private:
    struct DpStages {
        std::array<std::vector<cplx>, 7> k;
        std::array<double, 7> r{};
        std::vector<cplx> ys;
        explicit DpStages(std::size_t dim) : ys(dim) {
            for (auto& v : k) v.assign(dim, cplx(0.0, 0.0));
        }
    };

    /// One Dormand-Prince step of length h from (tau, y) with k[0], r[0]
    /// already holding the start derivative. Fills the other stages and y1
    /// and returns the increment of the accumulated rate.
    double dp_step(double tau, std::span<const cplx> y, double h, const Mask& mask, DpStages& st,
                   std::span<cplx> y1) const {
        using namespace dp;
        auto& k = st.k;
        auto& r = st.r;
        const std::size_t dim = y.size();
        auto stage = [&](std::initializer_list<std::pair<int, double>> coeffs) {
            for (std::size_t i = 0; i < dim; ++i) {
                cplx v = y[i];
                for (const auto& [idx, a] : coeffs) v += (h * a) * k[static_cast<std::size_t>(idx)][i];
                st.ys[i] = v;
            }
        };
        stage({{0, a21}});
        r[1] = rhs(tau + c2 * h, st.ys, mask, k[1]);
        stage({{0, a31}, {1, a32}});
        r[2] = rhs(tau + c3 * h, st.ys, mask, k[2]);
        stage({{0, a41}, {1, a42}, {2, a43}});
        r[3] = rhs(tau + c4 * h, st.ys, mask, k[3]);
        stage({{0, a51}, {1, a52}, {2, a53}, {3, a54}});
        r[4] = rhs(tau + c5 * h, st.ys, mask, k[4]);
        stage({{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}});
        r[5] = rhs(tau + h, st.ys, mask, k[5]);
        for (std::size_t i = 0; i < dim; ++i)
            y1[i] = y[i] + h * (a71 * k[0][i] + a73 * k[2][i] + a74 * k[3][i] + a75 * k[4][i] + a76 * k[5][i]);
        return h * (a71 * r[0] + a73 * r[2] + a74 * r[3] + a75 * r[4] + a76 * r[5]);
    }

    Outcome integrate_dp(std::vector<cplx>& y, double& tau, double& q, std::span<const double> extra,
                         const std::function<bool(const StepView&)>& on_step) const {
        using namespace dp;
        const IntegratorOptions& opt = setup_.integrator;
        const std::size_t dim = rep_->dim();
        DpStages st(dim);
        auto& k = st.k;
        auto& r = st.r;
        std::vector<cplx> y1(dim), err(dim);
        Outcome out;
        double h = opt.dtau;
        bool k1_valid = false;
        Mask k1_mask;
        double n0 = rep_->norm_sq(y);
        const double tol = opt.tolerance;

        while (tau < setup_.tau_max) {
            if (out.accepted + out.rejected >= opt.max_steps) throw NumericalError("integrator exceeded its step budget");
            const double bp = next_breakpoint(tau, extra);
            bool hits = false;
            if (tau + h >= bp - 1e-12 * std::max(1.0, std::abs(bp))) {
                h = bp - tau;
                hits = true;
            }
            if (!(h > 1e-14 * std::max(1.0, std::abs(tau)))) throw NumericalError("integrator step size underflow");
            const Mask mask = active_at(tau + 0.5 * h);
            if (!k1_valid || mask != k1_mask) {
                r[0] = rhs(tau, y, mask, k[0]);
                k1_mask = mask;
                k1_valid = true;
            }
            const double q1 = q + dp_step(tau, y, h, mask, st, y1);
            r[6] = rhs(tau + h, y1, mask, k[6]);
            for (std::size_t i = 0; i < dim; ++i)
                err[i] = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
            const double eq = h * (e1 * r[0] + e3 * r[2] + e4 * r[3] + e5 * r[4] + e6 * r[5] + e7 * r[6]);
            const double n1 = rep_->norm_sq(y1);
            const double ey = std::sqrt(rep_->norm_sq(err)) / (tol * (1.0 + std::sqrt(std::max(n0, n1))));
            const double eqs = std::abs(eq) / (tol * (1.0 + std::max(std::abs(q), std::abs(q1))));
            const double e = std::max(ey, eqs);
            if (!(e <= 1.0)) {
                if (!std::isfinite(e)) throw NumericalError("integrator produced non-finite values");
                h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
                ++out.rejected;
                continue;
            }
            ++out.accepted;
            if (n1 > n0 * (1.0 + 10.0 * tol) + 10.0 * tol)
                throw NumericalError("survival norm increased during a step; coupling operator is not positive");

            // Dense output.
            auto rc = std::make_shared<std::array<std::vector<cplx>, 5>>();
            for (auto& v : *rc) v.resize(dim);
            std::array<double, 5> rq{};
            for (std::size_t i = 0; i < dim; ++i) {
                const cplx diff = y1[i] - y[i];
                const cplx bspl = h * k[0][i] - diff;
                (*rc)[0][i] = y[i];
                (*rc)[1][i] = diff;
                (*rc)[2][i] = bspl;
                (*rc)[3][i] = diff - h * k[6][i] - bspl;
                (*rc)[4][i] = h * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] + d5 * k[4][i] + d6 * k[5][i] + d7 * k[6][i]);
            }
            {
                const double diff = q1 - q, bspl = h * r[0] - diff;
                rq = {q, diff, bspl, diff - h * r[6] - bspl,
                      h * (d1 * r[0] + d3 * r[2] + d4 * r[3] + d5 * r[4] + d6 * r[5] + d7 * r[6])};
            }
            std::array<std::array<double, 5>, 5> gram{};
            for (int a = 0; a < 5; ++a)
                for (int b = a; b < 5; ++b)
                    gram[a][b] = gram[b][a] = rep_->inner_re((*rc)[static_cast<std::size_t>(a)], (*rc)[static_cast<std::size_t>(b)]);

            StepView view;
            view.t0 = tau;
            view.h = h;
            view.n0 = n0;
            view.n1 = n1;
            view.q1 = q1;
            view.active = mask;
            view.norm_at = [gram](double th) {
                const auto b = dense_basis(th);
                double s = 0.0;
                for (int a = 0; a < 5; ++a)
                    for (int c = 0; c < 5; ++c) s += b[a] * b[c] * gram[a][c];
                return s;
            };
            view.q_at = [rq](double th) {
                const auto b = dense_basis(th);
                double s = 0.0;
                for (int a = 0; a < 5; ++a) s += b[a] * rq[a];
                return s;
            };
            view.land_at = [this, rc, k1 = std::make_shared<std::vector<cplx>>(k[0]), r1 = r[0], t0 = tau, q0 = q, h,
                            mask](double th, std::span<cplx> dst) {
                DpStages fresh((*rc)[0].size());
                fresh.k[0] = *k1;
                fresh.r[0] = r1;
                return q0 + dp_step(t0, (*rc)[0], th * h, mask, fresh, dst);
            };
            view.state_at = [rc](double th, std::span<cplx> dst) {
                const auto b = dense_basis(th);
                for (std::size_t i = 0; i < dst.size(); ++i)
                    dst[i] = (*rc)[0][i] + b[1] * (*rc)[1][i] + b[2] * (*rc)[2][i] + b[3] * (*rc)[3][i] +
                             b[4] * (*rc)[4][i];
            };
            const double tau_new = hits ? bp : tau + h;
            const bool stop = on_step(view);
            const double grow = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(e, 1e-10), -0.2)));
            std::swap(y, y1);
            std::swap(k[0], k[6]);
            r[0] = r[6];
            tau = tau_new;
            q = q1;
            n0 = n1;
            h = std::min(h * grow, opt.dtau);
            if (stop) {
                out.stopped = true;
                return out;
            }
        }
        return out;
    }

    Outcome integrate_split(std::vector<cplx>& y, double& tau, double& q, std::span<const double> extra,
                            const std::function<bool(const StepView&)>& on_step) const {
        if (!lab_frame_) throw DomainError("the split-step method runs in the lab frame only");
        const IntegratorOptions& opt = setup_.integrator;
        Outcome out;
        double n0 = rep_->norm_sq(y);
        std::optional<double> rate0;
        while (tau < setup_.tau_max) {
            if (out.accepted >= opt.max_steps) throw NumericalError("integrator exceeded its step budget");
            const double bp = next_breakpoint(tau, extra);
            double h = opt.dtau;
            bool hits = false;
            if (tau + h >= bp - 1e-12 * std::max(1.0, std::abs(bp))) {
                h = bp - tau;
                hits = true;
            }
            const Mask mask = active_at(tau + 0.5 * h);
            if (!rate0) rate0 = coupling(tau, y, mask, {}, nullptr);
            auto start = std::make_shared<std::vector<cplx>>(y);
            split_advance(tau, h, y, mask);
            const double n1 = rep_->norm_sq(y);
            const double rate1 = coupling(tau + h, y, mask, {}, nullptr);
            const double q1 = q + 0.5 * h * (*rate0 + rate1);
            ++out.accepted;
            StepView view;
            view.t0 = tau;
            view.h = h;
            view.n0 = n0;
            view.n1 = n1;
            view.q1 = q1;
            view.active = mask;
            const double t0 = tau, qq = q, r0 = *rate0;
            view.state_at = [this, start, t0, h, mask](double th, std::span<cplx> dst) {
                std::copy(start->begin(), start->end(), dst.begin());
                split_advance(t0, th * h, dst, mask);
            };
            view.norm_at = [this, view](double th) {
                std::vector<cplx> tmp(rep_->dim());
                view.state_at(th, tmp);
                return rep_->norm_sq(tmp);
            };
            view.q_at = [qq, r0, rate1, h](double th) { return qq + 0.5 * th * h * (r0 + (r0 + th * (rate1 - r0))); };
            view.land_at = [state = view.state_at, acc = view.q_at](double th, std::span<cplx> dst) {
                state(th, dst);
                return acc(th);
            };
            const double tau_new = hits ? bp : tau + h;
            const bool stop = on_step(view);
            tau = tau_new;
            q = q1;
            n0 = n1;
            rate0 = rate1;
            if (stop) {
                out.stopped = true;
                return out;
            }
        }
        return out;
    }

    const DetectionSetup& setup_;
    std::unique_ptr<SpectralLattice> lat_;
    std::unique_ptr<Representation> rep_;
    FramedRepresentation* framed_ = nullptr;
    bool lab_frame_ = true;
    std::vector<DetectorSpec> detectors_;
    std::vector<double> exit_;
};

EventRecord detection_record(double tau, const DetectorSpec& d, int omega_before, const RandomStream& rng,
                             const Preparation& prep) {
    EventRecord e;
    e.kind = EventKind::detection;
    e.tau = tau;
    e.z = d.position(tau);
    e.omega_before = omega_before;
    e.omega_after = d.id;
    e.detail = d.id;
    e.seed = rng.seed();
    e.rng_draws_consumed = rng.counter();
    e.before_preparation = e.z[0] < prep.point[0];
    return e;
}

}  // namespace

void check_start_condition(const Preparation& prep, const DetectorSpec& d, double tol) {
    const Vec4 z = d.position(prep.tau);
    const Vec4 diff = prep.point - z;
    const double scale = std::max(1.0, diff.squaredNorm());
    if (std::abs(minkowski_sq(diff)) > tol * scale || z[0] > prep.point[0] + tol * std::sqrt(scale))
        throw DomainError("detector " + std::to_string(d.id) +
                          ": worldline must start on the backward light cone of the preparation point "
                          "(||x0 - z(tau0)||^2 = 0 with z^0(tau0) <= x0^0)");
}

void DetectionSetup::validate() const {
    if (!(mass > 0.0)) throw DomainError("mass must be positive");
    if (!(c > 0.0)) throw DomainError("c must be positive");
    if (grid.n < 4 || !(grid.radius > 0.0)) throw DomainError("grid needs radius > 0 and at least 4 points per axis");
    if (!(tau_max > preparation.tau)) throw DomainError("tau_max must lie after the preparation time");
    if (!(integrator.dtau > 0.0)) throw DomainError("integrator step dtau must be positive");
    if (!(integrator.tolerance > 0.0)) throw DomainError("integrator tolerance must be positive");
    if (!(integrator.jump_tolerance > 0.0)) throw DomainError("jump tolerance must be positive");
    validate_restricted(frame.matrix());
    for (const DetectorSpec& d : detectors) {
        d.validate();
        check_start_condition(preparation, d);
    }
    for (const DetectorSpec& d : replacement) d.validate();
}

DetectionRun run_detection(const QuantumState& psi0, const DetectionSetup& setup, RandomStream& rng) {
    setup.validate();
    Engine eng(setup);
    std::vector<cplx> y = eng.initial(psi0);

    DetectionRun run;
    EventRecord prep;
    prep.kind = EventKind::preparation;
    prep.tau = setup.preparation.tau;
    prep.z = setup.preparation.point;
    prep.seed = rng.seed();
    prep.rng_draws_consumed = rng.counter();
    run.events.push_back(prep);

    double tau = setup.preparation.tau;
    double q = 0.0;
    Vec4 prev = setup.preparation.point;
    std::vector<DetectorSpec> current = setup.detectors;
    run.survival.push_back({tau, 1.0, 0.0});
    std::size_t detections = 0;

    while (!current.empty() && tau < setup.tau_max && (!setup.max_events || detections < *setup.max_events)) {
        eng.arm(current, prev, tau);
        const double r = rng.uniform();
        std::optional<StepView> hit;
        const auto outcome = eng.integrate(y, tau, q, {}, [&](const StepView& s) {
            const double defect = std::abs(1.0 - s.n1 - s.q1);
            if (1.0 - s.n1 >= r) {
                hit = s;
                return true;
            }
            run.bookkeeping_defect = std::max(run.bookkeeping_defect, defect);
            run.survival.push_back({s.t0 + s.h, s.n1, s.q1});
            return false;
        });
        run.accepted_steps += outcome.accepted;
        run.rejected_steps += outcome.rejected;
        if (!hit) break;

        const double th = locate_jump(*hit, r, setup.integrator.jump_tolerance);
        const double tau1 = hit->t0 + th * hit->h;
        std::vector<cplx> y1(y.size());
        const double q1 = hit->land_at(th, y1);
        const double n1 = eng.rep().norm_sq(y1);
        run.bookkeeping_defect = std::max(run.bookkeeping_defect, std::abs(1.0 - n1 - q1));
        run.survival.push_back({tau1, n1, q1});

        const std::vector<double> per = eng.norms(tau1, y1, hit->active);
        const std::size_t l = pick_detector(per, rng.uniform());
        const DetectorSpec& fired = eng.detectors()[l];
        y = eng.collapse(tau1, y1, l);
        run.events.push_back(detection_record(tau1, fired, run.omega, rng, setup.preparation));
        run.omega = fired.id;
        prev = run.events.back().z;
        tau = tau1;
        q = 0.0;
        ++detections;
        run.survival.push_back({tau1, 1.0, 0.0});
        switch (setup.rearm) {
            case RearmPolicy::keep: current = eng.detectors(); break;
            case RearmPolicy::drop: {
                current = eng.detectors();
                current.erase(current.begin() + static_cast<std::ptrdiff_t>(l));
                break;
            }
            case RearmPolicy::replace: current = setup.replacement; break;
        }
    }
    run.final_state = eng.final_state(y, psi0);
    run.final_tau = tau;
    return run;
}

std::vector<double> survival_curve(const QuantumState& psi0, const DetectionSetup& setup, std::span<const double> taus) {
    setup.validate();
    for (std::size_t i = 0; i < taus.size(); ++i)
        if (taus[i] < setup.preparation.tau || taus[i] > setup.tau_max || (i > 0 && taus[i] < taus[i - 1]))
            throw DomainError("survival sample times must be ascending within [tau0, tau_max]");
    Engine eng(setup);
    std::vector<cplx> y = eng.initial(psi0);
    eng.arm(setup.detectors, setup.preparation.point, setup.preparation.tau);
    std::vector<double> out(taus.size(), 1.0);
    double tau = setup.preparation.tau, q = 0.0;
    std::size_t next = 0;
    while (next < taus.size() && taus[next] <= tau) ++next;
    if (next == taus.size()) return out;
    eng.integrate(y, tau, q, taus, [&](const StepView& s) {
        const double end = s.t0 + s.h;
        while (next < taus.size() && taus[next] <= end + 1e-12 * std::max(1.0, std::abs(end))) {
            out[next] = s.norm_at((taus[next] - s.t0) / s.h);
            if (taus[next] >= end) out[next] = s.n1;
            ++next;
        }
        return next == taus.size();
    });
    return out;
}

EnsembleResult run_detection_ensemble(const QuantumState& psi0, const DetectionSetup& setup, std::uint64_t seed,
                                      std::size_t trajectories, unsigned threads) {
    if (setup.max_events && *setup.max_events != 1)
        throw DomainError("ensemble runs record first detections only (max_events = 1)");
    setup.validate();
    Engine eng(setup);
    std::vector<cplx> y = eng.initial(psi0);
    eng.arm(setup.detectors, setup.preparation.point, setup.preparation.tau);

    std::vector<RandomStream> streams;
    std::vector<double> thresholds;
    streams.reserve(trajectories);
    for (std::size_t i = 0; i < trajectories; ++i) {
        streams.emplace_back(RandomStream::derive(seed, i));
        thresholds.push_back(streams.back().uniform());
    }
    std::vector<std::size_t> order(trajectories);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return thresholds[a] < thresholds[b]; });

    EnsembleResult res;
    res.first_events.resize(trajectories);
    for (std::size_t i = 0; i < trajectories; ++i) {
        EventRecord& e = res.first_events[i];
        e.kind = EventKind::preparation;
        e.tau = setup.preparation.tau;
        e.z = setup.preparation.point;
        e.seed = streams[i].seed();
    }
    if (setup.detectors.empty()) {
        res.undetected = trajectories;
        for (std::size_t i = 0; i < trajectories; ++i) res.first_events[i].rng_draws_consumed = streams[i].counter();
        return res;
    }
    const unsigned workers = std::max(1u, threads);
    std::size_t next = 0;
    double tau = setup.preparation.tau, q = 0.0;
    eng.integrate(y, tau, q, {}, [&](const StepView& s) {
        std::vector<std::size_t> batch;
        while (next < trajectories && 1.0 - s.n1 >= thresholds[order[next]]) batch.push_back(order[next++]);
        auto work = [&](std::size_t begin, std::size_t end) {
            std::vector<cplx> y1(eng.rep().dim());
            for (std::size_t b = begin; b < end; ++b) {
                const std::size_t i = batch[b];
                const double th = locate_jump(s, thresholds[i], setup.integrator.jump_tolerance);
                const double tau1 = s.t0 + th * s.h;
                s.land_at(th, y1);
                const std::vector<double> per = eng.norms(tau1, y1, s.active);
                const std::size_t l = pick_detector(per, streams[i].uniform());
                res.first_events[i] = detection_record(tau1, eng.detectors()[l], 0, streams[i], setup.preparation);
            }
        };
        if (workers == 1 || batch.size() < 2) {
            work(0, batch.size());
        } else {
            std::vector<std::thread> pool;
            const std::size_t chunk = (batch.size() + workers - 1) / workers;
            for (std::size_t b = 0; b < batch.size(); b += chunk) pool.emplace_back(work, b, std::min(batch.size(), b + chunk));
            for (auto& t : pool) t.join();
        }
        return next == trajectories;
    });
    for (std::size_t i = 0; i < trajectories; ++i) {
        if (res.first_events[i].kind == EventKind::preparation) {
            ++res.undetected;
            res.first_events[i].rng_draws_consumed = streams[i].counter();
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

DetectionScenario transform_scenario(const DetectionScenario& s, const LorentzTransform& t) {
    validate_restricted(t.matrix());
    DetectionScenario out = s;
    out.psi0 = poincare_transform(s.psi0, t);
    out.setup.preparation.point = t.apply(s.setup.preparation.point);
    auto move = [&](std::vector<DetectorSpec>& ds) {
        for (DetectorSpec& d : ds)
            for (WorldlineNode& nd : d.worldline) nd.z = t.apply(nd.z);
    };
    move(out.setup.detectors);
    move(out.setup.replacement);
    out.setup.frame = t * s.setup.frame;
    return out;
}

DetectionScenario conjugate_scenario(const DetectionScenario& s) {
    DetectionScenario out = s;
    out.psi0 = charge_conjugate(s.psi0);
    return out;
}

NonrelativisticReport nonrelativistic_reference(const QuantumState& psi0, const DetectionSetup& setup,
                                                std::span<const double> taus) {
    setup.validate();
    if (!setup.frame.is_identity(0.0)) throw DomainError("the non-relativistic reference runs in the lab frame");
    Engine eng(setup);
    const SpectralLattice& lat = eng.lattice();
    const std::size_t n = lat.size();
    std::vector<cplx> c = eng.initial(psi0);

    NonrelativisticReport rep;
    double lower = 0.0, all = 0.0;
    for (std::size_t i = 0; i < 4 * n; ++i) {
        all += std::norm(c[i]);
        if (i >= 2 * n) lower += std::norm(c[i]);
    }
    rep.lower_fraction = lower / all;
    rep.limit_warning = rep.lower_fraction > 1e-3;
    std::fill(c.begin() + static_cast<std::ptrdiff_t>(2 * n), c.end(), cplx(0.0, 0.0));
    const double scale = 1.0 / std::sqrt(lat.norm_sq(c));
    for (cplx& v : c) v *= scale;

    std::vector<double> kin(n);
    for (std::size_t f = 0; f < n; ++f) kin[f] = lat.wavevector(f).squaredNorm() / (2.0 * setup.mass);
    auto free = [&](std::span<cplx> v, double t) {
        for (std::size_t comp = 0; comp < 2; ++comp)
            for (std::size_t f = 0; f < n; ++f) v[comp * n + f] *= std::polar(1.0, -kin[f] * t);
    };

    eng.arm(setup.detectors, setup.preparation.point, setup.preparation.tau);
    const auto& dets = eng.detectors();
    std::vector<cplx> vals(4 * n);
    auto damp = [&](std::span<cplx> v, double t, const std::vector<double>& g2, double dt) {
        free(v, t);
        lat.to_values(v, vals);
        for (std::size_t comp = 0; comp < 2; ++comp)
            for (std::size_t f = 0; f < n; ++f) vals[comp * n + f] *= std::exp(-0.5 * g2[f] * dt);
        lat.to_coeffs(vals, v);
        free(v, -t);
    };
    auto advance = [&](double tau, double h) {
        const double mid = tau + 0.5 * h;
        const Mask mask = eng.active_at(mid);
        double k2 = 0.0;
        std::map<double, std::vector<double>> groups;
        for (std::size_t j = 0; j < dets.size(); ++j) {
            if (!mask[j]) continue;
            if (dets[j].uniform()) {
                k2 += dets[j].kappa * dets[j].kappa;
                continue;
            }
            const Vec4 z = dets[j].position(mid);
            auto& g2 = groups[z[0] / setup.c];
            if (g2.empty()) g2.assign(n, 0.0);
            const std::vector<double> g = profile_on_lattice(dets[j], z.tail<3>(), lat);
            for (std::size_t f = 0; f < n; ++f) g2[f] += g[f] * g[f];
        }
        if (groups.size() == 1) {
            damp(c, groups.begin()->first, groups.begin()->second, h);
        } else {
            for (auto it = groups.begin(); it != groups.end(); ++it) damp(c, it->first, it->second, 0.5 * h);
            for (auto it = groups.rbegin(); it != groups.rend(); ++it) damp(c, it->first, it->second, 0.5 * h);
        }
        if (k2 > 0.0) {
            const double s = std::exp(-0.5 * k2 * h);
            for (cplx& v : c) v *= s;
        }
    };

    double tau = setup.preparation.tau;
    for (double target : taus) {
        if (target < tau) throw DomainError("survival sample times must be ascending from tau0");
        while (target - tau > 1e-12 * std::max(1.0, std::abs(target))) {
            const double bp = std::min(target, eng.next_breakpoint(tau, {}));
            double h = setup.integrator.dtau;
            if (tau + h >= bp - 1e-12 * std::max(1.0, std::abs(bp))) h = bp - tau;
            advance(tau, h);
            tau = tau + h >= bp - 1e-12 * std::max(1.0, std::abs(bp)) ? bp : tau + h;
        }
        rep.survival.push_back(lat.norm_sq(c));
    }
    return rep;
}

}  // namespace releqt
