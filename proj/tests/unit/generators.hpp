#pragma once

#include <cstdint>
#include <random>

#include "releqt/algebra.hpp"
#include "releqt/states.hpp"
#include "releqt/types.hpp"

namespace releqt::testing {

/// Small seeded generator set for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    Vec3 vec3(double scale) { return {uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)}; }
    Vec4 vec4(double scale) {
        return {uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)};
    }

    /// Vector with norm strictly below bound.
    Vec3 ball(double bound) {
        Vec3 v;
        do v = vec3(bound);
        while (v.norm() >= bound);
        return v;
    }

    Spinor spinor() {
        Spinor s;
        for (int i = 0; i < 4; ++i) s[i] = cplx(uniform(-1, 1), uniform(-1, 1));
        return s;
    }

    /// Random restricted transform composed of a few elementary steps.
    LorentzTransform transform(double max_rapidity = 1.5, bool with_shift = true) {
        LorentzTransform t;
        const int steps = integer(1, 4);
        for (int k = 0; k < steps; ++k) {
            switch (integer(0, 2)) {
                case 0: t = LorentzTransform::boost(integer(1, 3), uniform(-max_rapidity, max_rapidity)) * t; break;
                case 1: t = LorentzTransform::rotation(ball(3.0)) * t; break;
                default:
                    if (with_shift) t = LorentzTransform::translation(vec4(2.0)) * t;
                    break;
            }
        }
        return t;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// Random on-shell mode list on a lattice of the given period: distinct
/// keys in a small box, either energy sign, amplitudes projected onto the
/// matching energy eigenspace.
inline ModeListState random_modes(Gen& gen, double mass, double period, int count, int box = 4) {
    ModeListState s;
    s.mass = mass;
    s.period = period;
    const double dk = 2.0 * pi / period;
    for (int attempt = 0; static_cast<int>(s.modes.size()) < count && attempt < 100 * count; ++attempt) {
        Mode m;
        m.key = {gen.integer(-box, box), gen.integer(-box, box), gen.integer(-box, box)};
        m.sign = gen.integer(0, 1) ? 1 : -1;
        bool dup = false;
        for (const Mode& o : s.modes) dup = dup || (o.key == m.key && o.sign == m.sign);
        if (dup) continue;
        const Vec3 k = dk * Vec3(m.key[0], m.key[1], m.key[2]);
        const double e = std::sqrt(k.squaredNorm() + mass * mass);
        const Mat4c proj = 0.5 * (Mat4c::Identity() + (m.sign / e) * momentum_hamiltonian(k, mass));
        m.p = Vec4(e, m.sign * k[0], m.sign * k[1], m.sign * k[2]);
        m.weight = dk * dk * dk;
        m.amp = proj * gen.spinor();
        s.modes.push_back(m);
    }
    s.canonicalize();
    return s;
}

inline double max_abs(const Mat4c& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace releqt::testing
