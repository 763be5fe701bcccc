#pragma once

#include <cmath>
#include <cstdint>

#include "stochacc/common.hpp"

namespace stochacc {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stateless 64-bit mix of a seed with a tag; used to derive independent
/// per-trajectory and per-site streams that do not depend on visit order.
inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + (tag << 6) + (tag >> 2));
    splitmix64(x);
    return splitmix64(x);
}

/// xoshiro256++ generator. Self-contained so that sequences are pinned by
/// this code base, not by a standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    Real uniform() { return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log() argument.
    Real uniform_pos() { return (static_cast<Real>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    Real uniform(Real a, Real b) { return a + (b - a) * uniform(); }

    /// Standard normal via Box-Muller with one cached spare.
    Real normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        Real u1 = uniform_pos();
        Real u2 = uniform();
        Real r = std::sqrt(-2.0 * std::log(u1));
        Real a = kTwoPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// +1 or -1 with equal probability.
    Real sign() { return (next_u64() & 1ULL) ? 1.0 : -1.0; }

    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
    Real spare_ = 0.0;
    bool have_spare_ = false;
};

/// Uniform direction on the unit sphere in R^D.
template <int D>
Vec<D> random_unit(Rng& rng) {
    if constexpr (D == 1) {
        return Vec<1>(rng.sign());
    } else {
        while (true) {
            Vec<D> v;
            for (int i = 0; i < D; ++i) v[i] = rng.normal();
            Real n = v.norm();
            if (n > 1e-12) return v / n;
        }
    }
}

/// Uniform point in the ball of radius `radius` of the hyperplane
/// perpendicular to the unit vector e (the impact-parameter draw).
/// In one dimension the hyperplane is {0}.
template <int D>
Vec<D> random_impact(Rng& rng, const Vec<D>& e, Real radius) {
    Vec<D> b = Vec<D>::Zero();
    if constexpr (D == 1) {
        return b;
    } else if constexpr (D == 2) {
        Vec<2> t(-e[1], e[0]);
        return t * rng.uniform(-radius, radius);
    } else {
        // rejection sampling in the (D-1)-ball expressed in an orthonormal
        // frame of e-perp built by Householder reflection of the canonical frame
        Vec<D> u1 = Vec<D>::Zero();
        u1[0] = 1.0;
        Vec<D> w = e - u1;
        Real ww = w.squaredNorm();
        while (true) {
            Real c[D - 1];
            Real s2 = 0.0;
            for (int i = 0; i < D - 1; ++i) {
                c[i] = rng.uniform(-1.0, 1.0);
                s2 += c[i] * c[i];
            }
            if (s2 > 1.0) continue;
            b.setZero();
            for (int j = 1; j < D; ++j) {
                Vec<D> uj = Vec<D>::Zero();
                uj[j] = 1.0;
                Vec<D> qj = (ww > 1e-24) ? Vec<D>(uj - (2.0 * w[j] / ww) * w) : uj;
                b += c[j - 1] * radius * qj;
            }
            return b;
        }
    }
}

/// Haar-distributed orientation. For d=1 this is a random sign (the two
/// orientations of the line), for d=2 a uniform rotation angle, for d=3 a
/// uniform unit quaternion.
template <int D>
Mat<D> random_rotation(Rng& rng) {
    if constexpr (D == 1) {
        Mat<1> m;
        m(0, 0) = rng.sign();
        return m;
    } else if constexpr (D == 2) {
        Real a = rng.uniform(0.0, kTwoPi);
        Mat<2> m;
        m << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        return m;
    } else {
        Real q[4];
        Real n2;
        do {
            n2 = 0.0;
            for (auto& qi : q) {
                qi = rng.normal();
                n2 += qi * qi;
            }
        } while (n2 < 1e-12);
        Real n = std::sqrt(n2);
        Real w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
        Mat<3> m;
        m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
             2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
             2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
        return m;
    }
}

}  // namespace stochacc
