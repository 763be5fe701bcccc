#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stochacc/common.hpp"

namespace stochacc {

/// Gauss-Legendre rule on [-1, 1]; nodes by Newton iteration on the
/// three-term recurrence. Cached per order.
struct GaussLegendre {
    std::vector<Real> x;
    std::vector<Real> w;

    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < n; ++i) {
            // Chebyshev-like initial guess
            Real t = std::cos(kPi * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                Real p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    Real p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                Real dp = n * (t * p1 - p0) / (t * t - 1.0);
                Real dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-16) break;
            }
            Real p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                Real p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            Real dp = n * (t * p1 - p0) / (t * t - 1.0);
            x[i] = t;
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
    }

    static const GaussLegendre& order(int n) {
        static const GaussLegendre g16(16), g32(32), g48(48), g64(64);
        switch (n) {
            case 16: return g16;
            case 32: return g32;
            case 48: return g48;
            default: return g64;
        }
    }

    template <class F>
    auto integrate(F&& f, Real a, Real b) const {
        const Real h = 0.5 * (b - a), m = 0.5 * (a + b);
        auto acc = f(m + h * x[0]) * (w[0] * h);
        for (std::size_t i = 1; i < x.size(); ++i) acc += f(m + h * x[i]) * (w[i] * h);
        return acc;
    }
};

namespace detail {

template <class F>
Real adaptive_simpson_rec(F& f, Real a, Real b, Real fa, Real fm, Real fb, Real whole,
                          Real tol, int depth) {
    Real m = 0.5 * (a + b);
    Real lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    Real flm = f(lm), frm = f(rm);
    Real left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    Real right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    Real delta = left + right - whole;
    if (depth <= 0) throw QuadratureFailure("adaptive Simpson: max depth exceeded");
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson to absolute tolerance.
template <class F>
Real adaptive_integrate(F&& f, Real a, Real b, Real abs_tol, int max_depth = 48) {
    if (a == b) return 0.0;
    Real m = 0.5 * (a + b);
    Real fa = f(a), fm = f(m), fb = f(b);
    Real whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, max_depth);
}

/// Mean of a smooth periodic function over the m-torus by the trapezoid rule
/// (spectrally accurate). kind m = 1 or 2.
template <class F>
Real torus_mean(F&& f, int m, int points_per_dim) {
    const int k = points_per_dim;
    if (m == 1) {
        Real s = 0.0;
        for (int i = 0; i < k; ++i) s += f(Vec<2>(static_cast<Real>(i) / k, 0.0));
        return s / k;
    }
    Real s = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            s += f(Vec<2>(static_cast<Real>(i) / k, static_cast<Real>(j) / k));
    return s / (static_cast<Real>(k) * k);
}

}  // namespace stochacc
