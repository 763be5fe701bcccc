#pragma once

#include <cmath>
#include <functional>

#include "stochacc/common.hpp"
#include "stochacc/rng.hpp"
#include "stochacc/time_profile.hpp"

namespace stochacc {

/// Smooth scatterer with force supported in the ball of radius 1/2. The
/// force g(y, phi) and its phase derivatives are always supplied; the
/// gradient case carries the potential and its derivatives as well.
template <int D>
struct SmoothScatterer {
    int torus_dim = 1;
    Phase omega = Phase(1.0, 0.0);
    bool is_gradient = false;
    Real g_max = 0.0;

    std::function<Vec<D>(const Vec<D>&, const Phase&)> g;
    std::function<Vec<D>(const Vec<D>&, const Phase&)> dtau_g;   // (omega.grad_phi) g
    std::function<Vec<D>(const Vec<D>&, const Phase&)> dtau2_g;  // (omega.grad_phi)^2 g
    std::function<Mat<D>(const Vec<D>&, const Phase&)> grad_g;   // Jacobian d g_i / d y_j

    // gradient-case extras, g = -grad W
    std::function<Real(const Vec<D>&, const Phase&)> W;
    std::function<Real(const Vec<D>&, const Phase&)> dtau_W;
    std::function<Vec<D>(const Vec<D>&, const Phase&)> grad_dtau_W;

    /// Central finite differences must reproduce the supplied derivatives;
    /// run at construction on a few sample points.
    void self_check() const {
        const Real h = 1e-5;
        Real worst = 0.0;
        for (int k = 0; k < 5; ++k) {
            Vec<D> y = Vec<D>::Constant(0.05 + 0.06 * k);
            if (y.norm() >= 0.49) y *= 0.4 / y.norm();
            Phase phi(0.13 + 0.11 * k, 0.29 + 0.07 * k);
            // phase derivative of g vs finite difference along omega
            Phase pp = phi + h * omega, pm = phi - h * omega;
            Vec<D> fd = (g(y, pp) - g(y, pm)) / (2 * h);
            worst = std::max(worst, (fd - dtau_g(y, phi)).norm());
            if (is_gradient) {
                for (int j = 0; j < D; ++j) {
                    Vec<D> yp = y, ym = y;
                    yp[j] += h;
                    ym[j] -= h;
                    Real fdW = -(W(yp, phi) - W(ym, phi)) / (2 * h);
                    worst = std::max(worst, std::abs(fdW - g(y, phi)[j]));
                }
                Real fdt = (W(y, pp) - W(y, pm)) / (2 * h);
                worst = std::max(worst, std::abs(fdt - dtau_W(y, phi)));
            }
        }
        if (worst > 1e-6)
            throw std::runtime_error("smooth scatterer derivative self-check failed");
    }
};

namespace detail {

/// C-infinity bump profile exp(1/(4 r^2 - 1)) with support exactly |y| < 1/2,
/// expressed through u = 4 r^2 - 1 (< 0 inside).
inline Real bump_u(Real r2) { return 4.0 * r2 - 1.0; }

inline Real bump_psi(Real r2) {
    Real u = bump_u(r2);
    if (u >= -1e-14) return 0.0;
    return std::exp(1.0 / u);
}

/// q = psi / u^2, the radial factor of grad(psi) = -8 q y.
inline Real bump_q(Real r2) {
    Real u = bump_u(r2);
    if (u >= -1e-14) return 0.0;
    return std::exp(1.0 / u) / (u * u);
}

/// d q / d(r^2) = -4 psi (1/u^4 + 2/u^3).
inline Real bump_dq(Real r2) {
    Real u = bump_u(r2);
    if (u >= -1e-14) return 0.0;
    Real psi = std::exp(1.0 / u);
    return -4.0 * psi * (1.0 / (u * u * u * u) + 2.0 / (u * u * u));
}

template <int D>
Real sup_norm_radial(const std::function<Real(Real)>& radial) {
    Real m = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        Real r = 0.5 * i / 2000.0;
        m = std::max(m, std::abs(radial(r)));
    }
    return m;
}

}  // namespace detail

/// Canonical gradient scatterer: W(y, phi) = A * exp(1/(4|y|^2-1)) * f(phi).
/// Satisfies the smoothness and support hypotheses exactly, and the time
/// drive is inherited from the profile (so (omega.grad_phi) W != 0).
template <int D>
SmoothScatterer<D> canonical_bump(Real amplitude, const TimeProfile& profile) {
    SmoothScatterer<D> s;
    s.torus_dim = profile.torus_dim();
    s.omega = profile.omega();
    s.is_gradient = true;
    const Real A = amplitude;

    s.W = [A, profile](const Vec<D>& y, const Phase& p) {
        return A * detail::bump_psi(y.squaredNorm()) * profile.eval(p);
    };
    s.dtau_W = [A, profile](const Vec<D>& y, const Phase& p) {
        return A * detail::bump_psi(y.squaredNorm()) * profile.deriv(p);
    };
    // g = -grad W = 8 A f(phi) q(r^2) y
    s.g = [A, profile](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (8.0 * A * profile.eval(p) * detail::bump_q(y.squaredNorm())) * y;
    };
    s.dtau_g = [A, profile](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (8.0 * A * profile.deriv(p) * detail::bump_q(y.squaredNorm())) * y;
    };
    s.dtau2_g = [A, profile](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (8.0 * A * profile.deriv2(p) * detail::bump_q(y.squaredNorm())) * y;
    };
    s.grad_dtau_W = [A, profile](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (-8.0 * A * profile.deriv(p) * detail::bump_q(y.squaredNorm())) * y;
    };
    s.grad_g = [A, profile](const Vec<D>& y, const Phase& p) -> Mat<D> {
        const Real r2 = y.squaredNorm();
        const Real c = 8.0 * A * profile.eval(p);
        return c * (detail::bump_q(r2) * Mat<D>::Identity() +
                    2.0 * detail::bump_dq(r2) * y * y.transpose());
    };

    Real fmax = 0.0;
    for (int i = 0; i < 256; ++i)
        fmax = std::max(fmax, std::abs(profile.eval(Phase(i / 256.0, i / 256.0))));
    s.g_max = detail::sup_norm_radial<D>([A](Real r) { return 8.0 * A * detail::bump_q(r * r) * r; }) * fmax;
    s.self_check();
    return s;
}

/// Canonical non-gradient scatterer. In d >= 2 a divergence-free rotational
/// field A * psi(|y|) * f(phi) * (-y2, y1, 0, ...); in d = 1 a scalar bump
/// force with nonvanishing integral (which no compactly supported potential
/// can produce).
template <int D>
SmoothScatterer<D> canonical_nongradient(Real amplitude, const TimeProfile& profile) {
    SmoothScatterer<D> s;
    s.torus_dim = profile.torus_dim();
    s.omega = profile.omega();
    s.is_gradient = false;
    const Real A = amplitude;

    auto rot = [](const Vec<D>& y) -> Vec<D> {
        Vec<D> r = Vec<D>::Zero();
        if constexpr (D == 1) {
            r[0] = 1.0;
        } else {
            r[0] = -y[1];
            r[1] = y[0];
        }
        return r;
    };

    s.g = [A, profile, rot](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (A * profile.eval(p) * detail::bump_psi(y.squaredNorm())) * rot(y);
    };
    s.dtau_g = [A, profile, rot](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (A * profile.deriv(p) * detail::bump_psi(y.squaredNorm())) * rot(y);
    };
    s.dtau2_g = [A, profile, rot](const Vec<D>& y, const Phase& p) -> Vec<D> {
        return (A * profile.deriv2(p) * detail::bump_psi(y.squaredNorm())) * rot(y);
    };
    s.grad_g = [A, profile, rot](const Vec<D>& y, const Phase& p) -> Mat<D> {
        const Real r2 = y.squaredNorm();
        const Real psi = detail::bump_psi(r2);
        const Real dpsi = -8.0 * detail::bump_q(r2);  // d psi / d(r^2) * 2 -> times y below
        Mat<D> m = Mat<D>::Zero();
        // d/dy_j [psi * rot_i] = dpsi*y_j*rot_i + psi * d rot_i/dy_j
        Vec<D> r = rot(y);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) m(i, j) = dpsi * y[j] * r[i];
        if constexpr (D >= 2) {
            m(0, 1) += -psi;
            m(1, 0) += psi;
        }
        return (A * profile.eval(p)) * m;
    };

    Real fmax = 0.0;
    for (int i = 0; i < 256; ++i)
        fmax = std::max(fmax, std::abs(profile.eval(Phase(i / 256.0, i / 256.0))));
    Real radial_max;
    if constexpr (D == 1)
        radial_max = detail::sup_norm_radial<D>([A](Real r) { return A * detail::bump_psi(r * r); });
    else
        radial_max =
            detail::sup_norm_radial<D>([A](Real r) { return A * detail::bump_psi(r * r) * r; });
    s.g_max = radial_max * fmax;
    s.self_check();
    return s;
}

/// The parameters of one scattering event: impact parameter (kept exactly
/// perpendicular to the approach direction), orientation, phase, coupling.
template <int D>
struct ScatterParams {
    Vec<D> b = Vec<D>::Zero();
    Mat<D> M = Mat<D>::Identity();
    Phase phi = Phase::Zero();
    Real c = 1.0;

    static ScatterParams make(const Vec<D>& e, const Vec<D>& b_raw, const Mat<D>& M, Phase phi,
                              Real c) {
        ScatterParams k;
        k.b = b_raw - b_raw.dot(e) * e;  // re-orthogonalize
        k.M = M;
        k.phi = phi;
        k.c = c;
        return k;
    }

    static ScatterParams draw(Rng& rng, const Vec<D>& e, int torus_dim, Real c) {
        ScatterParams k;
        k.b = random_impact<D>(rng, e, 0.5);
        k.M = random_rotation<D>(rng);
        k.phi[0] = rng.uniform();
        k.phi[1] = (torus_dim == 2) ? rng.uniform() : 0.0;
        k.c = c;
        return k;
    }
};

enum class CouplingDraw { uniform_0_half, uniform_sym_half, fixed_plus, pm_half };

inline Real draw_coupling(Rng& rng, CouplingDraw law) {
    switch (law) {
        case CouplingDraw::uniform_0_half: return 0.5 * rng.uniform();
        case CouplingDraw::uniform_sym_half: return rng.uniform(-0.5, 0.5);
        case CouplingDraw::fixed_plus: return 1.0;
        case CouplingDraw::pm_half: return 0.5 * rng.sign();
    }
    return 0.0;
}

/// Second moment of the coupling law.
inline Real coupling_second_moment(CouplingDraw law) {
    switch (law) {
        case CouplingDraw::uniform_0_half: return 1.0 / 12.0;
        case CouplingDraw::uniform_sym_half: return 1.0 / 12.0;
        case CouplingDraw::fixed_plus: return 1.0;
        case CouplingDraw::pm_half: return 0.25;
    }
    return 0.0;
}

}  // namespace stochacc
