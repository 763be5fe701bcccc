#pragma once

#include <cmath>

#include "stochacc/common.hpp"
#include "stochacc/quadrature.hpp"
#include "stochacc/smooth_scatterer.hpp"

namespace stochacc {

/// Expansion coefficients of the momentum and energy transfer in inverse
/// powers of the speed, evaluated by line quadrature along the undeflected
/// path b + (lambda - 1/2) e. The third- and fourth-order energy
/// coefficients are exposed only through their second-order-in-the-field
/// quadratures, which is all the asymptotic analysis constrains.
template <int D>
struct ExpansionCoeffs {
    Vec<D> alpha1 = Vec<D>::Zero();
    Vec<D> alpha2 = Vec<D>::Zero();
    Real beta0 = 0.0;     // e . alpha1
    Real beta1 = 0.0;     // e . alpha2
    Real beta2 = 0.0;     // 1/2 |alpha1|^2 + e . alpha3
    Real beta3_II = 0.0;  // second-order-in-g part, pointwise in phi
};

namespace detail {

/// Support window of the chord through impact parameter b: the integrand
/// vanishes unless |b + (l - 1/2) e| < 1/2.
inline bool chord_window(Real b2, Real& lo, Real& hi) {
    if (b2 >= 0.25) return false;
    const Real w = std::sqrt(0.25 - b2);
    lo = 0.5 - w;
    hi = 0.5 + w;
    return true;
}

}  // namespace detail

/// alpha1 = c Int M g(M^-1(b + (l-1/2) e), phi) dl, adaptive to `tol`.
template <int D>
Vec<D> alpha1_coeff(const Vec<D>& e, const ScatterParams<D>& k, const SmoothScatterer<D>& s,
                    Real tol = 1e-10) {
    Real lo, hi;
    Vec<D> out = Vec<D>::Zero();
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return out;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    for (int i = 0; i < D; ++i) {
        out[i] = k.c * adaptive_integrate(
                           [&](Real l) { return s.g(bf + (l - 0.5) * ef, k.phi)[i]; }, lo, hi, tol);
    }
    return k.M * out;
}

/// alpha2 = c Int l (omega.grad_phi)(M g)(M^-1(b + (l-1/2) e), phi) dl.
template <int D>
Vec<D> alpha2_coeff(const Vec<D>& e, const ScatterParams<D>& k, const SmoothScatterer<D>& s,
                    Real tol = 1e-10) {
    Real lo, hi;
    Vec<D> out = Vec<D>::Zero();
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return out;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    for (int i = 0; i < D; ++i) {
        out[i] = k.c * adaptive_integrate(
                           [&](Real l) { return l * s.dtau_g(bf + (l - 0.5) * ef, k.phi)[i]; },
                           lo, hi, tol);
    }
    return k.M * out;
}

/// Fast fixed-node evaluation of the two-term kick alpha1/v + alpha2/v^2;
/// used by the surrogate walk where per-step quadrature tolerance is
/// irrelevant but throughput matters.
template <int D>
Vec<D> expansion_kick(const Vec<D>& v, const ScatterParams<D>& k, const SmoothScatterer<D>& s) {
    Real lo, hi;
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return Vec<D>::Zero();
    const Real speed = v.norm();
    const Vec<D> e = v / speed;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    const auto& gl = GaussLegendre::order(32);
    const Real hw = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    Vec<D> a1 = Vec<D>::Zero(), a2 = Vec<D>::Zero();
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const Real l = mid + hw * gl.x[i];
        const Real w = gl.w[i] * hw;
        const Vec<D> y = bf + (l - 0.5) * ef;
        a1 += w * s.g(y, k.phi);
        a2 += (w * l) * s.dtau_g(y, k.phi);
    }
    return k.M * (k.c * (a1 / speed + a2 / (speed * speed)));
}

namespace detail {

/// Cumulative integrals of the in-frame force along the chord, evaluated on
/// a uniform grid by the trapezoid rule; P = Int g, Q = Int P.
template <int D>
struct ChordCumulatives {
    std::vector<Real> lambda;
    std::vector<Vec<D>> gvals;  // g at nodes
    std::vector<Vec<D>> P;
    std::vector<Vec<D>> Q;

    template <class GFun>
    ChordCumulatives(GFun&& g, Real lo, Real hi, int n) {
        lambda.resize(n + 1);
        gvals.resize(n + 1);
        P.assign(n + 1, Vec<D>::Zero());
        Q.assign(n + 1, Vec<D>::Zero());
        const Real h = (hi - lo) / n;
        for (int i = 0; i <= n; ++i) {
            lambda[i] = lo + h * i;
            gvals[i] = g(lambda[i]);
        }
        for (int i = 1; i <= n; ++i) {
            P[i] = P[i - 1] + 0.5 * h * (gvals[i - 1] + gvals[i]);
            Q[i] = Q[i - 1] + 0.5 * h * (P[i - 1] + P[i]);
        }
    }
};

}  // namespace detail

/// beta2 = 1/2 |alpha1|^2 + e.alpha3, with alpha3 assembled from the
/// second-order retardation of the first-order kick and the leading
/// second-order-in-g term.
template <int D>
Real beta2_coeff(const Vec<D>& e, const ScatterParams<D>& k, const SmoothScatterer<D>& s,
                 int grid_n = 2048) {
    Real lo, hi;
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return 0.0;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    const Vec<D> a1 = alpha1_coeff(e, k, s);

    // retardation part: (c/2) Int l^2 dtau2 g
    Vec<D> a3_I = Vec<D>::Zero();
    for (int i = 0; i < D; ++i)
        a3_I[i] = 0.5 * k.c *
                  adaptive_integrate(
                      [&](Real l) { return l * l * s.dtau2_g(bf + (l - 0.5) * ef, k.phi)[i]; },
                      lo, hi, 1e-10);

    // second order in g: c^2 Int [K(l).grad] g with K the double cumulative
    detail::ChordCumulatives<D> cum(
        [&](Real l) { return s.g(bf + (l - 0.5) * ef, k.phi); }, lo, hi, grid_n);
    Real e_a3_II = 0.0;
    const Real h = (hi - lo) / grid_n;
    for (int i = 0; i <= grid_n; ++i) {
        const Real w = (i == 0 || i == grid_n) ? 0.5 * h : h;
        const Vec<D> y = bf + (cum.lambda[i] - 0.5) * ef;
        e_a3_II += w * ef.dot(s.grad_g(y, k.phi) * cum.Q[i]);
    }
    e_a3_II *= k.c * k.c;

    return 0.5 * a1.squaredNorm() + e.dot(k.M * a3_I) + e_a3_II;
}

/// Pointwise second-order-in-g part of beta3:
///   -c^2 Int dl Int_0^l dl' Int_0^l' dl''  dtauS(l-1/2) . S(l''-1/2)
/// with S the in-frame potential gradient.
template <int D>
Real beta3_II_coeff(const Vec<D>& e, const ScatterParams<D>& k, const SmoothScatterer<D>& s,
                    int grid_n = 2048) {
    if (!s.is_gradient)
        throw std::runtime_error("beta3_II requires a gradient scatterer");
    Real lo, hi;
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return 0.0;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    detail::ChordCumulatives<D> cum(
        [&](Real l) { return -s.g(bf + (l - 0.5) * ef, k.phi); }, lo, hi, grid_n);  // grad W
    Real acc = 0.0;
    const Real h = (hi - lo) / grid_n;
    for (int i = 0; i <= grid_n; ++i) {
        const Real w = (i == 0 || i == grid_n) ? 0.5 * h : h;
        const Vec<D> y = bf + (cum.lambda[i] - 0.5) * ef;
        acc += w * s.grad_dtau_W(y, k.phi).dot(cum.Q[i]);
    }
    return -k.c * k.c * acc;
}

template <int D>
struct MomentumExpansion {
    Vec<D> dv_approx = Vec<D>::Zero();
    ExpansionCoeffs<D> coeffs;
};

/// Two-term momentum transfer approximation R = alpha1/|v| + alpha2/|v|^2
/// together with the energy coefficients that follow from it.
template <int D>
MomentumExpansion<D> momentum_transfer_expansion(const Vec<D>& v, const ScatterParams<D>& k,
                                                 const SmoothScatterer<D>& s,
                                                 bool with_beta2 = false) {
    MomentumExpansion<D> out;
    const Real speed = v.norm();
    const Vec<D> e = v / speed;
    out.coeffs.alpha1 = alpha1_coeff(e, k, s);
    out.coeffs.alpha2 = alpha2_coeff(e, k, s);
    out.coeffs.beta0 = e.dot(out.coeffs.alpha1);
    out.coeffs.beta1 = e.dot(out.coeffs.alpha2);
    if (with_beta2) {
        out.coeffs.beta2 = beta2_coeff(e, k, s);
        if (s.is_gradient) out.coeffs.beta3_II = beta3_II_coeff(e, k, s);
    }
    out.dv_approx = out.coeffs.alpha1 / speed + out.coeffs.alpha2 / (speed * speed);
    return out;
}

/// First- and second-order-in-W energy transfer of one gradient scattering at
/// finite speed, including retardation:
///   dK_I  = (c/v) Int dtauW(y0 + l e, l/v) dl
///   dK_II = -(c^2/v^3) Int dl grad dtauW(y0+l e, l/v) . Q(l)
template <int D>
std::pair<Real, Real> energy_transfer_expansion(const Vec<D>& v, const ScatterParams<D>& k,
                                                const SmoothScatterer<D>& s, int grid_n = 4096) {
    if (!s.is_gradient)
        throw std::runtime_error("energy_transfer_expansion requires a gradient scatterer");
    Real lo, hi;
    if (!detail::chord_window(k.b.squaredNorm(), lo, hi)) return {0.0, 0.0};
    const Real speed = v.norm();
    const Vec<D> e = v / speed;
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;

    auto phase_at = [&](Real l) {
        Phase p = k.phi + s.omega * (l / speed);
        return Phase(TorusPhase::wrap(p[0]), TorusPhase::wrap(p[1]));
    };

    const Real dK_I =
        (k.c / speed) * adaptive_integrate(
                            [&](Real l) {
                                return s.dtau_W(bf + (l - 0.5) * ef, phase_at(l));
                            },
                            lo, hi, 1e-12);

    detail::ChordCumulatives<D> cum(
        [&](Real l) { return -s.g(bf + (l - 0.5) * ef, phase_at(l)); }, lo, hi, grid_n);
    Real acc = 0.0;
    const Real h = (hi - lo) / grid_n;
    for (int i = 0; i <= grid_n; ++i) {
        const Real w = (i == 0 || i == grid_n) ? 0.5 * h : h;
        const Vec<D> y = bf + (cum.lambda[i] - 0.5) * ef;
        acc += w * s.grad_dtau_W(y, phase_at(cum.lambda[i])).dot(cum.Q[i]);
    }
    const Real dK_II = -(k.c * k.c / (speed * speed * speed)) * acc;
    return {dK_I, dK_II};
}

/// Phase-averaged fourth-order coefficient of the time-reversal-paired
/// energy transfer:
///   (c^2/2) Int dphi Int_0^1 Int_0^1 (l-l')^2 dtauS(l-1/2).dtauS(l'-1/2)
/// The double lambda integral is separable and evaluated in O(nodes).
template <int D>
Real beta4_II_hat(const Vec<D>& e, const Vec<D>& b, const Mat<D>& M, Real c,
                  const SmoothScatterer<D>& s, int phi_points = 24) {
    Real lo, hi;
    if (!detail::chord_window(b.squaredNorm(), lo, hi)) return 0.0;
    const Vec<D> bf = M.transpose() * b;
    const Vec<D> ef = M.transpose() * e;
    const auto& gl = GaussLegendre::order(48);
    const Real hw = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);

    auto phi_integrand = [&](const Phase& phi) {
        Vec<D> m0 = Vec<D>::Zero(), m1 = Vec<D>::Zero(), m2 = Vec<D>::Zero();
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            const Real l = mid + hw * gl.x[i];
            const Real w = gl.w[i] * hw;
            const Vec<D> t = s.grad_dtau_W(bf + (l - 0.5) * ef, phi);
            m0 += w * t;
            m1 += (w * l) * t;
            m2 += (w * l * l) * t;
        }
        // Int Int (l-l')^2 T(l).T(l') = 2 m2.m0 - 2 m1.m1
        return 2.0 * (m2.dot(m0) - m1.dot(m1));
    };
    return 0.5 * c * c * torus_mean(phi_integrand, s.torus_dim, phi_points);
}

}  // namespace stochacc
