#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "stochacc/accumulator.hpp"
#include "stochacc/common.hpp"
#include "stochacc/ensemble.hpp"
#include "stochacc/quadrature.hpp"
#include "stochacc/smooth_scatterer.hpp"

namespace stochacc {

/// Volume of the k-ball of radius r, k <= 3.
inline Real ball_volume(int k, Real r) {
    switch (k) {
        case 0: return 1.0;
        case 1: return 2.0 * r;
        case 2: return kPi * r * r;
        case 3: return (4.0 / 3.0) * kPi * r * r * r;
        default: throw std::invalid_argument("ball_volume: unsupported dimension");
    }
}

struct CoeffEstimate {
    Real value = 0.0;
    Real std_error = 0.0;
};

struct GradientCoeffs {
    CoeffEstimate D2;        // kernel-route quadrature
    CoeffEstimate D2_beta;   // independent line-integral route <beta1^2>
    Real B = 0.0;            // (d-3)/2 * D2, exact relation
    Real gamma = 0.0;        // (d-2)/6
};

struct NonGradientCoeffs {
    CoeffEstimate D2p;
    CoeffEstimate D2p_beta;  // <beta0^2>
    Real Bp = 0.0;           // (d-1)/2 * D2p
    Real gamma_p = 0.0;      // (d-1)/4
};

namespace detail {

/// Correlation-kernel quadrature common to both cases:
///   pref * Int dphi Int dy Int_0^1 dr Int dOmega(w)  q(y, y + r w, w, phi)
/// where the (midpoint, separation) parametrization has absorbed the
/// integrable |y-y'|^(1-d)-type singularity. Both potentials live in the
/// ball of radius 1/2, so separations beyond 1 contribute nothing.
template <int D, class Q>
CoeffEstimate kernel_route(Q&& q, int torus_dim, std::int64_t n, std::uint64_t seed,
                           int workers, Real pref) {
    struct Partial {
        Welford w;
        void merge(const Partial& o) { w.merge(o.w); }
    };
    auto total = run_chunked(
        n, workers, [] { return Partial{}; },
        [&](Partial& out, std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
                Vec<D> y;
                do {
                    for (int k = 0; k < D; ++k) y[k] = rng.uniform(-0.5, 0.5);
                } while (y.squaredNorm() > 0.25);
                const Real r = rng.uniform();
                const Vec<D> w = random_unit<D>(rng);
                Phase phi(rng.uniform(), (torus_dim == 2) ? rng.uniform() : 0.0);
                out.w.add(q(y, Vec<D>(y + r * w), w, phi));
            }
        });
    const Real measure = ball_volume(D, 0.5) * 1.0 * sphere_area(D);
    CoeffEstimate est;
    est.value = pref * measure * total.w.mean;
    est.std_error = pref * measure * total.w.std_error();
    return est;
}

/// <(line integral)^2> over (e, b, M, phi) with the coupling second moment.
template <int D, class LineFun>
CoeffEstimate beta_route(LineFun&& line, int torus_dim, std::int64_t n, std::uint64_t seed,
                         int workers, Real c2bar) {
    struct Partial {
        Welford w;
        void merge(const Partial& o) { w.merge(o.w); }
    };
    auto total = run_chunked(
        n, workers, [] { return Partial{}; },
        [&](Partial& out, std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(seed ^ 0x5851f42d4c957f2dULL,
                                     static_cast<std::uint64_t>(i)));
                const Vec<D> dir = random_unit<D>(rng);
                ScatterParams<D> kap = ScatterParams<D>::draw(rng, dir, torus_dim, 1.0);
                const Real v = line(dir, kap);
                out.w.add(v * v);
            }
        });
    CoeffEstimate est;
    est.value = c2bar * total.w.mean;
    est.std_error = c2bar * total.w.std_error();
    return est;
}

/// Per-line quadrature of a scalar integrand along the chord b+(l-1/2)e.
template <int D, class F>
Real chord_integral(const Vec<D>& e, const ScatterParams<D>& k, F&& f) {
    const Real b2 = k.b.squaredNorm();
    if (b2 >= 0.25) return 0.0;
    const Real w = std::sqrt(0.25 - b2);
    const Vec<D> bf = k.M.transpose() * k.b;
    const Vec<D> ef = k.M.transpose() * e;
    const auto& gl = GaussLegendre::order(48);
    Real acc = 0.0;
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const Real l = w * gl.x[i];
        acc += gl.w[i] * w * f(Vec<D>(bf + l * ef), ef, k.phi);
    }
    return acc;
}

}  // namespace detail

/// D^2, B, gamma for a gradient scatterer. The kernel route integrates the
/// time-derivative correlation against |y-y'|^(1-d); the beta route averages
/// the squared first-order energy line integral. Both carry standard errors
/// and must agree: they are mutual oracles. The normalization
///   D^2 = (2 cbar^2) / (C_d |S^{d-1}|) * Int dphi dy dy' |y-y'|^{1-d}
///         dtauW(y,phi) dtauW(y',phi)
/// is the one consistent with D^2 = <beta1^2> under the single-event average.
template <int D>
GradientCoeffs gradient_coeffs(const SmoothScatterer<D>& s, Real c2bar,
                               std::int64_t n_kernel = 2000000, std::int64_t n_beta = 200000,
                               std::uint64_t seed = 12345, int workers = 1) {
    if (!s.is_gradient) throw std::invalid_argument("gradient_coeffs needs a gradient scatterer");
    GradientCoeffs out;
    const Real pref = 2.0 * c2bar / (impact_ball_volume(D) * sphere_area(D));

    if constexpr (D == 1) {
        // kernel |y-y'|^0 = 1: the double integral factorizes; tensor quadrature
        auto inner = [&](const Phase& phi) {
            Real line = adaptive_integrate(
                [&](Real y) { return s.dtau_W(Vec<1>(y), phi); }, -0.5, 0.5, 1e-12);
            return line * line;
        };
        const Real val = torus_mean(inner, s.torus_dim, 64);
        out.D2.value = pref * val;
        out.D2.std_error = 0.0;
    } else {
        out.D2 = detail::kernel_route<D>(
            [&](const Vec<D>& y, const Vec<D>& yp, const Vec<D>&, const Phase& phi) {
                return s.dtau_W(y, phi) * s.dtau_W(yp, phi);
            },
            s.torus_dim, n_kernel, seed, workers, pref);
    }

    out.D2_beta = detail::beta_route<D>(
        [&](const Vec<D>& e, const ScatterParams<D>& k) {
            return detail::chord_integral<D>(
                e, k, [&](const Vec<D>& y, const Vec<D>&, const Phase& phi) {
                    return s.dtau_W(y, phi);
                });
        },
        s.torus_dim, n_beta, seed, workers, c2bar);

    if (out.D2.value < -3.0 * out.D2.std_error)
        throw NegativeD2("kernel-route D^2 came out negative beyond noise");
    out.B = 0.5 * (D - 3) * out.D2.value;
    out.gamma = (D - 2) / 6.0;
    return out;
}

/// D'^2, B', gamma' for a non-gradient scatterer with centered coupling law.
template <int D>
NonGradientCoeffs nongradient_coeffs(const SmoothScatterer<D>& s, Real c2bar,
                                     std::int64_t n_kernel = 2000000,
                                     std::int64_t n_beta = 200000, std::uint64_t seed = 54321,
                                     int workers = 1) {
    NonGradientCoeffs out;
    const Real pref = 2.0 * c2bar / (impact_ball_volume(D) * sphere_area(D));

    if constexpr (D == 1) {
        auto inner = [&](const Phase& phi) {
            Real line = adaptive_integrate(
                [&](Real y) { return s.g(Vec<1>(y), phi)[0]; }, -0.5, 0.5, 1e-12);
            return line * line;
        };
        const Real val = torus_mean(inner, s.torus_dim, 64);
        out.D2p.value = pref * val;
        out.D2p.std_error = 0.0;
    } else {
        out.D2p = detail::kernel_route<D>(
            [&](const Vec<D>& y, const Vec<D>& yp, const Vec<D>& w, const Phase& phi) {
                return w.dot(s.g(y, phi)) * w.dot(s.g(yp, phi));
            },
            s.torus_dim, n_kernel, seed, workers, pref);
    }

    out.D2p_beta = detail::beta_route<D>(
        [&](const Vec<D>& e, const ScatterParams<D>& k) {
            return detail::chord_integral<D>(
                e, k, [&](const Vec<D>& y, const Vec<D>& ef, const Phase& phi) {
                    return ef.dot(s.g(y, phi));
                });
        },
        s.torus_dim, n_beta, seed, workers, c2bar);

    out.Bp = 0.5 * (D - 1) * out.D2p.value;
    out.gamma_p = (D - 1) / 4.0;
    return out;
}

struct HomogeneousCoeffs {
    Real K0 = 0.0;
    Real K1 = 0.0;
    Real Btilde = 0.0;
    Real D2tilde = 0.0;
    Real gamma = 0.0;
    Real eta_star = 1.0;
};

/// Gradient homogeneous field: K0 = Int_0^1 (-d^2/dt^2 K)(mu e, 0) dmu and
/// K1 its first moment; then Btilde = (d-3) eta* K0 - 2(d-4) K1 and
/// D2tilde = 2 (eta* K0 - K1).
inline HomogeneousCoeffs homogeneous_gradient_coeffs(
    const std::function<Real(Real)>& neg_d2t_K, Real eta_star, int d) {
    HomogeneousCoeffs out;
    out.eta_star = eta_star;
    out.K0 = adaptive_integrate([&](Real m) { return neg_d2t_K(m); }, 0.0, 1.0, 1e-12);
    out.K1 = adaptive_integrate([&](Real m) { return m * neg_d2t_K(m); }, 0.0, 1.0, 1e-12);
    out.Btilde = (d - 3) * eta_star * out.K0 - 2.0 * (d - 4) * out.K1;
    out.D2tilde = 2.0 * (eta_star * out.K0 - out.K1);
    out.gamma = (out.D2tilde != 0.0) ? (out.Btilde / out.D2tilde + 0.5) / 3.0 : 0.0;
    return out;
}

/// Non-gradient homogeneous field: K0' = Int Lambda1(mu, 0) dmu, K1' its
/// first moment; Btilde' = eta*(d-1) K0' - (d-2) K1', D2tilde' = 2(eta* K0' - K1').
inline HomogeneousCoeffs homogeneous_nongradient_coeffs(
    const std::function<Real(Real)>& lambda1, Real eta_star, int d) {
    HomogeneousCoeffs out;
    out.eta_star = eta_star;
    out.K0 = adaptive_integrate([&](Real m) { return lambda1(m); }, 0.0, 1.0, 1e-12);
    out.K1 = adaptive_integrate([&](Real m) { return m * lambda1(m); }, 0.0, 1.0, 1e-12);
    out.Btilde = eta_star * (d - 1) * out.K0 - (d - 2) * out.K1;
    out.D2tilde = 2.0 * (eta_star * out.K0 - out.K1);
    out.gamma = (out.D2tilde != 0.0) ? (out.Btilde / out.D2tilde + 0.5) / 3.0 : 0.0;
    return out;
}

struct ChangeVarResult {
    Real lhs = 0.0;
    Real lhs_err = 0.0;
    Real rhs = 0.0;
    Real rhs_err = 0.0;
    Real relative_difference = 0.0;
};

/// Two independent Monte Carlo estimators of the line-parametrization
/// identity
///   Int_{S^{d-1}} dOmega(e) Int_{b.e=0} db Int dl Int dl'
///       f(b + l e, b + l' e, |l-l'|)
///   = 2 Int dy Int dy' |y-y'|^{1-d} f(y, y', |y-y'|).
/// The factor 2 accounts for the two orientations of e describing the same
/// line. `support_radius` must bound the support of f in both y arguments.
template <int D>
ChangeVarResult changevar_check(
    const std::function<Real(const Vec<D>&, const Vec<D>&, Real)>& f, Real support_radius,
    std::int64_t n_samples, std::uint64_t seed, int workers = 1) {
    static_assert(D >= 2, "the line parametrization needs d >= 2");
    struct Partial {
        Welford lhs, rhs;
        void merge(const Partial& o) {
            lhs.merge(o.lhs);
            rhs.merge(o.rhs);
        }
    };
    const Real R = support_radius;
    auto total = run_chunked(
        n_samples, workers, [] { return Partial{}; },
        [&](Partial& out, std::int64_t bgn, std::int64_t end) {
            for (std::int64_t i = bgn; i < end; ++i) {
                Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
                // LHS: e on the sphere, b uniform in the (d-1)-ball of radius R
                // of the hyperplane, l, l' uniform in [-R, R]
                const Vec<D> e = random_unit<D>(rng);
                Vec<D> b;
                if constexpr (D == 2) {
                    Vec<2> t(-e[1], e[0]);
                    b = t * rng.uniform(-R, R);
                } else {
                    b = random_impact<D>(rng, e, R);
                }
                const Real l = rng.uniform(-R, R);
                const Real lp = rng.uniform(-R, R);
                out.lhs.add(f(b + l * e, b + lp * e, std::abs(l - lp)));

                // RHS: midpoint in the R-ball, separation uniform, direction on
                // the sphere; the r^{d-1} volume factor cancels the kernel
                Vec<D> y;
                do {
                    for (int k = 0; k < D; ++k) y[k] = rng.uniform(-R, R);
                } while (y.squaredNorm() > R * R);
                const Real r = rng.uniform(0.0, 2.0 * R);
                const Vec<D> w = random_unit<D>(rng);
                out.rhs.add(f(y, Vec<D>(y + r * w), r));
            }
        });
    const Real lhs_measure = sphere_area(D) * ball_volume(D - 1, R) * (2.0 * R) * (2.0 * R);
    const Real rhs_measure = 2.0 * ball_volume(D, R) * (2.0 * R) * sphere_area(D);
    ChangeVarResult out;
    out.lhs = lhs_measure * total.lhs.mean;
    out.lhs_err = lhs_measure * total.lhs.std_error();
    out.rhs = rhs_measure * total.rhs.mean;
    out.rhs_err = rhs_measure * total.rhs.std_error();
    const Real scale = std::max(std::abs(out.lhs), std::abs(out.rhs));
    out.relative_difference = (scale > 0.0) ? std::abs(out.lhs - out.rhs) / scale : 0.0;
    return out;
}

}  // namespace stochacc
