#pragma once

#include <cmath>

#include "stochacc/common.hpp"
#include "stochacc/smooth_scatterer.hpp"

namespace stochacc {

template <int D>
struct ScatterResult {
    Vec<D> dv = Vec<D>::Zero();
    Real dE = 0.0;
    Real tau_in = 0.0;            // entry time of the ball of radius 5/2 (tau=0 at b - e/2)
    Real tau_out = 0.0;           // exit time of that ball
    Real tau_support_entry = 0.0; // first crossing of the support radius 1/2
    bool entered_support = false;
    Vec<D> v_out = Vec<D>::Zero();
};

namespace detail {

/// One RK4 step of ydd = c M g(M^-1 y, omega tau + phi).
template <int D>
void rk4_step(const SmoothScatterer<D>& s, const ScatterParams<D>& k, Vec<D>& y, Vec<D>& v,
              Real& tau, Real h) {
    auto acc = [&](const Vec<D>& yy, Real tt) -> Vec<D> {
        Phase p = s.omega * tt + k.phi;
        return k.c * (k.M * s.g(k.M.transpose() * yy, Phase(TorusPhase::wrap(p[0]),
                                                            TorusPhase::wrap(p[1]))));
    };
    const Vec<D> k1v = acc(y, tau), k1y = v;
    const Vec<D> k2v = acc(y + 0.5 * h * k1y, tau + 0.5 * h), k2y = v + 0.5 * h * k1v;
    const Vec<D> k3v = acc(y + 0.5 * h * k2y, tau + 0.5 * h), k3y = v + 0.5 * h * k2v;
    const Vec<D> k4v = acc(y + h * k3y, tau + h), k4y = v + h * k3v;
    y += (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    tau += h;
}

template <int D>
ScatterResult<D> integrate_once(const Vec<D>& v0, const ScatterParams<D>& kappa,
                                const SmoothScatterer<D>& s, Real h) {
    const Real speed = v0.norm();
    const Vec<D> e = v0 / speed;
    ScatterResult<D> out;

    // start at b - e/2; free flight until the ray reaches the support
    const Real b2 = kappa.b.squaredNorm();
    Vec<D> y = kappa.b - 0.5 * e;
    out.tau_in = (0.5 - std::sqrt(6.25 - b2)) / speed;  // exact backward crossing of 5/2

    if (b2 >= 0.25) {  // the ray misses the support entirely
        out.dv = Vec<D>::Zero();
        out.dE = 0.0;
        out.v_out = v0;
        out.tau_out = (0.5 + std::sqrt(6.25 - b2)) / speed;
        return out;
    }
    out.entered_support = true;
    out.tau_support_entry = (0.5 - std::sqrt(0.25 - b2)) / speed;

    Vec<D> v = v0;
    Real tau = out.tau_support_entry;
    y += v0 * tau;

    long steps = 0;
    const long max_steps = 100000000L;
    while (true) {
        const Real r = y.norm();
        if (r >= 0.55 && y.dot(v) > 0.0) break;
        rk4_step(s, kappa, y, v, tau, h);
        if (++steps > max_steps) throw NoConvergence("scattering integration did not exit");
    }

    out.v_out = v;
    out.dv = v - v0;
    out.dE = 0.5 * (v.squaredNorm() - v0.squaredNorm());
    // ballistic crossing of the 5/2 ball on the way out
    const Real vv = v.squaredNorm();
    const Real yv = y.dot(v);
    const Real t_out = (-yv + std::sqrt(yv * yv - vv * (y.squaredNorm() - 6.25))) / vv;
    out.tau_out = tau + t_out;
    return out;
}

}  // namespace detail

/// Direct numerical scattering: integrates the full event with a fixed-step
/// classical 4th-order scheme and returns the asymptotic momentum and energy
/// transfer plus the crossing times of the ball of radius 5/2. The step is
/// validated by halving; disable `check_step` in bulk Monte Carlo after one
/// validation per batch.
template <int D>
ScatterResult<D> integrate_scattering(const Vec<D>& v0, const ScatterParams<D>& kappa,
                                      const SmoothScatterer<D>& s, Real h = 0.0,
                                      bool check_step = true) {
    const Real speed2 = v0.squaredNorm();
    if (speed2 < 12.0 * std::abs(kappa.c) * s.g_max)
        throw RegimeViolation("speed below the fast-particle regime bound");
    const Real speed = std::sqrt(speed2);
    // the interaction window shrinks like 1/speed; keep ~400 steps across it
    const Real h_use = (h > 0.0) ? h : std::min(1e-3, 1.0 / (400.0 * speed));
    ScatterResult<D> r = detail::integrate_once(v0, kappa, s, h_use);
    if (check_step && r.entered_support) {
        ScatterResult<D> r2 = detail::integrate_once(v0, kappa, s, 0.5 * h_use);
        if (std::abs(r2.dE - r.dE) >= 1e-8)
            throw NoConvergence("energy transfer not converged under step halving");
        return r2;
    }
    return r;
}

/// Crossing-time bounds for one event whose reference time is the support
/// entry: 1/|v0| <= min(tau0-tau_in, tau_out-tau0) <= max <= 5/|v0|.
template <int D>
bool crossing_bounds_hold(const ScatterResult<D>& r, Real speed) {
    if (!r.entered_support) return true;  // precondition (start inside the support) not met
    const Real lo = r.tau_support_entry - r.tau_in;
    const Real hi = r.tau_out - r.tau_support_entry;
    const Real mn = std::min(lo, hi), mx = std::max(lo, hi);
    return (1.0 / speed) <= mn && mx <= (5.0 / speed);
}

}  // namespace stochacc
