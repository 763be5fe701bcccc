#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "stochacc/accumulator.hpp"
#include "stochacc/common.hpp"
#include "stochacc/ensemble.hpp"
#include "stochacc/expansions.hpp"
#include "stochacc/lorentz_gas.hpp"
#include "stochacc/rng.hpp"
#include "stochacc/smooth_scatterer.hpp"

namespace stochacc {

enum class NoiseLaw { normal, uniform, pm1 };

/// Zero-mean unit-variance draw.
inline Real draw_noise(Rng& rng, NoiseLaw law) {
    switch (law) {
        case NoiseLaw::normal: return rng.normal();
        case NoiseLaw::uniform: return rng.uniform(-std::sqrt(3.0), std::sqrt(3.0));
        case NoiseLaw::pm1: return rng.sign();
    }
    return 0.0;
}

/// Momentum kick distribution feeding the coupled walk, as a sampler of the
/// velocity increment R(v, kappa) with kappa drawn fresh per step.
template <int D>
using KickModel = std::function<Vec<D>(const Vec<D>& v, Rng& rng)>;

/// Synthetic gradient-type kick with the full energy-coefficient structure
/// of the gradient case: perpendicular deflection a/|v|, unit-variance
/// energy noise s at order |v|^-1 (so D^2 = 1), and deterministic
/// longitudinal terms that set the means <beta2> = <beta3> = 0 and
/// <beta4> = (d-3)/2, i.e. B/D^2 = (d-3)/2 and gamma = (d-2)/6. Expanding
/// dE = v.R + R^2/2 gives
///   dE = s/|v| + (|a_perp|^2 - (d-1))/(2|v|^2) + (s^2 + d - 4)/(2|v|^4) + ...
template <int D>
KickModel<D> synthetic_gradient_kick(NoiseLaw law) {
    return [law](const Vec<D>& v, Rng& rng) -> Vec<D> {
        const Real speed = v.norm();
        const Vec<D> e = v / speed;
        Vec<D> kick = Vec<D>::Zero();
        if constexpr (D >= 2) {
            Vec<D> a;
            for (int i = 0; i < D; ++i) a[i] = draw_noise(rng, law);
            kick += (a - a.dot(e) * e) / speed;
        }
        const Real v2 = speed * speed;
        kick += (draw_noise(rng, law) / v2) * e;
        kick -= (0.5 * (D - 1) / (v2 * speed)) * e;
        kick += (0.5 * (D - 4) / (v2 * v2 * speed)) * e;
        return kick;
    };
}

/// Synthetic non-gradient kick: isotropic O(1) impulse over the speed, so
/// beta0 = e.a is O(1) with zero mean and D'^2 = 1; the longitudinal
/// correction -e/(2|v|^3) sets <beta2> = (d-1)/2 = B', the Theorem-3 ratio.
template <int D>
KickModel<D> synthetic_nongradient_kick(NoiseLaw law) {
    return [law](const Vec<D>& v, Rng& rng) -> Vec<D> {
        const Real speed = v.norm();
        Vec<D> a;
        for (int i = 0; i < D; ++i) a[i] = draw_noise(rng, law);
        return a / speed - (0.5 / (speed * speed * speed)) * (v / speed);
    };
}

/// Exact flat-disk kick at the current speed: kappa = (b, phi, c) drawn per
/// step, zero kick when the impact parameter misses the disk.
template <int D>
KickModel<D> flat_disk_kick(Real y_star, TimeProfile profile, CouplingDraw law) {
    return [y_star, profile, law](const Vec<D>& v, Rng& rng) -> Vec<D> {
        const Vec<D> e = v / v.norm();
        const Vec<D> b = random_impact<D>(rng, e, 0.5);
        Phase phi(rng.uniform(), (profile.torus_dim() == 2) ? rng.uniform() : 0.0);
        const Real c = draw_coupling(rng, law);
        if (b.norm() >= y_star) return Vec<D>::Zero();
        return flat_disk_scatter<D>(v, b, profile, phi, c, y_star).v_out - v;
    };
}

/// Two-term smooth-scatterer kick alpha1/|v| + alpha2/|v|^2 with kappa drawn
/// per step; `scatterer` decides gradient vs non-gradient behavior.
template <int D>
KickModel<D> smooth_expansion_kick(SmoothScatterer<D> scatterer, CouplingDraw law) {
    auto s = std::make_shared<SmoothScatterer<D>>(std::move(scatterer));
    return [s, law](const Vec<D>& v, Rng& rng) -> Vec<D> {
        const Vec<D> e = v / v.norm();
        const Real c = draw_coupling(rng, law);
        ScatterParams<D> kap = ScatterParams<D>::draw(rng, e, s->torus_dim, c);
        return expansion_kick<D>(v, kap, *s);
    };
}

template <int D>
struct WalkState {
    Vec<D> v = Vec<D>::Zero();
    Vec<D> y = Vec<D>::Zero();
    Real tau = 0.0;
    long n = 0;
};

/// One step of the coupled momentum/position walk:
///   v' = v + R(v, kappa),  tau' = tau + eta*/|v'|,  y' = y + eta* e'.
/// Returns false when the velocity degenerates (walk terminated and flagged).
/// A positive speed_floor reflects the post-kick speed (direction kept) and
/// counts the hit: the surrogate kicks are high-speed asymptotics whose
/// counterterms are singular as v -> 0, so walks that linger at the floor
/// are excluded from fits just like the reduced walk's xi floor.
template <int D>
bool full_walk_step(WalkState<D>& st, const KickModel<D>& kick, Real eta_star, Rng& rng,
                    Real speed_floor = 0.0, long* boundary_hits = nullptr) {
    st.v += kick(st.v, rng);
    Real speed = st.v.norm();
    if (speed < 1e-12) return false;
    if (speed_floor > 0.0 && speed < speed_floor) {
        st.v *= (2.0 * speed_floor - speed) / speed;
        speed = st.v.norm();
        if (boundary_hits) ++(*boundary_hits);
    }
    st.tau += eta_star / speed;
    st.y += (eta_star / speed) * st.v;
    st.n += 1;
    return true;
}

struct WalkEnsembleParams {
    std::int64_t n_walkers = 1000;
    Real v0 = 1.0;
    Real eta_star = 1.0;
    long max_steps = 100000;
    Real max_time = 0.0;
    std::uint64_t master_seed = 1;
    int workers = 1;
    Real speed_floor = 0.0;           // 0 disables the reflecting floor
    Real exclusion_fraction = 0.001;  // floor-heavy walks leave the fits
    CheckpointGrid n_grid;
    CheckpointGrid t_grid;
    std::vector<Observable> n_obs;
    std::vector<Observable> t_obs;
};

/// Ensemble of coupled walks with the same deterministic chunked reduction
/// and checkpoint record format as the lattice ensembles.
template <int D>
EnsembleResult run_walk_ensemble(const KickModel<D>& kick, const WalkEnsembleParams& par) {
    auto make_partial = [&]() {
        return detail::SeriesPair{EnsembleSeries(par.n_grid, par.n_obs),
                                  EnsembleSeries(par.t_grid, par.t_obs)};
    };
    auto total = run_chunked(
        par.n_walkers, par.workers, make_partial,
        [&](detail::SeriesPair& out, std::int64_t b, std::int64_t e) {
            CheckpointRecorder<D> rec(par.n_grid, par.t_grid, par.n_obs, par.t_obs);
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(par.master_seed, static_cast<std::uint64_t>(i)));
                WalkState<D> st;
                st.v = par.v0 * random_unit<D>(rng);
                rec.reset(st.v / st.v.norm());
                bool degenerate = false;
                long boundary_hits = 0;
                for (long n = 1; n <= par.max_steps; ++n) {
                    rec.collision(n, st.tau, st.y, st.v);  // incoming state at event n
                    const Real tau_before = st.tau;
                    const Vec<D> y_before = st.y;
                    if (!full_walk_step(st, kick, par.eta_star, rng, par.speed_floor,
                                        &boundary_hits)) {
                        degenerate = true;
                        break;
                    }
                    rec.segment(tau_before, st.tau, y_before, st.v);
                    if (par.max_time > 0.0 && st.tau >= par.max_time) break;
                }
                out.n_series.counters.launched++;
                out.t_series.counters.launched++;
                if (degenerate) {
                    out.n_series.counters.degenerate_velocity++;
                    out.t_series.counters.degenerate_velocity++;
                    continue;
                }
                if (boundary_hits >
                    static_cast<long>(par.exclusion_fraction * static_cast<Real>(st.n))) {
                    out.n_series.counters.boundary_excluded++;
                    out.t_series.counters.boundary_excluded++;
                    continue;
                }
                out.n_series.add_trajectory(rec.n_values(), rec.n_covered());
                out.t_series.add_trajectory(rec.t_values(), rec.t_covered());
            }
        });
    return EnsembleResult{std::move(total.n_series), std::move(total.t_series)};
}

template <int D>
Real default_eta_star() {
    return 1.0;
}

struct ReducedState {
    Real xi = 1.0;
    Real gamma = 0.0;
    long n = 0;
    long boundary_hits = 0;
};

inline Real xi_floor(Real gamma) { return std::max(1.0, 3.0 * std::abs(gamma)); }

/// One step of the reduced one-dimensional walk  xi' = xi + eps + gamma/xi,
/// reflected at the floor (counted; heavy reflectors are excluded from fits).
inline void reduced_xi_step(ReducedState& st, Real eps) {
    Real next = st.xi + eps + st.gamma / st.xi;
    const Real floor = xi_floor(st.gamma);
    if (next <= floor) {
        next = 2.0 * floor - next;
        st.boundary_hits++;
    }
    st.xi = next;
    st.n++;
}

/// Same walk with the non-gradient drift gamma' = (d-1)/4 and xi' = v^2/(2D').
inline void nongradient_reduced_step(ReducedState& st, Real eps) { reduced_xi_step(st, eps); }

/// Idealized squared recursion  xi2' = xi2 + 2 sqrt(max(xi2,0)) eps + 2 gamma + 1,
/// whose mean is exactly xi0^2 + (2 gamma + 1) n for any zero-mean eps.
inline void squared_xi_step(Real& xi2, Real gamma, Real eps) {
    xi2 += 2.0 * std::sqrt(std::max(xi2, 0.0)) * eps + 2.0 * gamma + 1.0;
}

struct ReducedEnsembleParams {
    std::int64_t n_walkers = 1000;
    Real gamma = 0.0;
    Real xi0 = 10.0;
    long n_steps = 100000;
    NoiseLaw law = NoiseLaw::normal;
    std::uint64_t master_seed = 1;
    int workers = 1;
    CheckpointGrid n_grid;
    Real exclusion_fraction = 0.001;  // boundary-heavy walks leave the fits
};

/// Checkpointed moments of the reduced walk (observables xi, xi2).
inline EnsembleSeries run_reduced_ensemble(const ReducedEnsembleParams& par) {
    const std::vector<Observable> obs = {Observable::xi, Observable::xi2};
    struct Partial {
        EnsembleSeries s;
        void merge(const Partial& o) { s.merge(o.s); }
    };
    auto total = run_chunked(
        par.n_walkers, par.workers,
        [&] { return Partial{EnsembleSeries(par.n_grid, obs)}; },
        [&](Partial& out, std::int64_t b, std::int64_t e) {
            const std::size_t npts = par.n_grid.points.size();
            std::vector<Real> values(npts * 2);
            std::vector<char> covered(npts);
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(par.master_seed, static_cast<std::uint64_t>(i)));
                ReducedState st;
                st.xi = par.xi0;
                st.gamma = par.gamma;
                std::fill(covered.begin(), covered.end(), 0);
                std::size_t next = 0;
                for (long n = 1; n <= par.n_steps && next < npts; ++n) {
                    reduced_xi_step(st, draw_noise(rng, par.law));
                    while (next < npts && static_cast<long>(par.n_grid.points[next]) == n) {
                        values[next * 2] = st.xi;
                        values[next * 2 + 1] = st.xi * st.xi;
                        covered[next] = 1;
                        ++next;
                    }
                }
                out.s.counters.launched++;
                if (st.boundary_hits >
                    static_cast<long>(par.exclusion_fraction * static_cast<Real>(st.n))) {
                    out.s.counters.boundary_excluded++;
                    continue;
                }
                out.s.add_trajectory(values, covered);
            }
        });
    return std::move(total.s);
}

/// Terminal samples xi_n^2 / n of the reduced walk; keeps every walk (the
/// floor reflections are part of the limit law being tested).
inline std::vector<Real> reduced_terminal_xi2_over_n(Real gamma, Real xi0, long n_steps,
                                                     std::int64_t n_samples, NoiseLaw law,
                                                     std::uint64_t seed, int workers = 1) {
    struct Partial {
        std::vector<Real> vals;
        void merge(const Partial& o) { vals.insert(vals.end(), o.vals.begin(), o.vals.end()); }
    };
    auto total = run_chunked(
        n_samples, workers, [] { return Partial{}; },
        [&](Partial& out, std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(seed, static_cast<std::uint64_t>(i)));
                ReducedState st;
                st.xi = xi0;
                st.gamma = gamma;
                for (long n = 0; n < n_steps; ++n) reduced_xi_step(st, draw_noise(rng, law));
                out.vals.push_back(st.xi * st.xi / static_cast<Real>(n_steps));
            }
        });
    return total.vals;
}

/// Euler-Maruyama squared Bessel reference dY = 2 sqrt(Y) dB + delta ds with
/// full truncation; returns terminal samples Y(s_max).
inline std::vector<Real> bessel_reference(Real delta, Real y0, Real s_max, long steps,
                                          std::int64_t n_samples, std::uint64_t seed,
                                          int workers = 1) {
    struct Partial {
        std::vector<Real> vals;
        void merge(const Partial& o) { vals.insert(vals.end(), o.vals.begin(), o.vals.end()); }
    };
    const Real ds = s_max / static_cast<Real>(steps);
    const Real sqds = std::sqrt(ds);
    auto total = run_chunked(
        n_samples, workers, [] { return Partial{}; },
        [&](Partial& out, std::int64_t b, std::int64_t e) {
            for (std::int64_t i = b; i < e; ++i) {
                Rng rng(hash_combine(seed ^ 0xb5ad4eceda1ce2a9ULL,
                                     static_cast<std::uint64_t>(i)));
                Real y = y0;
                for (long k = 0; k < steps; ++k)
                    y += 2.0 * std::sqrt(std::max(y, 0.0)) * sqds * rng.normal() + delta * ds;
                out.vals.push_back(y);
            }
        });
    return total.vals;
}

}  // namespace stochacc
