#pragma once

#include <cmath>
#include <cstdint>

#include "stochacc/common.hpp"
#include "stochacc/lattice.hpp"
#include "stochacc/rng.hpp"
#include "stochacc/time_profile.hpp"

namespace stochacc {

template <int D>
struct ParticleState {
    Vec<D> y = Vec<D>::Zero();
    Vec<D> v = Vec<D>::Zero();
    Real tau = 0.0;
};

enum class EventKind { refract_through, reflect_off, trapped_then_escaped, trapped_unresolved };

template <int D>
struct CollisionEvent {
    long n = 0;
    SiteIndex site;
    Real tau_entry = 0.0;
    Real tau_exit = 0.0;
    Vec<D> v_in = Vec<D>::Zero();
    Vec<D> v_out = Vec<D>::Zero();
    EventKind kind = EventKind::refract_through;
    int bounces = 0;
    Vec<D> b = Vec<D>::Zero();  // impact parameter, perpendicular to v_in
    Real delta_e = 0.0;
    // diagnostics used by the exactness checks
    Vec<D> entry_point = Vec<D>::Zero();  // site-local
    Vec<D> exit_point = Vec<D>::Zero();
    Real pot_entry = 0.0;  // potential height at the entry crossing instant
    Real pot_exit = 0.0;   // and at the exit crossing instant
};

template <int D>
struct CrossResult {
    bool refracted = false;
    Vec<D> v_out = Vec<D>::Zero();
};

/// Step-potential crossing: the tangential velocity component is preserved
/// exactly, the normal component n satisfies n_out^2 = n_in^2 - 2*dV with the
/// crossing direction kept, and total reflection (normal negated) is the
/// fallback when n_in^2 <= 2*dV. dV is the potential step crossed, positive
/// when stepping up. The grazing tie n_in^2 == 2*dV counts as reflection.
template <int D>
CrossResult<D> boundary_cross(const Vec<D>& v_in, const Vec<D>& normal, Real dV) {
    CrossResult<D> out;
    if (dV == 0.0) {  // keep the zero-step identity bit-exact
        out.refracted = true;
        out.v_out = v_in;
        return out;
    }
    const Real vn = v_in.dot(normal);
    const Real disc = vn * vn - 2.0 * dV;
    if (disc > 0.0) {
        out.refracted = true;
        out.v_out = v_in + (std::copysign(std::sqrt(disc), vn) - vn) * normal;
    } else {
        out.refracted = false;
        out.v_out = v_in - 2.0 * vn * normal;
    }
    return out;
}

template <class LatticeT>
struct ScattererField {
    LatticeT lattice;
    TimeProfile profile;
    SiteRandomness sites;

    static constexpr int dim = LatticeT::dim;

    Real potential(const SiteParams& sp, const PhaseClock& clock) const {
        return sp.c * profile.eval(clock.at(sp.phi0));
    }
};

inline ScattererField<HexLattice> build_hex_field(Real y_star, TimeProfile profile,
                                                   CouplingLaw law, std::uint64_t master_seed) {
    LatticeSpec::hexagonal(y_star);  // validates the radius
    return {HexLattice(y_star), profile, SiteRandomness(master_seed, law, profile.torus_dim())};
}

inline ScattererField<ChainLattice> build_chain_field(Real y_star, TimeProfile profile,
                                                       CouplingLaw law, std::uint64_t master_seed) {
    LatticeSpec::chain(y_star);
    return {ChainLattice(y_star), profile, SiteRandomness(master_seed, law, profile.torus_dim())};
}

template <int D>
struct FlatDiskKick {
    Vec<D> v_out = Vec<D>::Zero();
    Real dtau = 0.0;  // time spent inside the disk
    EventKind kind = EventKind::refract_through;
    int bounces = 0;
};

/// One scattering off a single flat disk of radius y_star, decoupled from any
/// lattice: the particle arrives with velocity v_in and impact parameter b
/// (perpendicular to v_in, |b| < y_star) while the disk sits at phase
/// phi_entry. Same boundary physics as the lattice engine: refraction or
/// reflection at entry, constant-speed chords, exit re-attempted at each
/// boundary arrival while the phase advances.
template <int D>
FlatDiskKick<D> flat_disk_scatter(const Vec<D>& v_in, const Vec<D>& b, const TimeProfile& profile,
                                  const Phase& phi_entry, Real c, Real y_star,
                                  int max_bounces = 10000) {
    FlatDiskKick<D> out;
    const Real speed = v_in.norm();
    const Vec<D> e = v_in / speed;
    const Real b2 = b.squaredNorm();
    Vec<D> p = b - std::sqrt(std::max(y_star * y_star - b2, 0.0)) * e;

    auto height = [&](Real t) {
        Phase ph = phi_entry + profile.omega() * t;
        return c * profile.eval(Phase(TorusPhase::wrap(ph[0]), TorusPhase::wrap(ph[1])));
    };

    Vec<D> normal = p / y_star;
    CrossResult<D> in = boundary_cross<D>(v_in, normal, height(0.0));
    if (!in.refracted) {
        out.v_out = in.v_out;
        out.kind = EventKind::reflect_off;
        return out;
    }
    Vec<D> w = in.v_out;
    Real t = 0.0;
    int bounces = 0;
    while (true) {
        const Real dt = -2.0 * p.dot(w) / w.squaredNorm();
        if (!(dt > 1e-15)) break;
        t += dt;
        p += dt * w;
        p *= y_star / p.norm();
        normal = p / y_star;
        const Real v_now = height(t);
        const Real wn = w.dot(normal);
        const Real disc = wn * wn + 2.0 * v_now;
        if (disc > 0.0) {
            out.v_out = w + (std::sqrt(disc) - wn) * normal;
            out.dtau = t;
            out.kind = (bounces == 0) ? EventKind::refract_through
                                      : EventKind::trapped_then_escaped;
            out.bounces = bounces;
            return out;
        }
        w -= 2.0 * wn * normal;
        if (++bounces > max_bounces) break;
    }
    // unresolved trap: hand back the last interior velocity, energy-neutral
    out.v_out = w;
    out.dtau = t;
    out.kind = EventKind::trapped_unresolved;
    out.bounces = bounces;
    return out;
}

template <int D>
struct TrajectorySummary {
    ParticleState<D> final_state;
    long collisions = 0;
    long reflections = 0;
    long trapped_escapes = 0;
    long internal_bounces = 0;
    bool trapped_unresolved = false;
    bool degenerate_velocity = false;
};

struct StopRule {
    long max_collisions = 0;  // 0 = unbounded
    Real max_time = 0.0;      // 0 = unbounded
};

/// Observer that ignores everything; the expected interface is
///   segment(tau0, tau1, y0_global, v)   piecewise-linear motion piece
///   event(ev, y_entry_global)           one completed collision
template <int D>
struct NullObserver {
    void segment(Real, Real, const Vec<D>&, const Vec<D>&) {}
    void event(const CollisionEvent<D>&, const Vec<D>&) {}
};

/// Event-driven dynamics in a lattice of flat circular scatterers whose
/// heights oscillate in time. The particle moves on straight segments
/// everywhere: free flight outside the disks and constant-speed chords
/// inside (the potential is spatially flat there), with all energy exchange
/// happening at boundary crossings evaluated at the crossing instant.
template <class LatticeT>
class LorentzGas {
  public:
    static constexpr int D = LatticeT::dim;

    explicit LorentzGas(ScattererField<LatticeT> field, int max_internal_bounces = 10000)
        : field_(std::move(field)), max_bounces_(max_internal_bounces) {}

    const ScattererField<LatticeT>& field() const { return field_; }
    int max_internal_bounces() const { return max_bounces_; }

    /// Initial condition on the boundary of the origin scatterer with an
    /// outward velocity direction drawn uniformly.
    ParticleState<D> sample_initial(Real v0, Rng& rng) const {
        const Real ys = field_.lattice.y_star();
        ParticleState<D> st;
        st.tau = 0.0;
        if constexpr (D == 1) {
            Real side = rng.sign();
            st.y = Vec<1>(side * ys);
            st.v = Vec<1>(side * v0);
        } else {
            Real th = rng.uniform(0.0, kTwoPi);
            Vec<2> n(std::cos(th), std::sin(th));
            st.y = ys * n;
            Real psi = rng.uniform(-0.5 * kPi, 0.5 * kPi);
            Vec<2> t(-n[1], n[0]);
            st.v = v0 * (std::cos(psi) * n + std::sin(psi) * t);
        }
        return st;
    }

    /// First disk hit of the free ray from a state anchored at `anchor`.
    /// Exposed for the geometry tests; run() uses the same code path.
    RayHit next_hit_local(const Vec<D>& p, const Vec<D>& v) const {
        return field_.lattice.next_hit(p, v / v.norm());
    }

    template <class Observer>
    TrajectorySummary<D> run(const ParticleState<D>& init, const StopRule& stop,
                             Observer& obs) const {
        const Real ys = field_.lattice.y_star();
        TrajectorySummary<D> out;

        SiteIndex anchor{0, 0};
        Vec<D> p = init.y;  // local to anchor; valid for states from sample_initial
        Vec<D> v = init.v;
        Real tau = init.tau;
        PhaseClock clock(field_.profile);
        clock.advance(tau);

        long n = 0;
        while (true) {
            if (stop.max_collisions > 0 && n >= stop.max_collisions) break;
            if (stop.max_time > 0.0 && tau >= stop.max_time) break;

            const Real speed = v.norm();
            if (speed < 1e-12) {
                out.trapped_unresolved = true;
                out.degenerate_velocity = true;
                break;
            }
            const Vec<D> dir = v / speed;
            RayHit hit = field_.lattice.next_hit(p, dir);
            if (!hit.found)
                throw HorizonViolation("no disk hit within twice the horizon bound");

            // free flight to the entry point
            const Real dtau = hit.distance / speed;
            obs.segment(tau, tau + dtau, global(anchor, p), v);
            tau += dtau;
            clock.advance(dtau);
            anchor = SiteIndex{anchor.n1 + hit.delta.n1, anchor.n2 + hit.delta.n2};
            p = p + hit.distance * dir - LatticeT::center(hit.delta);
            p *= ys / p.norm();  // snap to the circle; kills drift from chord stepping

            if (stop.max_time > 0.0 && tau >= stop.max_time) break;

            CollisionEvent<D> ev;
            ev.n = ++n;
            ev.site = anchor;
            ev.tau_entry = tau;
            ev.v_in = v;
            ev.entry_point = p;
            ev.b = p - p.dot(dir) * dir;

            const SiteParams sp = field_.sites.params(anchor);
            const Real v_entry_pot = field_.potential(sp, clock);
            ev.pot_entry = v_entry_pot;

            Vec<D> normal = p / ys;
            CrossResult<D> in = boundary_cross<D>(v, normal, v_entry_pot);
            if (!in.refracted) {
                ev.kind = EventKind::reflect_off;
                ev.tau_exit = tau;
                ev.exit_point = p;
                ev.pot_exit = v_entry_pot;
                ev.v_out = in.v_out;
                ev.delta_e = 0.5 * (in.v_out.squaredNorm() - v.squaredNorm());
                v = in.v_out;
                out.reflections++;
                obs.event(ev, global(anchor, p));
                continue;
            }

            // inside: iterate constant-speed chords until the exit crossing
            // succeeds (the well may have deepened while the particle is in)
            Vec<D> w = in.v_out;
            int bounces = 0;
            bool resolved = false;
            while (true) {
                const Real w2 = w.squaredNorm();
                const Real t = -2.0 * p.dot(w) / w2;
                if (!(t > 1e-15)) break;  // degenerate tangential chord
                obs.segment(tau, tau + t, global(anchor, p), w);
                tau += t;
                clock.advance(t);
                p += t * w;
                p *= ys / p.norm();

                const Real v_now = field_.potential(sp, clock);
                normal = p / ys;
                const Real wn = w.dot(normal);
                const Real disc = wn * wn + 2.0 * v_now;
                if (disc > 0.0) {
                    ev.kind = (bounces == 0) ? EventKind::refract_through
                                             : EventKind::trapped_then_escaped;
                    ev.bounces = bounces;
                    ev.tau_exit = tau;
                    ev.exit_point = p;
                    ev.pot_exit = v_now;
                    ev.v_out = w + (std::sqrt(disc) - wn) * normal;
                    resolved = true;
                    break;
                }
                w -= 2.0 * wn * normal;
                if (++bounces > max_bounces_) break;
            }

            if (!resolved) {
                ev.kind = EventKind::trapped_unresolved;
                ev.bounces = bounces;
                ev.tau_exit = tau;
                ev.exit_point = p;
                ev.v_out = w;
                out.trapped_unresolved = true;
                obs.event(ev, global(anchor, ev.entry_point));
                break;
            }

            ev.delta_e = 0.5 * (ev.v_out.squaredNorm() - ev.v_in.squaredNorm());
            v = ev.v_out;
            out.internal_bounces += ev.bounces;
            if (ev.kind == EventKind::trapped_then_escaped) out.trapped_escapes++;
            obs.event(ev, global(anchor, ev.entry_point));
        }

        out.collisions = n;
        out.final_state = ParticleState<D>{global(anchor, p), v, tau};
        return out;
    }

    TrajectorySummary<D> run(const ParticleState<D>& init, const StopRule& stop) const {
        NullObserver<D> obs;
        return run(init, stop, obs);
    }

    static Vec<D> global(const SiteIndex& anchor, const Vec<D>& p) {
        return LatticeT::center(anchor) + p;
    }

  private:
    ScattererField<LatticeT> field_;
    int max_bounces_;
};

}  // namespace stochacc
