#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "stochacc/common.hpp"
#include "stochacc/rng.hpp"
#include "stochacc/time_profile.hpp"

namespace stochacc {

enum class LatticeKind { chain1d, hexagonal2d };

struct SiteIndex {
    std::int64_t n1 = 0;
    std::int64_t n2 = 0;
    bool operator==(const SiteIndex&) const = default;
};

struct LatticeSpec {
    int dimension = 2;
    LatticeKind kind = LatticeKind::hexagonal2d;
    Real disk_radius = 0.45;   // y_star
    Real horizon_bound = 2.0;  // L, derived

    static LatticeSpec hexagonal(Real y_star) {
        const Real lo = std::sqrt(3.0) / 4.0;
        if (!(y_star > lo && y_star < 0.5))
            throw InvalidRadius("hexagonal lattice requires sqrt(3)/4 < y_star < 1/2");
        return LatticeSpec{2, LatticeKind::hexagonal2d, y_star, 2.0};
    }

    static LatticeSpec chain(Real y_star) {
        if (!(y_star > 0.0 && y_star < 0.5))
            throw InvalidRadius("chain lattice requires 0 < y_star < 1/2");
        return LatticeSpec{1, LatticeKind::chain1d, y_star, 1.0};
    }
};

struct RayHit {
    bool found = false;
    SiteIndex delta;       // hit site relative to the anchor site
    Real distance = 0.0;   // flight distance along the ray
};

/// Hexagonal lattice with unit vectors u=(1,0), v=(1,sqrt 3)/2. Positions are
/// kept relative to an anchor site; lattice indices are exact integers, so
/// precision does not degrade as the trajectory wanders far from the origin.
class HexLattice {
  public:
    static constexpr int dim = 2;

    explicit HexLattice(Real y_star) : y_star_(y_star) {
        const Real reach = 2.0 * 2.0 + y_star + 0.6;  // 2L plus the disk radius
        const std::int64_t span = 6;
        for (std::int64_t a = -span; a <= span; ++a)
            for (std::int64_t b = -span; b <= span; ++b) {
                if (a == 0 && b == 0) continue;
                Vec<2> c = center({a, b});
                if (c.norm() <= reach) cands_.push_back({{a, b}, c, c.norm()});
            }
        std::sort(cands_.begin(), cands_.end(),
                  [](const Cand& x, const Cand& y) { return x.dist < y.dist; });
    }

    Real y_star() const { return y_star_; }
    Real horizon() const { return 2.0; }

    static Vec<2> center(const SiteIndex& s) {
        return Vec<2>(static_cast<Real>(s.n1) + 0.5 * static_cast<Real>(s.n2),
                      0.5 * std::sqrt(3.0) * static_cast<Real>(s.n2));
    }

    /// First disk hit by the ray p + s*dir (p relative to the anchor site,
    /// dir unit). The anchor's own disk is excluded: after any event the
    /// particle moves outward from it and cannot re-enter.
    RayHit next_hit(const Vec<2>& p, const Vec<2>& dir) const {
        RayHit best;
        Real best_s = 2.0 * horizon();
        const Real r2 = y_star_ * y_star_;
        for (const Cand& cand : cands_) {
            if (cand.dist - y_star_ > best_s) break;
            Vec<2> m = p - cand.c;
            Real mu = m.dot(dir);
            if (mu >= 0.0) continue;  // closest approach behind the ray; no entry
            Real disc = mu * mu - (m.squaredNorm() - r2);
            if (disc <= 0.0) continue;
            Real s = -mu - std::sqrt(disc);
            if (s > 1e-12 && s < best_s) {
                best_s = s;
                best.found = true;
                best.delta = cand.delta;
                best.distance = s;
            }
        }
        return best;
    }

  private:
    struct Cand {
        SiteIndex delta;
        Vec<2> c;
        Real dist;
    };

    Real y_star_;
    std::vector<Cand> cands_;
};

/// 1d chain of intervals [N - y_star, N + y_star]. After any event the
/// particle sits on an interval edge moving outward, so the next hit is
/// always the adjacent site at distance 1 - 2*y_star.
class ChainLattice {
  public:
    static constexpr int dim = 1;

    explicit ChainLattice(Real y_star) : y_star_(y_star) {}

    Real y_star() const { return y_star_; }
    Real horizon() const { return 1.0; }

    static Vec<1> center(const SiteIndex& s) { return Vec<1>(static_cast<Real>(s.n1)); }

    RayHit next_hit(const Vec<1>& p, const Vec<1>& dir) const {
        RayHit hit;
        hit.found = true;
        if (dir[0] > 0.0) {
            hit.delta = {1, 0};
            hit.distance = (1.0 - y_star_) - p[0];
        } else {
            hit.delta = {-1, 0};
            hit.distance = p[0] + (1.0 - y_star_);
        }
        if (hit.distance <= 1e-12) hit.found = false;
        return hit;
    }

  private:
    Real y_star_;
};

enum class CouplingLaw { uniform_0_half, fixed_plus, fixed_minus, uniform_sym_half };

struct SiteParams {
    Real c = 0.0;
    Phase phi0 = Phase::Zero();
};

/// Per-site randomness (coupling constant and initial phase), generated
/// lazily from a stateless hash of (master seed, site index). The same site
/// always yields the same values regardless of visit order or threading.
class SiteRandomness {
  public:
    SiteRandomness(std::uint64_t master_seed, CouplingLaw law, int torus_dim)
        : seed_(master_seed), law_(law), m_(torus_dim) {}

    SiteParams params(const SiteIndex& s) const {
        // stateless splitmix chain keyed on (seed, n1, n2); visit-order free
        std::uint64_t x = seed_ ^ (static_cast<std::uint64_t>(s.n1) * 0x9e3779b97f4a7c15ULL) ^
                          (static_cast<std::uint64_t>(s.n2) * 0xc2b2ae3d27d4eb4fULL);
        splitmix64(x);
        SiteParams out;
        const Real u0 = static_cast<Real>(splitmix64(x) >> 11) * 0x1.0p-53;
        switch (law_) {
            case CouplingLaw::uniform_0_half: out.c = 0.5 * u0; break;
            case CouplingLaw::fixed_plus: out.c = 1.0; break;
            case CouplingLaw::fixed_minus: out.c = -1.0; break;
            case CouplingLaw::uniform_sym_half: out.c = u0 - 0.5; break;
        }
        out.phi0[0] = static_cast<Real>(splitmix64(x) >> 11) * 0x1.0p-53;
        out.phi0[1] = (m_ == 2) ? static_cast<Real>(splitmix64(x) >> 11) * 0x1.0p-53 : 0.0;
        return out;
    }

    std::uint64_t seed() const { return seed_; }
    CouplingLaw law() const { return law_; }

  private:
    std::uint64_t seed_;
    CouplingLaw law_;
    int m_;
};

}  // namespace stochacc
