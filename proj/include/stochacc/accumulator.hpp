#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stochacc/common.hpp"

namespace stochacc {

/// Single-pass mean/variance (Welford) with an order-stable parallel merge.
struct Welford {
    std::int64_t n = 0;
    Real mean = 0.0;
    Real m2 = 0.0;

    void add(Real x) {
        ++n;
        Real d = x - mean;
        mean += d / static_cast<Real>(n);
        m2 += d * (x - mean);
    }

    void merge(const Welford& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const Real d = o.mean - mean;
        const std::int64_t nt = n + o.n;
        mean += d * static_cast<Real>(o.n) / static_cast<Real>(nt);
        m2 += o.m2 + d * d * static_cast<Real>(n) * static_cast<Real>(o.n) / static_cast<Real>(nt);
        n = nt;
    }

    Real variance() const { return (n > 1) ? m2 / static_cast<Real>(n - 1) : 0.0; }
    Real std_error() const { return (n > 1) ? std::sqrt(variance() / static_cast<Real>(n)) : 0.0; }
};

enum class GridKind { by_collision_n, by_time_tau };

/// Geometrically spaced checkpoints: start * r^k with r = 10^(1/per_decade).
/// Collision grids are rounded to unique integers.
struct CheckpointGrid {
    GridKind kind = GridKind::by_collision_n;
    std::vector<Real> points;

    static CheckpointGrid geometric(GridKind kind, Real start, int per_decade, Real max_value) {
        CheckpointGrid g;
        g.kind = kind;
        const Real r = std::pow(10.0, 1.0 / per_decade);
        Real last = -1.0;
        for (int k = 0;; ++k) {
            Real x = start * std::pow(r, k);
            if (x > max_value * (1.0 + 1e-12)) break;
            if (kind == GridKind::by_collision_n) {
                x = std::round(x);
                if (x <= last) continue;
            }
            g.points.push_back(x);
            last = x;
            if (k > 100000) break;
        }
        return g;
    }

    bool operator==(const CheckpointGrid&) const = default;
};

enum class Observable { v2, v1, vm1, vm2, y2, y1, tau, e_dot_e0, xi, xi2 };

inline const char* observable_name(Observable o) {
    switch (o) {
        case Observable::v2: return "v2";
        case Observable::v1: return "v1";
        case Observable::vm1: return "vm1";
        case Observable::vm2: return "vm2";
        case Observable::y2: return "y2";
        case Observable::y1: return "y1";
        case Observable::tau: return "tau";
        case Observable::e_dot_e0: return "e_dot_e0";
        case Observable::xi: return "xi";
        case Observable::xi2: return "xi2";
    }
    return "?";
}

inline bool observable_from_name(const std::string& s, Observable& out) {
    for (Observable o : {Observable::v2, Observable::v1, Observable::vm1, Observable::vm2,
                         Observable::y2, Observable::y1, Observable::tau, Observable::e_dot_e0,
                         Observable::xi, Observable::xi2}) {
        if (s == observable_name(o)) {
            out = o;
            return true;
        }
    }
    return false;
}

struct ExclusionCounters {
    std::int64_t launched = 0;
    std::int64_t trapped_unresolved = 0;
    std::int64_t degenerate_velocity = 0;
    std::int64_t boundary_excluded = 0;  // reduced walks hitting the xi floor too often

    std::int64_t included() const {
        return launched - trapped_unresolved - degenerate_velocity - boundary_excluded;
    }

    void merge(const ExclusionCounters& o) {
        launched += o.launched;
        trapped_unresolved += o.trapped_unresolved;
        degenerate_velocity += o.degenerate_velocity;
        boundary_excluded += o.boundary_excluded;
    }
};

/// Checkpointed ensemble moments: one Welford cell per (grid point, observable),
/// fed by independent trajectories only, plus exclusion bookkeeping. Merging
/// partial accumulators is associative and commutative up to round-off.
class EnsembleSeries {
  public:
    EnsembleSeries() = default;
    EnsembleSeries(CheckpointGrid grid, std::vector<Observable> observables)
        : grid_(std::move(grid)), obs_(std::move(observables)),
          cells_(grid_.points.size() * obs_.size()) {}

    const CheckpointGrid& grid() const { return grid_; }
    const std::vector<Observable>& observables() const { return obs_; }

    int obs_index(Observable o) const {
        for (std::size_t i = 0; i < obs_.size(); ++i)
            if (obs_[i] == o) return static_cast<int>(i);
        return -1;
    }

    Welford& cell(std::size_t point, std::size_t obs) { return cells_[point * obs_.size() + obs]; }
    const Welford& cell(std::size_t point, std::size_t obs) const {
        return cells_[point * obs_.size() + obs];
    }

    std::size_t n_points() const { return grid_.points.size(); }

    /// Add one trajectory's checkpoint values. `values` is point-major with
    /// obs stride; `covered` marks checkpoints the trajectory reached.
    void add_trajectory(const std::vector<Real>& values, const std::vector<char>& covered) {
        for (std::size_t k = 0; k < n_points(); ++k) {
            if (!covered[k]) continue;
            for (std::size_t j = 0; j < obs_.size(); ++j)
                cell(k, j).add(values[k * obs_.size() + j]);
        }
    }

    void merge(const EnsembleSeries& o) {
        if (!(grid_ == o.grid_) || obs_ != o.obs_)
            throw GridMismatch("cannot merge ensemble series on different grids");
        for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].merge(o.cells_[i]);
        counters.merge(o.counters);
    }

    ExclusionCounters counters;

  private:
    CheckpointGrid grid_;
    std::vector<Observable> obs_;
    std::vector<Welford> cells_;
};

}  // namespace stochacc
