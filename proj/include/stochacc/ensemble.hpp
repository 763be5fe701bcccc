#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "stochacc/accumulator.hpp"
#include "stochacc/analysis.hpp"
#include "stochacc/common.hpp"
#include "stochacc/lorentz_gas.hpp"
#include "stochacc/rng.hpp"

namespace stochacc {

/// Records one trajectory's observables on a collision grid and a time grid.
/// Time-grid values are exact: motion is piecewise linear, so checkpoints
/// inside a segment are interpolated without error.
template <int D>
class CheckpointRecorder {
  public:
    CheckpointRecorder(const CheckpointGrid& ngrid, const CheckpointGrid& tgrid,
                       std::vector<Observable> n_obs, std::vector<Observable> t_obs)
        : ngrid_(ngrid), tgrid_(tgrid), n_obs_(std::move(n_obs)), t_obs_(std::move(t_obs)),
          n_values_(ngrid_.points.size() * n_obs_.size()),
          n_covered_(ngrid_.points.size(), 0),
          t_values_(tgrid_.points.size() * t_obs_.size()),
          t_covered_(tgrid_.points.size(), 0) {}

    void reset(const Vec<D>& e0) {
        e0_ = e0;
        next_n_ = 0;
        next_t_ = 0;
        std::fill(n_covered_.begin(), n_covered_.end(), 0);
        std::fill(t_covered_.begin(), t_covered_.end(), 0);
    }

    /// Incoming state at collision number n.
    void collision(long n, Real tau, const Vec<D>& y, const Vec<D>& v) {
        while (next_n_ < ngrid_.points.size() && static_cast<long>(ngrid_.points[next_n_]) < n)
            ++next_n_;  // skipped checkpoints stay uncovered
        while (next_n_ < ngrid_.points.size() &&
               static_cast<long>(ngrid_.points[next_n_]) == n) {
            write(n_values_, n_obs_, next_n_, tau, y, v);
            n_covered_[next_n_] = 1;
            ++next_n_;
        }
    }

    void segment(Real tau0, Real tau1, const Vec<D>& y0, const Vec<D>& v) {
        while (next_t_ < tgrid_.points.size() && tgrid_.points[next_t_] <= tau1) {
            const Real tc = tgrid_.points[next_t_];
            if (tc < tau0) {  // grid point predating this trajectory segment
                ++next_t_;
                continue;
            }
            const Vec<D> y = y0 + (tc - tau0) * v;
            write(t_values_, t_obs_, next_t_, tc, y, v);
            t_covered_[next_t_] = 1;
            ++next_t_;
        }
    }

    void event(const CollisionEvent<D>& ev, const Vec<D>& y_entry) {
        collision(ev.n, ev.tau_entry, y_entry, ev.v_in);
    }

    const std::vector<Real>& n_values() const { return n_values_; }
    const std::vector<char>& n_covered() const { return n_covered_; }
    const std::vector<Real>& t_values() const { return t_values_; }
    const std::vector<char>& t_covered() const { return t_covered_; }

  private:
    void write(std::vector<Real>& dst, const std::vector<Observable>& obs, std::size_t k,
               Real tau, const Vec<D>& y, const Vec<D>& v) {
        const Real vn = v.norm();
        for (std::size_t j = 0; j < obs.size(); ++j) {
            Real x = 0.0;
            switch (obs[j]) {
                case Observable::v2: x = vn * vn; break;
                case Observable::v1: x = vn; break;
                case Observable::vm1: x = 1.0 / vn; break;
                case Observable::vm2: x = 1.0 / (vn * vn); break;
                case Observable::y2: x = y.squaredNorm(); break;
                case Observable::y1: x = y.norm(); break;
                case Observable::tau: x = tau; break;
                case Observable::e_dot_e0: x = v.dot(e0_) / vn; break;
                default: x = 0.0; break;
            }
            dst[k * obs.size() + j] = x;
        }
    }

    CheckpointGrid ngrid_, tgrid_;
    std::vector<Observable> n_obs_, t_obs_;
    std::vector<Real> n_values_;
    std::vector<char> n_covered_;
    std::vector<Real> t_values_;
    std::vector<char> t_covered_;
    Vec<D> e0_ = Vec<D>::Zero();
    std::size_t next_n_ = 0;
    std::size_t next_t_ = 0;
};

struct EnsembleResult {
    EnsembleSeries n_series;
    EnsembleSeries t_series;
};

/// Deterministic chunked parallel run: trajectories are processed in fixed
/// chunks of 32, each chunk accumulated sequentially in index order, and the
/// chunk partials merged in chunk order. Results are therefore identical for
/// any worker count, and every trajectory draws from its own seeded stream.
template <class MakePartial, class RunChunk>
auto run_chunked(std::int64_t n_items, int workers, MakePartial make_partial, RunChunk run_chunk)
    -> decltype(make_partial()) {
    constexpr std::int64_t kChunk = 32;
    const std::int64_t n_chunks = (n_items + kChunk - 1) / kChunk;
    std::vector<decltype(make_partial())> partials;
    partials.reserve(n_chunks);
    for (std::int64_t c = 0; c < n_chunks; ++c) partials.push_back(make_partial());

    std::atomic<std::int64_t> next{0};
    auto body = [&]() {
        while (true) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) break;
            const std::int64_t b = c * kChunk;
            const std::int64_t e = std::min(n_items, b + kChunk);
            run_chunk(partials[c], b, e);
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }
    auto total = make_partial();
    for (auto& p : partials) total.merge(p);
    return total;
}

struct EnsembleParams {
    std::int64_t n_trajectories = 1000;
    Real v0 = 1.0;
    StopRule stop;
    std::uint64_t master_seed = 1;
    int workers = 1;
    CheckpointGrid n_grid;
    CheckpointGrid t_grid;
    std::vector<Observable> n_obs;
    std::vector<Observable> t_obs;
};

namespace detail {

struct SeriesPair {
    EnsembleSeries n_series;
    EnsembleSeries t_series;
    void merge(const SeriesPair& o) {
        n_series.merge(o.n_series);
        t_series.merge(o.t_series);
    }
};

}  // namespace detail

template <class LatticeT>
EnsembleResult run_lattice_ensemble(const LorentzGas<LatticeT>& gas, const EnsembleParams& par) {
    constexpr int D = LatticeT::dim;
    auto make_partial = [&]() {
        return detail::SeriesPair{EnsembleSeries(par.n_grid, par.n_obs),
                                  EnsembleSeries(par.t_grid, par.t_obs)};
    };
    auto total = run_chunked(
        par.n_trajectories, par.workers, make_partial,
        [&](detail::SeriesPair& out, std::int64_t b, std::int64_t e) {
            CheckpointRecorder<D> rec(par.n_grid, par.t_grid, par.n_obs, par.t_obs);
            for (std::int64_t i = b; i < e; ++i) {
                const std::uint64_t tseed =
                    hash_combine(par.master_seed, static_cast<std::uint64_t>(i));
                Rng rng(tseed);
                // In 1d the launch state is binary (side and sign), so the
                // ensemble randomness must come from fresh per-trajectory
                // scatterer realizations; a shared field would collapse the
                // ensemble onto two deterministic orbits. In 2d the random
                // launch point and angle explore one shared field.
                const LorentzGas<LatticeT>* engine = &gas;
                std::optional<LorentzGas<LatticeT>> local;
                if constexpr (D == 1) {
                    ScattererField<LatticeT> f = gas.field();
                    f.sites = SiteRandomness(hash_combine(tseed, 0x1d5eedULL),
                                             f.sites.law(), f.profile.torus_dim());
                    local.emplace(std::move(f), gas.max_internal_bounces());
                    engine = &*local;
                }
                ParticleState<D> init = engine->sample_initial(par.v0, rng);
                rec.reset(init.v / init.v.norm());
                TrajectorySummary<D> sum = engine->run(init, par.stop, rec);
                out.n_series.counters.launched++;
                out.t_series.counters.launched++;
                if (sum.trapped_unresolved) {
                    out.n_series.counters.trapped_unresolved++;
                    out.t_series.counters.trapped_unresolved++;
                    if (sum.degenerate_velocity) {
                        out.n_series.counters.degenerate_velocity++;
                        out.t_series.counters.degenerate_velocity++;
                    }
                    continue;
                }
                out.n_series.add_trajectory(rec.n_values(), rec.n_covered());
                out.t_series.add_trajectory(rec.t_values(), rec.t_covered());
            }
        });
    return EnsembleResult{std::move(total.n_series), std::move(total.t_series)};
}

}  // namespace stochacc
