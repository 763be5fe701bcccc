#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "stochacc/analysis.hpp"
#include "stochacc/rng.hpp"

using namespace stochacc;

namespace {

EnsembleSeries synthetic_series(const std::vector<Real>& xs,
                                const std::function<Real(Real)>& law, int n_traj,
                                Real rel_noise, std::uint64_t seed) {
    CheckpointGrid grid;
    grid.kind = GridKind::by_collision_n;
    grid.points = xs;
    EnsembleSeries s(grid, {Observable::v2, Observable::tau});
    Rng rng(seed);
    std::vector<Real> values(xs.size() * 2);
    std::vector<char> covered(xs.size(), 1);
    for (int t = 0; t < n_traj; ++t) {
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const Real base = law(xs[k]);
            values[2 * k] = base * (1.0 + rel_noise * rng.normal());
            values[2 * k + 1] = xs[k];  // tau proxy
        }
        s.add_trajectory(values, covered);
    }
    return s;
}

}  // namespace

TEST_CASE("welford accumulators merge associatively and commutatively") {
    Rng rng(5);
    std::vector<Real> xs;
    for (int i = 0; i < 1000; ++i) xs.push_back(rng.normal() * 3.0 + 1.0);

    Welford whole;
    for (Real x : xs) whole.add(x);

    Welford a, b, c;
    for (int i = 0; i < 300; ++i) a.add(xs[i]);
    for (int i = 300; i < 750; ++i) b.add(xs[i]);
    for (int i = 750; i < 1000; ++i) c.add(xs[i]);

    Welford ab = a;
    ab.merge(b);
    ab.merge(c);
    Welford cb = c;
    cb.merge(b);
    cb.merge(a);

    CHECK(ab.n == whole.n);
    CHECK(ab.mean == doctest::Approx(whole.mean).epsilon(1e-13));
    CHECK(ab.m2 == doctest::Approx(whole.m2).epsilon(1e-12));
    CHECK(cb.mean == doctest::Approx(ab.mean).epsilon(1e-13));
    CHECK(cb.m2 == doctest::Approx(ab.m2).epsilon(1e-12));
}

TEST_CASE("constant observable has zero standard error") {
    Welford w;
    for (int i = 0; i < 100; ++i) w.add(4.2);
    CHECK(w.mean == 4.2);
    CHECK(w.std_error() == 0.0);
}

TEST_CASE("series merge rejects different grids") {
    CheckpointGrid g1 = CheckpointGrid::geometric(GridKind::by_collision_n, 1, 8, 100);
    CheckpointGrid g2 = CheckpointGrid::geometric(GridKind::by_collision_n, 1, 8, 200);
    EnsembleSeries a(g1, {Observable::v2});
    EnsembleSeries b(g2, {Observable::v2});
    CHECK_THROWS_AS(a.merge(b), GridMismatch);
}

TEST_CASE("geometric grids are strictly increasing with exact exponents") {
    auto g = CheckpointGrid::geometric(GridKind::by_collision_n, 1, 8, 100000);
    for (std::size_t i = 1; i < g.points.size(); ++i) CHECK(g.points[i] > g.points[i - 1]);
    // integer rounding of start * 10^(k/8), deduplicated
    CHECK(g.points.front() == 1.0);
    CHECK(g.points.back() == 100000.0);
    auto t = CheckpointGrid::geometric(GridKind::by_time_tau, 1.0, 8, 1000.0);
    const Real r = std::pow(10.0, 1.0 / 8.0);
    for (std::size_t i = 1; i < t.points.size(); ++i)
        CHECK(t.points[i] / t.points[i - 1] == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("exact power law is recovered to machine precision") {
    std::vector<Real> xs;
    for (int k = 0; k <= 32; ++k) xs.push_back(std::round(std::pow(10.0, k / 8.0)));
    auto s = synthetic_series(xs, [](Real x) { return 3.0 * std::pow(x, 0.4); }, 3, 0.0, 1);
    auto fit = fit_exponent(s, Observable::v2, FitWindow::range(xs.front(), xs.back()));
    REQUIRE(fit.ok);
    CHECK(std::abs(fit.exponent - 0.4) < 1e-12);
    CHECK(fit.exponent_stderr < 1e-10);
    CHECK(fit.rms < 1e-12);
}

TEST_CASE("window policy defaults to the last decade and enforces 8 points") {
    std::vector<Real> xs;
    for (int k = 0; k <= 32; ++k) {
        Real x = std::round(std::pow(10.0, k / 8.0));
        if (xs.empty() || x > xs.back()) xs.push_back(x);
    }
    auto s = synthetic_series(xs, [](Real x) { return std::pow(x, 1.5); }, 20, 0.01, 2);
    auto fit = fit_exponent(s, Observable::v2);
    REQUIRE(fit.ok);
    CHECK(fit.x_lo >= xs.back() / 10.0 * 0.99);
    CHECK(fit.exponent == doctest::Approx(1.5).epsilon(0.02));

    // only 5 points: insufficient
    std::vector<Real> small(xs.begin(), xs.begin() + 5);
    auto s2 = synthetic_series(small, [](Real x) { return x; }, 5, 0.0, 3);
    auto bad = fit_exponent(s2, Observable::v2, FitWindow::range(small.front(), small.back()));
    CHECK_FALSE(bad.ok);
    CHECK(bad.status == "insufficient_data");
}

TEST_CASE("crossover detection finds where the local slope settles") {
    std::vector<Real> xs;
    for (int k = 0; k <= 40; ++k) {
        Real x = std::round(std::pow(10.0, k / 8.0));
        if (xs.empty() || x > xs.back()) xs.push_back(x);
    }
    // constant until x*, then a power law: crossover near x* = 100
    auto law = [](Real x) { return (x < 100.0) ? 10.0 : 10.0 * std::pow(x / 100.0, 0.5); };
    auto s = synthetic_series(xs, law, 50, 0.002, 4);
    auto cr = detect_crossover(s, Observable::v2, 0.5, 0.08);
    REQUIRE(cr.found);
    CHECK(cr.n_star >= 50.0);
    CHECK(cr.n_star <= 400.0);
    // tau observable tracks x here, so tau* mirrors n*
    CHECK(cr.tau_star == doctest::Approx(cr.n_star).epsilon(1e-12));

    // pure power law settles from the first checkpoint
    auto pure = synthetic_series(xs, [](Real x) { return std::pow(x, 0.5); }, 10, 0.0, 5);
    auto cr2 = detect_crossover(pure, Observable::v2, 0.5, 0.05);
    REQUIRE(cr2.found);
    CHECK(cr2.n_star == xs.front());

    // wrong asymptote: never settles
    auto cr3 = detect_crossover(pure, Observable::v2, 0.8, 0.05);
    CHECK_FALSE(cr3.found);
    CHECK(cr3.status == "no_crossover");
}

TEST_CASE("local slope of a monotone power law is constant") {
    std::vector<Real> xs;
    for (int k = 0; k <= 24; ++k) xs.push_back(std::pow(10.0, k / 8.0));
    std::vector<FitPoint> pts;
    for (Real x : xs) pts.push_back({x, 2.0 * std::pow(x, -1.0 / 3.0), 0.0});
    auto slopes = local_slopes(pts);
    for (std::size_t k = 2; k + 2 < pts.size(); ++k) {
        REQUIRE(slopes[k].has_value());
        CHECK(*slopes[k] == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
    }
}

TEST_CASE("two-sample KS distance behaves") {
    Rng rng(9);
    std::vector<Real> a, b, c;
    for (int i = 0; i < 20000; ++i) {
        a.push_back(rng.normal());
        b.push_back(rng.normal());
        c.push_back(rng.normal() + 1.0);
    }
    CHECK(ks_distance(a, b) < 0.02);
    CHECK(ks_distance(a, c) > 0.3);
    CHECK(ks_distance(a, a) == 0.0);
}
