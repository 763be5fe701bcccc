#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stochacc/analysis.hpp"
#include "stochacc/ensemble.hpp"
#include "stochacc/lorentz_gas.hpp"

using namespace stochacc;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

template <int D>
struct EventLog {
    std::vector<CollisionEvent<D>> events;
    std::vector<Vec<D>> entry_global;
    Real last_t1 = 0.0;
    Vec<D> last_y1 = Vec<D>::Zero();
    bool first = true;
    bool contiguous = true;

    void segment(Real t0, Real t1, const Vec<D>& y0, const Vec<D>& v) {
        if (!first) {
            if (std::abs(t0 - last_t1) > 1e-9) contiguous = false;
            if ((y0 - last_y1).norm() > 1e-9) contiguous = false;
        }
        first = false;
        last_t1 = t1;
        last_y1 = y0 + (t1 - t0) * v;
    }
    void event(const CollisionEvent<D>& ev, const Vec<D>& y) {
        events.push_back(ev);
        entry_global.push_back(y);
    }
};

}  // namespace

TEST_CASE("lattice construction validates the disk radius") {
    CHECK_THROWS_AS(LatticeSpec::hexagonal(0.40), InvalidRadius);  // below sqrt(3)/4
    CHECK_THROWS_AS(LatticeSpec::hexagonal(0.50), InvalidRadius);
    CHECK_NOTHROW(LatticeSpec::hexagonal(0.45));
    CHECK_THROWS_AS(LatticeSpec::chain(0.5), InvalidRadius);
    CHECK_NOTHROW(LatticeSpec::chain(0.25));
}

TEST_CASE("per-site randomness is reproducible and respects the coupling law") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 7);
    auto a = field.sites.params({0, 0});
    auto b = field.sites.params({0, 0});
    CHECK(a.c == b.c);
    CHECK(a.phi0[0] == b.phi0[0]);
    CHECK(a.c >= 0.0);
    CHECK(a.c <= 0.5);
    auto c = field.sites.params({123456789, -987654321});
    CHECK(c.c >= 0.0);
    CHECK(c.c <= 0.5);

    auto fixed = build_chain_field(0.25, TimeProfile::f1(), CouplingLaw::fixed_plus, 1);
    for (std::int64_t i : {-5, 0, 17})
        CHECK(fixed.sites.params({i, 0}).c == 1.0);
}

TEST_CASE("sample_initial puts the particle on the origin disk moving outward") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 7);
    LorentzGas<HexLattice> gas(field);
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        auto st = gas.sample_initial(1.0, rng);
        CHECK(rel_err(st.y.norm(), 0.45) < 1e-14);
        CHECK(st.v.dot(st.y / st.y.norm()) >= 0.0);
        CHECK(rel_err(st.v.norm(), 1.0) < 1e-14);
        CHECK(st.tau == 0.0);
    }

    auto chain = build_chain_field(0.25, TimeProfile::f1(), CouplingLaw::fixed_plus, 1);
    LorentzGas<ChainLattice> gas1(chain);
    bool seen_left = false, seen_right = false;
    for (int i = 0; i < 64; ++i) {
        auto st = gas1.sample_initial(2.0, rng);
        if (st.y[0] > 0) {
            CHECK(st.y[0] == doctest::Approx(0.25));
            CHECK(st.v[0] == doctest::Approx(2.0));
            seen_right = true;
        } else {
            CHECK(st.y[0] == doctest::Approx(-0.25));
            CHECK(st.v[0] == doctest::Approx(-2.0));
            seen_left = true;
        }
    }
    CHECK(seen_left);
    CHECK(seen_right);
}

TEST_CASE("initial outward direction is uniform on the half-circle (chi-square)") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 7);
    LorentzGas<HexLattice> gas(field);
    Rng rng(2024);
    const int bins = 16, n = 100000;
    std::vector<int> hist(bins, 0);
    for (int i = 0; i < n; ++i) {
        auto st = gas.sample_initial(1.0, rng);
        Vec<2> nh = st.y / st.y.norm();
        Vec<2> th(-nh[1], nh[0]);
        double psi = std::atan2(st.v.dot(th), st.v.dot(nh));  // in (-pi/2, pi/2)
        int k = static_cast<int>((psi / kPi + 0.5) * bins);
        k = std::clamp(k, 0, bins - 1);
        hist[k]++;
    }
    double chi2 = 0.0;
    const double expect = static_cast<double>(n) / bins;
    for (int k = 0; k < bins; ++k) chi2 += (hist[k] - expect) * (hist[k] - expect) / expect;
    CHECK(chi2 < 50.0);  // chi^2_15 99.9% quantile is 37.7
}

TEST_CASE("ray-disk search reproduces the closed-form first hit") {
    HexLattice hex(0.45);
    RayHit hit = hex.next_hit(Vec<2>(0.5, 0.0), Vec<2>(1.0, 0.0));
    REQUIRE(hit.found);
    CHECK(hit.delta.n1 == 1);
    CHECK(hit.delta.n2 == 0);
    CHECK(hit.distance == doctest::Approx(0.05).epsilon(1e-12));

    ChainLattice chain(0.25);
    RayHit h1 = chain.next_hit(Vec<1>(0.25), Vec<1>(1.0));
    REQUIRE(h1.found);
    CHECK(h1.delta.n1 == 1);
    CHECK(h1.distance == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("reversed rays hit the point-symmetric site") {
    HexLattice hex(0.46);
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        // random outside point near the origin disk and random direction
        double th = rng.uniform(0.0, kTwoPi);
        Vec<2> p = 0.46 * Vec<2>(std::cos(th), std::sin(th));
        Vec<2> d = random_unit<2>(rng);
        if (p.dot(d) < 0) d = -d;  // outward, as after an event
        RayHit a = hex.next_hit(p, d);
        RayHit b = hex.next_hit(-p, -d);
        REQUIRE(a.found == b.found);
        if (a.found) {
            CHECK(a.delta.n1 == -b.delta.n1);
            CHECK(a.delta.n2 == -b.delta.n2);
            CHECK(a.distance == doctest::Approx(b.distance).epsilon(1e-12));
        }
    }
}

TEST_CASE("boundary_cross: refraction, total reflection, zero step") {
    // head-on onto a step of 1.5 at speed 2: 4 - 2*1.5 = 1
    auto r = boundary_cross<2>(Vec<2>(2.0, 0.0), Vec<2>(-1.0, 0.0), 1.5);
    CHECK(r.refracted);
    CHECK(r.v_out[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.v_out[1] == 0.0);

    // head-on onto a step of 1 at speed 1: total reflection
    auto t = boundary_cross<2>(Vec<2>(1.0, 0.0), Vec<2>(-1.0, 0.0), 1.0);
    CHECK_FALSE(t.refracted);
    CHECK(t.v_out[0] == doctest::Approx(-1.0).epsilon(1e-14));

    // zero step is the exact identity
    Vec<2> v(2.0, 1.0);
    auto z = boundary_cross<2>(v, Vec<2>(-1.0, 0.0), 0.0);
    CHECK(z.refracted);
    CHECK(z.v_out[0] == v[0]);
    CHECK(z.v_out[1] == v[1]);

    // grazing tie n_in^2 == 2 dV counts as reflection
    auto g = boundary_cross<2>(Vec<2>(1.0, 0.5), Vec<2>(-1.0, 0.0), 0.5);
    CHECK_FALSE(g.refracted);
}

TEST_CASE("boundary_cross properties: tangential preservation, energy, time reversal") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        Vec<2> v = 3.0 * Vec<2>(rng.normal(), rng.normal());
        Vec<2> n = random_unit<2>(rng);
        double dV = rng.uniform(-1.0, 1.0);
        auto r = boundary_cross<2>(v, n, dV);
        Vec<2> t(-n[1], n[0]);
        CHECK(rel_err(r.v_out.dot(t), v.dot(t)) < 1e-13);  // tangential exact
        if (r.refracted) {
            // instantaneous energy conservation across the step
            CHECK(rel_err(0.5 * r.v_out.squaredNorm() + dV, 0.5 * v.squaredNorm()) < 1e-12);
            // reverse crossing recovers the incoming velocity
            double vn = v.dot(n);
            if (std::abs(vn * vn - 2 * dV) > 1e-6) {
                auto back = boundary_cross<2>(-r.v_out, n, -dV);
                CHECK(back.refracted);
                CHECK((back.v_out + v).norm() < 1e-11 * (1.0 + v.norm()));
            }
        } else {
            CHECK(rel_err(r.v_out.norm(), v.norm()) < 1e-13);
        }
    }
}

namespace {

/// RK4 oracle for a mollified flat disk: V(y,t) = height(t) * chi_w(|y-c|)
/// with a smooth step chi_w. As w -> 0 this converges to the event-driven
/// step-crossing dynamics.
struct MollifiedDisk {
    Vec<2> center;
    double y_star, w;
    std::function<double(double)> height;

    Vec<2> force(const Vec<2>& y, double t) const {
        Vec<2> d = y - center;
        double r = d.norm();
        if (r < 1e-12) return Vec<2>::Zero();
        double s = (r - y_star) / w;
        double sech = 1.0 / std::cosh(s);
        double dchi = -0.5 * sech * sech / w;  // d/dr of 0.5*(1 - tanh(s))
        return -height(t) * dchi * (d / r);
    }
};

double mollified_exit_speed2(const MollifiedDisk& disk, Vec<2> y, Vec<2> v, double t_end,
                             double h) {
    double t = 0.0;
    while (t < t_end) {
        auto f = [&](const Vec<2>& yy, double tt) { return disk.force(yy, tt); };
        Vec<2> k1v = f(y, t), k1y = v;
        Vec<2> k2v = f(y + 0.5 * h * k1y, t + 0.5 * h), k2y = v + 0.5 * h * k1v;
        Vec<2> k3v = f(y + 0.5 * h * k2y, t + 0.5 * h), k3y = v + 0.5 * h * k2v;
        Vec<2> k4v = f(y + h * k3y, t + h), k4y = v + h * k3v;
        y += h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y);
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
        t += h;
    }
    return v.squaredNorm();
}

}  // namespace

TEST_CASE("diametral traversal energy change matches the mollified-disk oracle") {
    // Arrange a disk at (1,0) whose height is 0.3 when the particle enters and
    // 0.1 when it leaves; then |v_out|^2 = 4 + 2*(0.1 - 0.3) = 3.6.
    const double ys = 0.45;
    const double tau_entry = 0.05 / 2.0;
    const double w_in = std::sqrt(4.0 - 2.0 * 0.3);
    const double t_inside = 2.0 * ys / w_in;
    const double tau_exit = tau_entry + t_inside;

    SiteRandomness sites(42, CouplingLaw::fixed_plus, 1);
    const double phi_e = TorusPhase::wrap(sites.params({1, 0}).phi0[0] + tau_entry);
    const double phi_x = TorusPhase::wrap(sites.params({1, 0}).phi0[0] + tau_exit);
    const double sig = std::sin(kTwoPi * (phi_x - phi_e));
    REQUIRE(std::abs(sig) > 1e-3);
    const double k = -0.2 / sig;
    auto f = [=](Phase p) { return 0.3 + k * std::sin(kTwoPi * (p[0] - phi_e)); };
    auto df = [=](Phase p) { return k * kTwoPi * std::cos(kTwoPi * (p[0] - phi_e)); };
    auto profile = TimeProfile::custom(1, Phase(1.0, 0.0), f, df);

    auto field = build_hex_field(ys, profile, CouplingLaw::fixed_plus, 42);
    LorentzGas<HexLattice> gas(field);

    ParticleState<2> init{Vec<2>(0.5, 0.0), Vec<2>(2.0, 0.0), 0.0};
    EventLog<2> log;
    gas.run(init, {1, 0.0}, log);
    REQUIRE(log.events.size() == 1);
    const auto& ev = log.events[0];
    CHECK(ev.kind == EventKind::refract_through);
    CHECK(rel_err(ev.pot_entry, 0.3) < 1e-10);
    CHECK(rel_err(ev.pot_exit, 0.1) < 1e-10);
    CHECK(rel_err(ev.v_out.squaredNorm(), 3.6) < 1e-10);
    CHECK(rel_err(ev.delta_e, -0.2) < 1e-9);

    // independent oracle: integrate the mollified potential and tighten w
    const double phi0 = sites.params({1, 0}).phi0[0];
    MollifiedDisk disk{Vec<2>(1.0, 0.0), ys, 0.0,
                       [&](double t) { return f(Phase(TorusPhase::wrap(phi0 + t), 0.0)); }};
    double prev_err = 1e9;
    for (double w : {0.02, 0.01, 0.005}) {
        disk.w = w;
        double v2 = mollified_exit_speed2(disk, Vec<2>(0.5, 0.0), Vec<2>(2.0, 0.0), 1.0,
                                          2.5e-4 * w / 0.02);
        double err = std::abs(v2 - 3.6);
        CHECK(err < prev_err * 0.75);  // roughly first-order in the mollification width
        prev_err = err;
    }
    CHECK(prev_err < 0.02);
}

TEST_CASE("barrier higher than the normal kinetic energy reflects specularly") {
    // constant profile, c=+1: static barrier of height 2; speed 1 cannot enter
    auto field = build_hex_field(0.45, TimeProfile::constant(2.0), CouplingLaw::fixed_plus, 3);
    LorentzGas<HexLattice> gas(field);
    ParticleState<2> init{Vec<2>(0.5, 0.02), Vec<2>(1.0, 0.0), 0.0};
    EventLog<2> log;
    gas.run(init, {1, 0.0}, log);
    REQUIRE(log.events.size() == 1);
    const auto& ev = log.events[0];
    CHECK(ev.kind == EventKind::reflect_off);
    CHECK(rel_err(ev.v_out.norm(), ev.v_in.norm()) < 1e-14);
    CHECK(ev.tau_exit == ev.tau_entry);
    // specular: tangential kept, normal flipped
    Vec<2> n = ev.entry_point / ev.entry_point.norm();
    CHECK(rel_err(ev.v_out.dot(n), -ev.v_in.dot(n)) < 1e-12);
}

TEST_CASE("deepening well traps the particle until it can escape") {
    // Height is -0.1 at the instant the particle enters and plunges right
    // after; the exit attempt fails until the well becomes shallow again.
    const double tau_entry = 0.1 / 0.35;  // flight from 0.45 to 0.55 at speed 0.35
    SiteRandomness sites(9, CouplingLaw::fixed_plus, 1);
    const double phi_e = TorusPhase::wrap(sites.params({1, 0}).phi0[0] + tau_entry);
    auto f = [=](Phase p) {
        double s = std::sin(kPi * TorusPhase::wrap(p[0] - phi_e));
        return -0.1 - 0.7 * s * s;
    };
    auto df = [=](Phase p) {
        return -0.7 * kPi * std::sin(2.0 * kPi * TorusPhase::wrap(p[0] - phi_e));
    };
    auto profile = TimeProfile::custom(1, Phase(1.0, 0.0), f, df);
    auto field = build_chain_field(0.45, profile, CouplingLaw::fixed_plus, 9);
    LorentzGas<ChainLattice> gas(field);

    ParticleState<1> init{Vec<1>(0.45), Vec<1>(0.35), 0.0};
    EventLog<1> log;
    auto sum = gas.run(init, {1, 0.0}, log);
    REQUIRE(log.events.size() == 1);
    const auto& ev = log.events[0];
    CHECK(ev.kind == EventKind::trapped_then_escaped);
    CHECK(ev.bounces > 0);
    CHECK(sum.trapped_escapes == 1);
    CHECK(rel_err(ev.delta_e, ev.pot_exit - ev.pot_entry) < 1e-12);

    LorentzGas<ChainLattice> strict(field, /*max_internal_bounces=*/1);
    EventLog<1> log2;
    auto sum2 = strict.run(init, {1, 0.0}, log2);
    CHECK(sum2.trapped_unresolved);
    CHECK(log2.events.back().kind == EventKind::trapped_unresolved);
}

TEST_CASE("zero coupling gives free flight through geometrically present disks") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 5);
    // fixed coupling 0 is not a law; emulate with a constant-zero profile
    auto zero = build_hex_field(0.45, TimeProfile::constant(0.0), CouplingLaw::fixed_plus, 5);
    LorentzGas<HexLattice> gas(zero);
    Rng rng(1);
    auto init = gas.sample_initial(1.3, rng);
    EventLog<2> log;
    auto sum = gas.run(init, {2000, 0.0}, log);
    CHECK(sum.collisions == 2000);
    CHECK(sum.final_state.v.norm() == doctest::Approx(1.3).epsilon(1e-13));
    for (const auto& ev : log.events) {
        CHECK(ev.delta_e == 0.0);
        CHECK(ev.kind == EventKind::refract_through);
    }
    (void)field;
}

TEST_CASE("exact per-event bookkeeping over a long mixed trajectory") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 17);
    LorentzGas<HexLattice> gas(field);
    Rng rng(4);
    auto init = gas.sample_initial(0.8, rng);
    EventLog<2> log;
    auto sum = gas.run(init, {20000, 0.0}, log);
    CHECK(log.contiguous);

    HexLattice hex(0.45);
    Real tau_prev = -1.0;
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& ev = log.events[i];
        CHECK(ev.tau_exit >= ev.tau_entry);
        CHECK(ev.tau_entry > tau_prev);
        tau_prev = ev.tau_entry;

        // energy: sum of signed steps at their crossing times
        if (ev.kind == EventKind::reflect_off) {
            CHECK(std::abs(ev.delta_e) < 1e-12 * (1.0 + ev.v_in.squaredNorm()));
        } else if (ev.kind != EventKind::trapped_unresolved) {
            CHECK(std::abs(ev.delta_e - (ev.pot_exit - ev.pot_entry)) <
                  1e-12 * (1.0 + ev.v_in.squaredNorm()));
        }

        // angular momentum about the disk center across the whole event
        double l_in = ev.entry_point[0] * ev.v_in[1] - ev.entry_point[1] * ev.v_in[0];
        double l_out = ev.exit_point[0] * ev.v_out[1] - ev.exit_point[1] * ev.v_out[0];
        if (ev.kind != EventKind::trapped_unresolved)
            CHECK(std::abs(std::abs(l_out) - std::abs(l_in)) <
                  1e-12 * (1.0 + std::abs(l_in)));

        // impact parameter perpendicular to the incoming velocity
        CHECK(std::abs(ev.b.dot(ev.v_in)) < 1e-12 * (1.0 + ev.v_in.norm()));

        // disjoint supports: the entry point is on exactly one disk
        Vec<2> yg = log.entry_global[i];
        Vec<2> c0 = HexLattice::center(ev.site);
        CHECK(rel_err((yg - c0).norm(), 0.45) < 1e-9);
        for (auto [dn1, dn2] : {std::pair{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, -1}, {-1, 1}}) {
            Vec<2> cn = HexLattice::center({ev.site.n1 + dn1, ev.site.n2 + dn2});
            CHECK((yg - cn).norm() > 0.45);
        }
    }
    CHECK(sum.collisions == 20000);
}

TEST_CASE("static profile conserves energy to 1e-12 over 1e5 collisions") {
    auto field = build_hex_field(0.45, TimeProfile::constant(1.0), CouplingLaw::uniform_0_half, 21);
    LorentzGas<HexLattice> gas(field);
    Rng rng(8);
    auto init = gas.sample_initial(1.7, rng);
    EventLog<2> log;
    auto sum = gas.run(init, {100000, 0.0}, log);
    REQUIRE_FALSE(sum.trapped_unresolved);
    // the particle starts and ends outside every disk, so kinetic energy alone
    // must match; each event's entry/exit steps cancel at the same height
    double e0 = 0.5 * init.v.squaredNorm();
    double e1 = 0.5 * sum.final_state.v.squaredNorm();
    CHECK(std::abs(e1 - e0) < 1e-12 * e0);
    for (const auto& ev : log.events)
        CHECK(std::abs(ev.delta_e) < 1e-12 * (1.0 + ev.v_in.squaredNorm()));
}

TEST_CASE("identical seeds give bit-identical event sequences") {
    auto field = build_hex_field(0.47, TimeProfile::f3(), CouplingLaw::uniform_0_half, 77);
    LorentzGas<HexLattice> gas(field);
    auto run_once = [&]() {
        Rng rng(hash_combine(77, 5));
        auto init = gas.sample_initial(1.1, rng);
        EventLog<2> log;
        gas.run(init, {3000, 0.0}, log);
        return log;
    };
    auto a = run_once();
    auto b = run_once();
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].v_out[0] == b.events[i].v_out[0]);
        CHECK(a.events[i].v_out[1] == b.events[i].v_out[1]);
        CHECK(a.events[i].tau_entry == b.events[i].tau_entry);
        CHECK(a.events[i].site.n1 == b.events[i].site.n1);
    }
}

TEST_CASE("a state far outside the search table raises HorizonViolation") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 7);
    LorentzGas<HexLattice> gas(field);
    ParticleState<2> init{Vec<2>(50.0, 50.0), Vec<2>(1.0, 0.0), 0.0};
    CHECK_THROWS_AS(gas.run(init, {1, 0.0}), HorizonViolation);
}

TEST_CASE("kinetic energy grows with collision count in the driven lattice") {
    auto field = build_hex_field(0.45, TimeProfile::f1(), CouplingLaw::uniform_0_half, 2);
    LorentzGas<HexLattice> gas(field);
    EnsembleParams par;
    par.n_trajectories = 200;
    par.v0 = 1.0;
    par.stop = {20000, 0.0};
    par.master_seed = 12;
    par.workers = 2;
    par.n_grid = CheckpointGrid::geometric(GridKind::by_collision_n, 1, 8, 20000);
    par.t_grid = CheckpointGrid::geometric(GridKind::by_time_tau, 1, 8, 100.0);
    par.n_obs = {Observable::v2, Observable::tau};
    par.t_obs = {Observable::v2};
    auto res = run_lattice_ensemble(gas, par);
    auto fit = fit_exponent(res.n_series, Observable::v2);
    REQUIRE(fit.ok);
    CHECK(fit.exponent > 0.15);  // rough growth check; tight value is acceptance work
    CHECK(fit.exponent < 0.55);
}

TEST_CASE("bookkeeping invariants hold for every profile and lattice kind") {
    auto audit2d = [](const TimeProfile& profile) {
        auto field = build_hex_field(0.46, profile, CouplingLaw::uniform_0_half, 91);
        LorentzGas<HexLattice> gas(field);
        Rng rng(14);
        auto init = gas.sample_initial(0.9, rng);
        EventLog<2> log;
        gas.run(init, {4000, 0.0}, log);
        CHECK(log.contiguous);
        for (const auto& ev : log.events) {
            if (ev.kind == EventKind::trapped_unresolved) continue;
            const double scale = 1.0 + ev.v_in.squaredNorm();
            if (ev.kind == EventKind::reflect_off)
                CHECK(std::abs(ev.delta_e) < 1e-12 * scale);
            else
                CHECK(std::abs(ev.delta_e - (ev.pot_exit - ev.pot_entry)) < 1e-12 * scale);
        }
    };
    audit2d(TimeProfile::f1());
    audit2d(TimeProfile::f2());
    audit2d(TimeProfile::f3());

    auto chain = build_chain_field(0.3, TimeProfile::f2(), CouplingLaw::fixed_minus, 92);
    LorentzGas<ChainLattice> gas1(chain);
    Rng rng(15);
    auto init = gas1.sample_initial(1.2, rng);
    EventLog<1> log;
    gas1.run(init, {4000, 0.0}, log);
    for (const auto& ev : log.events) {
        if (ev.kind == EventKind::trapped_unresolved) continue;
        const double scale = 1.0 + ev.v_in.squaredNorm();
        if (ev.kind == EventKind::reflect_off)
            CHECK(std::abs(ev.delta_e) < 1e-12 * scale);
        else
            CHECK(std::abs(ev.delta_e - (ev.pot_exit - ev.pot_entry)) < 1e-12 * scale);
    }
}
