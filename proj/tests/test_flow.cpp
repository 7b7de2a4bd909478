#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/flow.hpp"
#include "kinetic_chaos/rng.hpp"

using namespace kc;

namespace {

PhasePoint make(int d, std::vector<std::vector<double>> xs, std::vector<std::vector<double>> vs) {
    PhasePoint z(d, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) z.push_back(xs[i].data(), vs[i].data());
    return z;
}

SimConfig unit_eps(int d) {
    SimConfig c;
    c.d = d;
    c.N = 1;
    c.ell = 1;
    c.epsilon = 1;
    return c;
}

PhasePoint random_gas(Rng& rng, int d, int s, double eps, double box) {
    // Sequential placement: each new particle is redrawn until it overlaps nobody.
    PhasePoint z(d, 0);
    std::vector<double> x(d), v(d);
    while (z.size() < s) {
        for (auto& c : x) c = rng.uniform(-box, box);
        bool ok = true;
        for (int i = 0; i < z.size() && ok; ++i) ok = dist2(z.pos(i), x.data(), d) >= eps * eps;
        if (!ok) continue;
        for (auto& c : v) c = rng.normal();
        z.push_back(x.data(), v.data());
    }
    return z;
}

double pair_distance(const PhasePoint& z, int i, int j, double t) {
    double r2 = 0;
    for (int k = 0; k < z.dim; ++k) {
        double a = z.pos(i)[k] + z.vel(i)[k] * t, b = z.pos(j)[k] + z.vel(j)[k] * t;
        r2 += (a - b) * (a - b);
    }
    return std::sqrt(r2);
}

}  // namespace

TEST_CASE("next_collision: head-on, receding and offset pairs") {
    auto c = next_collision(make(2, {{0, 0}, {5, 0}}, {{1, 0}, {-1, 0}}), 1.0);
    REQUIRE(c);
    CHECK(c->i == 0);
    CHECK(c->j == 1);
    CHECK(c->time == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(c->omega[0] == doctest::Approx(1.0));
    CHECK_FALSE(next_collision(make(2, {{0, 0}, {5, 0}}, {{-1, 0}, {1, 0}}), 1.0));

    auto z = make(2, {{0, 0}, {5, 0.5}}, {{1, 0}, {-1, 0}});
    auto o = next_collision(z, 1.0);
    REQUIRE(o);
    // Bisection on the pair distance as an independent oracle.
    double lo = 0, hi = 2.5;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (pair_distance(z, 0, 1, mid) > 1.0 ? lo : hi) = mid;
    }
    CHECK(o->time == doctest::Approx(lo).epsilon(1e-12));
    CHECK(o->time == doctest::Approx((5 - std::sqrt(0.75)) / 2).epsilon(1e-14));
    CHECK(o->time == doctest::Approx(2.0670).epsilon(1e-4));
}

TEST_CASE("next_collision rejects overlapping input") {
    CHECK_THROWS_AS(next_collision(make(2, {{0, 0}, {0.5, 0}}, {{0, 0}, {0, 0}}), 1.0), InputError);
}

TEST_CASE("advance: free flight, exchange and single particle") {
    auto cfg = unit_eps(2);
    auto z = make(2, {{0, 0}, {5, 0}}, {{1, 0}, {-1, 0}});
    auto r = advance(z, 1.5, cfg);
    CHECK(r.log.events.empty());
    CHECK(r.state.x == std::vector<double>{1.5, 0, 3.5, 0});

    r = advance(z, 3.0, cfg);
    REQUIRE(r.log.events.size() == 1);
    CHECK(r.log.events[0].time == doctest::Approx(2.0));
    CHECK(r.state.x[0] == doctest::Approx(1.0));
    CHECK(r.state.x[2] == doctest::Approx(4.0));
    CHECK(r.state.v == std::vector<double>{-1, 0, 1, 0});

    // Exactly at the collision time the post-collisional state is returned.
    r = advance(z, 2.0, cfg);
    CHECK(r.log.events.size() == 1);
    CHECK(r.state.v == std::vector<double>{-1, 0, 1, 0});

    auto one = make(3, {{1, 2, 3}}, {{-1, 0.5, 2}});
    r = advance(one, 7.0, cfg);
    CHECK(r.state.x == std::vector<double>{1 - 7.0, 2 + 3.5, 3 + 14.0});
}

TEST_CASE("backward: round trip and free backward streaming on K") {
    auto cfg = unit_eps(2);
    auto z = make(2, {{0, 0}, {5, 0.3}}, {{1, 0}, {-1, 0}});
    auto f = advance(z, 4.0, cfg);
    REQUIRE(f.log.events.size() == 1);
    auto b = backward(f.state, 4.0, cfg);
    for (std::size_t k = 0; k < z.x.size(); ++k) {
        CHECK(b.state.x[k] == doctest::Approx(z.x[k]).epsilon(1e-12));
        CHECK(b.state.v[k] == doctest::Approx(z.v[k]).epsilon(1e-12));
    }
    auto k = make(2, {{0, 0}, {3, 0}}, {{1, 0}, {-1, 0}});
    REQUIRE(in_K(k, 1.0));
    auto bk = backward(k, 10.0, cfg);
    CHECK(bk.log.events.empty());
    for (std::size_t c = 0; c < k.x.size(); ++c) CHECK(bk.state.x[c] == k.x[c] - k.v[c] * 10.0);
}

TEST_CASE("advance_tilde: only the tracked pair collides") {
    auto cfg = unit_eps(2);
    // Particles 1, 2 head-on; particle 3 crosses particle 1's path.
    auto z = make(2, {{0, 0}, {5, 0}, {1, -4}}, {{1, 0}, {-1, 0}, {0, 2}});
    auto r = advance_tilde(z, 3.0, 3, cfg);
    REQUIRE(r.log.events.size() == 1);
    CHECK(r.log.events[0].i == 0);
    CHECK(r.log.events[0].j == 1);
    CHECK(r.state.x[4] == doctest::Approx(1.0));
    CHECK(r.state.x[5] == doctest::Approx(2.0));
    CHECK(r.state.v[4] == 0.0);
    CHECK(r.state.v[5] == 2.0);

    auto two = make(2, {{0, 0}, {5, 0}}, {{1, 0}, {-1, 0}});
    auto a = advance_tilde(two, 3.0, 3, cfg);
    auto b = advance(two, 3.0, cfg);
    CHECK(a.state == b.state);

    // Without tracked collisions every particle streams exactly.
    auto none = make(2, {{0, 0}, {5, 0}, {2.5, 0.2}}, {{1, 0}, {-1, 0}, {0, 0}});
    auto c = advance_tilde(none, 4.0, 1, cfg);
    CHECK(c.log.events.empty());
    for (std::size_t k = 0; k < none.x.size(); ++k) CHECK(c.state.x[k] == none.x[k] + none.v[k] * 4.0);
}

TEST_CASE("conservation of energy and momentum") {
    Rng rng(1);
    for (int rep = 0; rep < 2000; ++rep) {
        int s = 2 + int(rng.below(5));
        auto z = random_gas(rng, 2, s, 0.5, 2.0);
        SimConfig cfg = unit_eps(2);
        cfg.epsilon = 0.5;
        auto r = advance(z, rng.uniform(0, 10), cfg);
        double e0 = functionals(z).energy, e1 = functionals(r.state).energy;
        REQUIRE(std::abs(e1 - e0) <= 1e-10 * (1 + e0));
        for (int k = 0; k < 2; ++k) {
            double p0 = 0, p1 = 0;
            for (int i = 0; i < s; ++i) {
                p0 += z.vel(i)[k];
                p1 += r.state.vel(i)[k];
            }
            REQUIRE(std::abs(p1 - p0) <= 1e-10 * (1 + e0));
        }
    }
}

TEST_CASE("virial grows at least like 2 t E; inertia dominates free streaming") {
    // Head-on pair: Y jumps up at the collision, free-streaming inertia is a lower bound.
    auto z = make(2, {{-1, 0}, {1, 0}}, {{1, 0}, {-1, 0}});
    SimConfig cfg = unit_eps(2);
    const auto f = functionals(z);
    CHECK(f.virial == -2.0);
    const auto after = advance(z, 2.0, cfg).state;
    CHECK(functionals(after).virial >= 2 * 2.0 * f.energy + f.virial - 1e-12);
    CHECK(functionals(after).moment_of_inertia == doctest::Approx(4.0));  // contact at t = 0.5, then |x| = 2

    Rng rng(31);
    for (int rep = 0; rep < 500; ++rep) {
        const int s = 2 + int(rng.below(5));
        auto g = random_gas(rng, 2, s, 0.3, 1.5);
        cfg.epsilon = 0.3;
        const double T = rng.uniform(0, 10);
        const auto fwd = advance(g, T, cfg);
        const auto g0 = functionals(g);
        for (const auto& e : fwd.log.events) {
            const auto zt = advance(g, e.time, cfg).state;
            REQUIRE(functionals(zt).virial >= 2 * e.time * g0.energy + g0.virial - 1e-9);
        }
        for (int sign : {1, -1}) {
            const auto zt = sign > 0 ? fwd.state : backward(g, T, cfg).state;
            PhasePoint free = g;
            for (std::size_t k = 0; k < free.x.size(); ++k) free.x[k] += sign * T * free.v[k];
            REQUIRE(functionals(zt).moment_of_inertia >= functionals(free).moment_of_inertia - 1e-9);
        }
    }
}

TEST_CASE("label permutation commutes with the flow") {
    Rng rng(2);
    for (int rep = 0; rep < 200; ++rep) {
        int s = 3 + int(rng.below(4));
        auto z = random_gas(rng, 2, s, 0.5, 2.0);
        SimConfig cfg = unit_eps(2);
        cfg.epsilon = 0.5;
        std::vector<int> perm(s);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        PhasePoint pz(2, 0);
        for (int i : perm) pz.push_back(z.pos(i), z.vel(i));
        auto a = advance(z, 5.0, cfg).state;
        auto b = advance(pz, 5.0, cfg).state;
        for (int q = 0; q < s; ++q)
            for (int k = 0; k < 2; ++k) {
                REQUIRE(b.pos(q)[k] == doctest::Approx(a.pos(perm[q])[k]).epsilon(1e-9));
                REQUIRE(b.vel(q)[k] == doctest::Approx(a.vel(perm[q])[k]).epsilon(1e-9));
            }
    }
}

TEST_CASE("event caching matches full recomputation") {
    Rng rng(4);
    for (int rep = 0; rep < 40; ++rep) {
        int s = 10 + int(rng.below(60));
        auto z = random_gas(rng, 2, s, 0.4, 3.0);
        FlowPolicy full, cached;
        full.full_recompute_limit = 1000;
        cached.full_recompute_limit = 1;
        auto a = evolve(z, 4.0, 0.4, s, full, false);
        auto b = evolve(z, 4.0, 0.4, s, cached, false);
        REQUIRE(a.log.events.size() == b.log.events.size());
        for (std::size_t e = 0; e < a.log.events.size(); ++e) {
            REQUIRE(a.log.events[e].i == b.log.events[e].i);
            REQUIRE(a.log.events[e].j == b.log.events[e].j);
        }
        for (std::size_t k = 0; k < z.x.size(); ++k) REQUIRE(a.state.x[k] == doctest::Approx(b.state.x[k]).epsilon(1e-9));
    }
}

TEST_CASE("degenerate events: reject names the event, perturb keeps going") {
    auto cfg = unit_eps(2);
    auto z = make(2, {{-2, 0}, {0, 0}, {2, 0}}, {{1, 0}, {0, 0}, {-1, 0}});
    FlowPolicy reject;
    try {
        advance(z, 3.0, cfg, reject);
        FAIL("expected a degenerate event");
    } catch (const DegenerateEventError& e) {
        CHECK(std::string(e.what()).find("degenerate event") != std::string::npos);
    }
    FlowPolicy perturb;
    perturb.degenerate = DegeneratePolicy::perturb;
    auto r = advance(z, 3.0, cfg, perturb);
    CHECK(r.log.perturbations >= 1);
    CHECK(std::abs(functionals(r.state).energy - functionals(z).energy) < 1e-12);
}

TEST_CASE("event log CSV layout") {
    auto cfg = unit_eps(2);
    auto r = advance(make(2, {{0, 0}, {5, 0}}, {{1, 0}, {-1, 0}}), 3.0, cfg);
    std::ostringstream os;
    write_event_log_csv(os, r.log, 2);
    std::string s = os.str();
    CHECK(s.rfind("# schema=1\ntime,i,j,omega_0,omega_1,pre_i_0,pre_i_1,pre_j_0,pre_j_1,post_i_0,post_i_1,post_j_0,post_j_1\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}
