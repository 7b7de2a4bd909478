#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/pseudo.hpp"
#include "kinetic_chaos/stats.hpp"

using namespace kc;

namespace {

SimConfig config(int d, long N, double eps) {
    SimConfig c;
    c.d = d;
    c.N = N;
    c.epsilon = eps;
    c.ell = 1.0 / (double(N) * std::pow(eps, d - 1));
    return c;
}

PhasePoint point(std::initializer_list<double> x, std::initializer_list<double> v, int d = 2) {
    PhasePoint z;
    z.dim = d;
    z.x = x;
    z.v = v;
    return z;
}

Creation creation(double t, std::vector<double> v, std::vector<double> omega, int parent) {
    Creation c;
    c.t = t;
    c.v = std::move(v);
    c.omega = std::move(omega);
    c.parent = parent;
    return c;
}

double maxwellian(const double* v, int d, double beta) {
    return std::pow(beta / (2 * std::numbers::pi), 0.5 * d) * std::exp(-0.5 * beta * norm2(v, d));
}

}  // namespace

TEST_CASE("coefficient_a: closed form and bounds") {
    auto cfg = SimConfig::from_scaling(2, 100, 0.7);
    CHECK(coefficient_a(100, 0, 1, cfg) == 1.0);
    CHECK(coefficient_a(100, 2, 1, cfg) * cfg.ell * cfg.ell == doctest::Approx(0.9702).epsilon(1e-14));
    CHECK_THROWS_AS(coefficient_a(10, 6, 5, SimConfig::from_scaling(2, 10, 1.0)), InputError);
    CHECK(coefficient_a(10, 5, 5, SimConfig::from_scaling(2, 10, 1.0)) > 0);

    Rng rng(9);
    for (int rep = 0; rep < 2000; ++rep) {
        const long N = 1 + long(rng.below(1000));
        const int s = int(rng.below(std::uint64_t(std::min<long>(N, 8)))) + 1;
        const int k = int(rng.below(std::uint64_t(std::min<long>(N - s, 8) + 1)));
        const auto c = SimConfig::from_scaling(2 + int(rng.below(2)), N, rng.uniform(0.2, 3.0));
        const double a = coefficient_a(N, k, s, c);
        REQUIRE(a >= 0);
        REQUIRE(a <= std::pow(c.ell, -k) * (1 + 1e-15));
        if (k + 1 + s <= N) REQUIRE(coefficient_a(N, k + 1, s, c) * std::pow(c.ell, k + 1) <= a * std::pow(c.ell, k));
    }
    // a l^k -> 1 as N grows at fixed k, s.
    double prev = 0;
    for (long N : {10L, 100L, 1000L, 100000L}) {
        const double al = coefficient_a(N, 3, 2, SimConfig::from_scaling(2, N, 1.0));
        CHECK(al > prev);
        prev = al;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("build_pst: depth zero is the backward flow") {
    auto cfg = config(2, 10, 0.1);
    auto z = point({0, 0, 1, 0.05}, {1, 0, -1, 0});
    auto r = build_pst(z, 2.0, {}, cfg, Flavor::bbgky());
    CHECK_FALSE(r.undefined);
    CHECK(r.kernel == 1.0);
    CHECK(r.final_state == backward(z, 2.0, cfg).state);
    auto b = build_pst(z, 2.0, {}, cfg, Flavor::boltzmann());
    CHECK(b.final_state.x == std::vector<double>{-2, 0, 3, 0.05});
    // Inadmissible data has no bbgky kernel.
    auto bad = point({0, 0, 0.05, 0}, {0, 0, 0, 0});
    CHECK(build_pst(bad, 1.0, {}, cfg, Flavor::bbgky()).undefined);
    CHECK_FALSE(build_pst(bad, 1.0, {}, cfg, Flavor::boltzmann()).undefined);
}

TEST_CASE("build_pst: boltzmann creations") {
    auto cfg = config(2, 10, 0.1);
    auto z = point({1, 2}, {1, 0});
    CreationSequence seq;
    // omega . (v_new - v_1) = (0,1).(1,-1) - ... = -1: pre-collisional, no exchange.
    seq.entries.push_back(creation(0.5, {2, -1}, {0, 1}, 0));
    auto r = build_pst(z, 2.0, seq, cfg, Flavor::boltzmann());
    REQUIRE_FALSE(r.undefined);
    CHECK(r.kernel == doctest::Approx(-1.0));
    CHECK(r.post_collisional == std::vector<bool>{false});
    // Parent at time 0.5 sits at (1 - 1.5, 2); the child is created there and streams back 0.5.
    CHECK(r.final_state.x[0] == doctest::Approx(-1.0));
    CHECK(r.final_state.x[2] == doctest::Approx(-0.5 - 1.0));
    CHECK(r.final_state.x[3] == doctest::Approx(2.0 + 0.5));
    CHECK(r.final_state.v == std::vector<double>{1, 0, 2, -1});

    // Post-collisional creation: the pair is exchanged before streaming back.
    CreationSequence post;
    post.entries.push_back(creation(0.5, {1, 1}, {0, 1}, 0));
    auto p = build_pst(z, 2.0, post, cfg, Flavor::boltzmann());
    CHECK(p.kernel == doctest::Approx(1.0));
    CHECK(p.post_collisional == std::vector<bool>{true});
    CHECK(p.final_state.v[0] == doctest::Approx(1.0));
    CHECK(p.final_state.v[1] == doctest::Approx(1.0));
    CHECK(p.final_state.v[2] == doctest::Approx(1.0));
    CHECK(p.final_state.v[3] == doctest::Approx(0.0));
    CHECK(functionals(p.final_state).energy == doctest::Approx(0.5 * (1 + 2)));
}

TEST_CASE("build_pst: bbgky exclusion and contact placement") {
    auto cfg = config(2, 10, 0.2);
    // Third particle sits right where the child would be created.
    auto z = point({0, 0, 0.2, 0.5}, {0, 0, 0, 0});
    CreationSequence seq;
    seq.entries.push_back(creation(0.0, {0, 1}, {0, 1}, 0));
    auto r = build_pst(z, 0.0, seq, cfg, Flavor::bbgky());
    // Child at (0, 0.2) and particle 2 at (0.2, 0.5): distance 0.36 > 0.2, so defined.
    CHECK_FALSE(r.undefined);
    auto z2 = point({0, 0, 0.05, 0.3}, {0, 0, 0, 0});
    auto u = build_pst(z2, 0.0, seq, cfg, Flavor::bbgky());
    CHECK(u.undefined);
    CHECK(u.kernel == 0.0);
    // Boltzmann ignores the overlap entirely.
    CHECK_FALSE(build_pst(z2, 0.0, seq, cfg, Flavor::boltzmann()).undefined);

    // A created pre-collisional pair separates under the backward flow without colliding.
    auto one = point({0, 0}, {0, 0});
    CreationSequence s1;
    s1.entries.push_back(creation(1.0, {0, -1}, {0, 1}, 0));
    auto q = build_pst(one, 1.0, s1, cfg, Flavor::bbgky());
    REQUIRE_FALSE(q.undefined);
    CHECK(q.kernel == doctest::Approx(-1.0));
    CHECK(q.final_state.x[3] == doctest::Approx(0.2 + 1.0));
}

TEST_CASE("CreationSequence: validation") {
    auto cfg = config(2, 10, 0.1);
    auto z = point({0, 0}, {0, 0});
    CreationSequence seq;
    seq.entries.push_back(creation(0.5, {0, 1}, {0, 1}, 0));
    seq.entries.push_back(creation(0.5, {0, 1}, {0, 1}, 0));
    CHECK_THROWS_AS(build_pst(z, 1.0, seq, cfg, Flavor::boltzmann()), InputError);
    seq.entries[1].t = 0.2;
    seq.entries[1].parent = 2;
    CHECK_THROWS_AS(build_pst(z, 1.0, seq, cfg, Flavor::boltzmann()), InputError);
    seq.entries[1].parent = 1;
    CHECK_NOTHROW(build_pst(z, 1.0, seq, cfg, Flavor::boltzmann()));
    seq.entries[1].omega = {0, 2};
    CHECK_THROWS_AS(build_pst(z, 1.0, seq, cfg, Flavor::boltzmann()), InputError);
    seq.entries[1].omega = {0, 1};
    CHECK_THROWS_AS(build_pst(z, 0.4, seq, cfg, Flavor::boltzmann()), InputError);
}

TEST_CASE("duhamel_mc: deterministic cases and argument errors") {
    auto cfg = SimConfig::from_scaling(2, 8, 1.0);
    auto data = product_data([](const double* x, const double* v) {
        return std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (v[0] * v[0] + v[1] * v[1]));
    });
    CutoffParams cut;
    SeriesOptions opt;
    opt.M = 200;
    auto z = point({0.3, -0.2}, {0.5, 0.1});
    auto e0 = duhamel_mc(z, 0.7, 0, cfg, cut, data, Flavor::bbgky(), opt);
    auto moved = point({0.3 - 0.35, -0.2 - 0.07}, {0.5, 0.1});
    const double chi_z = chi(cut.chi, functionals(z).energy / (cut.R * cut.R));
    CHECK(e0.value == doctest::Approx(data(moved) * chi_z).epsilon(1e-14));
    CHECK(e0.std_err == 0.0);
    for (auto fl : {Flavor::bbgky(), Flavor::boltzmann(), Flavor::enskog(3)}) {
        auto e = duhamel_mc(z, 0.0, 3, cfg, cut, data, fl, opt);
        CHECK(e.value == doctest::Approx(data(z) * chi_z).epsilon(1e-14));
        CHECK(e.per_depth.size() == 4);
        for (int k = 1; k <= 3; ++k) CHECK(e.per_depth[std::size_t(k)].contribution == 0.0);
    }
    CHECK_THROWS_AS(duhamel_mc(z, 0.5, -1, cfg, cut, data, Flavor::bbgky(), opt), InputError);
    auto bad = opt;
    bad.M = 0;
    CHECK_THROWS_AS(duhamel_mc(z, 0.5, 1, cfg, cut, data, Flavor::bbgky(), bad), InputError);
    auto nor = cut;
    nor.R = 0;
    CHECK_THROWS_AS(duhamel_mc(z, 0.5, 1, cfg, nor, data, Flavor::bbgky(), opt), InputError);
    // bbgky terminates at N particles.
    auto tiny = SimConfig::from_scaling(2, 2, 1.0);
    auto e2 = duhamel_mc(z, 0.5, 3, tiny, cut, data, Flavor::bbgky(), opt);
    CHECK(e2.per_depth[2].contribution == 0.0);
    CHECK(e2.per_depth[3].contribution == 0.0);
}

TEST_CASE("duhamel_mc: gain and loss cancel for homogeneous Maxwellian data") {
    // s = 1, boltzmann flavor, data f0(v) Maxwellian and independent of x.
    const int d = 2;
    const double beta = 1.0, t = 0.4;
    auto cfg = SimConfig::from_scaling(d, 100, 2.0);
    auto data = product_data([&](const double*, const double* v) { return maxwellian(v, d, beta); });
    CutoffParams cut;
    cut.chi = ChiProfile::none;
    SeriesOptions opt;
    opt.M = 40000;
    opt.seed = 77;
    auto z = point({0.1, 0.2}, {0.7, -0.4});
    auto e = duhamel_mc(z, t, 1, cfg, cut, data, Flavor::boltzmann(), opt);
    REQUIRE(e.per_depth[1].std_err > 0);
    CHECK(std::abs(e.per_depth[1].contribution) < 3 * e.per_depth[1].std_err);

    // Sign split against quadrature: each part is +-(2 t / ell) M(v) int M(v1) |v1 - v| dv1 in d = 2.
    double quad = 0;
    const int nq = 400;
    const double L = 8, h = 2 * L / nq;
    for (int a = 0; a < nq; ++a)
        for (int b = 0; b < nq; ++b) {
            double v1[2] = {-L + (a + 0.5) * h, -L + (b + 0.5) * h};
            double dv[2] = {v1[0] - 0.7, v1[1] + 0.4};
            quad += maxwellian(v1, d, beta) * std::sqrt(norm2(dv, d)) * h * h;
        }
    const double part = 2 * t / cfg.ell * maxwellian(z.vel(0), d, beta) * quad;

    Rng rng(5);
    RunningStats gain, loss;
    const long M = 40000;
    for (long i = 0; i < M; ++i) {
        CreationSequence seq;
        std::vector<double> v(2), w(2);
        rng.unit_vector(w.data(), 2);
        v[0] = rng.normal() / std::sqrt(beta);
        v[1] = rng.normal() / std::sqrt(beta);
        seq.entries.push_back(creation(rng.uniform(0, t), v, w, 0));
        auto r = build_pst(z, t, seq, cfg, Flavor::boltzmann());
        const double weight = t / cfg.ell * sphere_area(2) / maxwellian(v.data(), d, beta) * r.kernel * data(r.final_state);
        gain.add(r.kernel > 0 ? weight : 0.0);
        loss.add(r.kernel < 0 ? weight : 0.0);
    }
    CHECK(std::abs(gain.mean - part) < 3 * gain.stderr_mean());
    CHECK(std::abs(loss.mean + part) < 3 * loss.stderr_mean());
}

TEST_CASE("duhamel_mc: reproducible across worker counts") {
    auto cfg = SimConfig::from_scaling(2, 8, 1.0);
    auto data = product_data([](const double* x, const double* v) {
        return std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (v[0] * v[0] + v[1] * v[1])) / (4 * std::numbers::pi * std::numbers::pi);
    });
    CutoffParams cut;
    SeriesOptions opt;
    opt.M = 3000;
    opt.seed = 4;
    auto z = point({0.3, -0.2}, {0.5, 0.1});
    opt.workers = 1;
    auto a = duhamel_mc(z, 0.5, 3, cfg, cut, data, Flavor::bbgky(), opt);
    opt.workers = 3;
    auto b = duhamel_mc(z, 0.5, 3, cfg, cut, data, Flavor::bbgky(), opt);
    CHECK(a.value == b.value);
    CHECK(a.std_err == b.std_err);
    double sum = 0;
    for (auto& t : a.per_depth) sum += t.contribution;
    CHECK(a.value == doctest::Approx(sum).epsilon(1e-15));

    // Cell-sampled variant with a degenerate sampler reduces to the fixed-point estimator's law.
    auto s = duhamel_mc_sampled([&](Rng&) { return z; }, 1, 2, 0.5, 0, cfg, cut, data, Flavor::bbgky(), opt);
    CHECK(s.value == doctest::Approx(a.per_depth[0].contribution).epsilon(1e-14));
}

TEST_CASE("enskog factorization residual") {
    auto cfg = SimConfig::from_scaling(2, 1000, 1.0);
    auto g1 = [](const double* x, const double* v) {
        return std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (v[0] * v[0] + v[1] * v[1])) / (4 * std::numbers::pi * std::numbers::pi);
    };
    auto g2 = [&](const double* x1, const double* v1, const double* x2, const double* v2) {
        return g1(x1, v1) * g1(x2, v2) * (1.0 + 0.5 * std::tanh(v1[0] - v2[0]));
    };
    SeriesOptions opt;
    opt.M = 4000;
    opt.seed = 21;
    // Pair on a collision course within t, third particle elsewhere.
    auto z = point({-0.3, 0.0, 0.3, 0.01, 0.5, 1.0}, {0.8, 0.0, -0.8, 0.0, -0.2, 0.3});
    auto r0 = enskog_factorization_residual(z, 0.0, 2, cfg, g2, g1, 3, opt);
    CHECK(r0.residual == 0.0);
    auto rn = enskog_factorization_residual(z, 0.5, 0, cfg, g2, g1, 3, opt);
    CHECK(std::abs(rn.residual) <= 1e-14 * std::abs(rn.full));
    CHECK(rn.std_err == 0.0);
    auto r2 = enskog_factorization_residual(z, 0.5, 2, cfg, g2, g1, 3, opt);
    CHECK(r2.std_err > 0);
    CHECK(std::abs(r2.residual) < 3 * r2.std_err);
    auto two = point({0, 0, 1, 1}, {0, 0, 0, 0});
    CHECK_THROWS_AS(enskog_factorization_residual(two, 0.5, 1, cfg, g2, g1, 3, opt), InputError);
}

TEST_CASE("series CSV layout") {
    SeriesEstimate e;
    e.per_depth = {{.k = 0, .contribution = 1.0, .std_err = 0.0, .samples = 1}, {.k = 1, .contribution = -0.25, .std_err = 0.01, .samples = 100}};
    e.value = 0.75;
    e.std_err = 0.01;
    e.samples = 101;
    std::ostringstream os;
    write_series_csv_header(os);
    write_series_csv_rows(os, Flavor::boltzmann(), 1, 0.5, e);
    CHECK(os.str() ==
          "# schema=1\nflavor,s,k,t,value,stderr,samples\nboltzmann,1,0,0.5,1,0,1\nboltzmann,1,1,0.5,-0.25,0.01,100\n"
          "boltzmann,1,-1,0.5,0.75,0.01,101\n");
}
