#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "kinetic_chaos/analysis.hpp"
#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/rng.hpp"

using namespace kc;

namespace {

constexpr double pi = std::numbers::pi;

std::vector<PhasePoint> random_probe(int d, int s, int count, std::uint64_t seed, double spread = 2.0) {
    Rng rng(seed);
    std::vector<PhasePoint> out;
    for (int i = 0; i < count; ++i) {
        PhasePoint z(d, s);
        for (auto& c : z.x) c = rng.uniform(-spread, spread);
        for (auto& c : z.v) c = rng.uniform(-spread, spread);
        out.push_back(z);
    }
    return out;
}

CutoffParams plain_cut(double R = 4.0) {
    CutoffParams cut;
    cut.R = R;
    cut.chi = ChiProfile::none;
    return cut;
}

}  // namespace

TEST_CASE("weighted_sup_norm: Maxwellian products, zero and homogeneity") {
    const WeightParams w{0.7, 0.4};
    auto maxwell = product_data([&](const double*, const double* v) {
        return std::exp(-w.mu) * std::exp(-w.beta * 0.5 * (v[0] * v[0] + v[1] * v[1]));
    });
    for (int s = 1; s <= 4; ++s) {
        auto probe = random_probe(2, s, 200, 3 + s);
        CHECK(weighted_sup_norm(maxwell, w, probe) == doctest::Approx(1.0).epsilon(1e-12));
        HierarchyData zero{[](const PhasePoint&) { return 0.0; }};
        CHECK(weighted_sup_norm(zero, w, probe) == 0.0);
        HierarchyData twice{[&](const PhasePoint& z) { return 2 * maxwell(z); }};
        CHECK(weighted_sup_norm(twice, w, probe) == doctest::Approx(2.0).epsilon(1e-12));
        // Pointwise domination |g| <= |f| carries over to the norm.
        HierarchyData damped{[&](const PhasePoint& z) { return -maxwell(z) * std::exp(-norm2(z.x.data(), 2 * s)); }};
        CHECK(weighted_sup_norm(damped, w, probe) <= weighted_sup_norm(maxwell, w, probe));
    }
}

TEST_CASE("weight certificates hold at random points") {
    for (double sig : {0.5, 1.0, 2.0})
        for (double beta : {0.5, 1.0, 3.0}) {
            auto f0 = DensitySpec::gaussian(2, sig, beta);
            auto cert = f0.weight_certificate();
            REQUIRE(cert);
            auto data = product_data([&](const double* x, const double* v) { return f0.eval(x, v); });
            for (int s = 1; s <= 3; ++s)
                CHECK(transported_weighted_sup_norm(data, *cert, random_probe(2, s, 1000, 11 * s, 3.0), 0.0) <=
                      1.0 + 1e-12);
        }
}

TEST_CASE("duality_bracket: window mass, zero observable and the duality inequality") {
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto F = product_data([&](const double* x, const double* v) { return f0.eval(x, v); });
    QuadratureSpec q;
    q.x_lo = -1.5;
    q.x_hi = 1.0;
    q.v_lo = -1.0;
    q.v_hi = 2.0;
    q.M = 40000;
    HierarchyData one{[](const PhasePoint&) { return 1.0; }, 1};
    auto b = duality_bracket(one, F, 3, q);
    const double lo[4] = {-1.5, -1.5, -1.0, -1.0}, hi[4] = {1.0, 1.0, 2.0, 2.0};
    const double mass = f0.cell_mass(lo, hi);
    CHECK(std::abs(b.value - mass) < 4 * b.std_err);

    HierarchyData zero{[](const PhasePoint&) { return 0.0; }};
    CHECK(duality_bracket(zero, F, 3, q).value == 0.0);

    // Both sides from the same quadrature points, so the inequality holds sample by sample.
    Rng rng(5);
    q.M = 300;
    q.epsilon = 0.05;
    for (int rep = 0; rep < 100; ++rep) {
        const double c1 = rng.uniform(-1, 1), c2 = rng.uniform(0.2, 2), c3 = rng.uniform(-2, 2);
        const double fb = rng.uniform(0.3, 2.0);
        HierarchyData phi{[=](const PhasePoint& z) {
            double s = c1;
            for (double x : z.x) s += c3 * std::sin(c2 * x);
            return s * (z.size() == 2 ? -1.0 : 1.0);
        }};
        HierarchyData G{[=](const PhasePoint& z) {
            double e = 0;
            for (double v : z.v) e += v * v;
            return std::cos(fb * z.x[0]) * std::exp(-0.5 * fb * e);
        }};
        const WeightParams w{rng.uniform(0.2, 1.0), rng.uniform(-1, 1)};
        q.seed = std::uint64_t(rep + 1);
        const double lhs = std::abs(duality_bracket(phi, G, 3, q).value);
        const double rhs = weighted_l1_norm(phi, w, 3, q).value * quadrature_sup_norm(G, w, 3, q);
        REQUIRE(lhs <= rhs * (1 + 1e-12));
    }
}

TEST_CASE("dispersive_check: closed form") {
    auto r = dispersive_check(GaussianZeta{1, 1}, 2, 2.0);
    CHECK(r.lhs == doctest::Approx(pi / 5).epsilon(1e-15));
    CHECK(r.rhs == doctest::Approx(pi / 4).epsilon(1e-15));
    CHECK(r.holds);
    CHECK_THROWS_AS(dispersive_check(GaussianZeta{1, 1}, 2, 0.0), InputError);

    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        const int d = 2 + rep % 2;
        const double a = std::exp(rng.uniform(-2, 2)), b = std::exp(rng.uniform(-2, 2));
        const double t = std::exp(rng.uniform(-2, 2)) * (rep % 3 == 0 ? -1 : 1);
        auto res = dispersive_check(GaussianZeta{a, b}, d, t);
        REQUIRE(res.holds);
        const double ratio = std::pow(a * t * t / (a * t * t + b), 0.5 * d);
        REQUIRE(res.lhs / res.rhs == doctest::Approx(ratio).epsilon(1e-12));
    }
    // Tight as |t| grows.
    double prev = 0;
    for (double t : {1.0, 10.0, 100.0, 1000.0}) {
        auto res = dispersive_check(GaussianZeta{0.5, 2.0}, 3, t);
        CHECK(res.lhs / res.rhs > prev);
        prev = res.lhs / res.rhs;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("dispersive_check: quadrature matches the closed form and covers other profiles") {
    for (int d : {1, 2}) {
        GaussianZeta g{0.8, 1.5};
        const double t = 1.3;
        auto exact = dispersive_check(g, d, t);
        auto quad = dispersive_check([&](const double* x, const double* v) {
            double e = 0;
            for (int k = 0; k < d; ++k) e += g.a * x[k] * x[k] + g.b * v[k] * v[k];
            return std::exp(-e);
        }, d, t, DispersiveGrid{6, 6, d == 1 ? 400 : 64});
        CHECK(quad.lhs == doctest::Approx(exact.lhs).epsilon(2e-2));
        CHECK(quad.rhs == doctest::Approx(exact.rhs).epsilon(2e-2));
        CHECK(quad.holds);
    }
    auto r = dispersive_check([](const double* x, const double* v) {
        return std::exp(-std::abs(x[0]) - std::abs(x[1])) / (1 + v[0] * v[0] + v[1] * v[1]);
    }, 2, 0.7, DispersiveGrid{8, 8, 48});
    CHECK(r.holds);
    CHECK_THROWS_AS(dispersive_check([](const double*, const double*) { return 1.0; }, 3, 1.0, DispersiveGrid{}),
                    InputError);
}

TEST_CASE("BoltzmannReference: trivial depths, hypotheses and windows") {
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto cfg = SimConfig::from_scaling(2, 64, 2.0);
    BoltzmannSolveOptions opt;
    opt.series.M = 2000;
    BoltzmannReference ref(f0, cfg, plain_cut(), 2, opt);
    const double x[2] = {0.3, -0.2}, v[2] = {0.5, 0.1};
    CHECK(ref.value(0.0, x, v).value == f0.eval(x, v));
    CHECK(ref.value(0.0, x, v).std_err == 0.0);

    BoltzmannReference free(f0, cfg, plain_cut(), 0, opt);
    const double t = 0.7, y[2] = {x[0] - v[0] * t, x[1] - v[1] * t};
    CHECK(free.value(t, x, v).value == doctest::Approx(f0.eval(y, v)).epsilon(1e-14));

    CHECK_THROWS_AS(BoltzmannReference(DensitySpec::uniform_box(2, 0, 1, 1), cfg, plain_cut(), 2, opt), InputError);
    auto dense = SimConfig::from_scaling(2, 64, 0.2);
    BoltzmannReference local(f0, dense, plain_cut(), 2, opt);
    CHECK_FALSE(local.global());
    CHECK(local.windows(0.5 * local.local_time()).size() == 1);
    try {
        local.windows(2 * local.local_time());
        FAIL("expected a hypothesis error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("smallness condition") != std::string::npos);
    }
    // In d = 2 the global regime is covered by chained local windows.
    REQUIRE(ref.global());
    CHECK(ref.windows(2.5 * ref.local_time()).size() == 3);
    auto cfg3 = SimConfig::from_scaling(3, 64, 20.0);
    BoltzmannReference ref3(DensitySpec::gaussian(3, 1.0, 1.0), cfg3, plain_cut(), 2, opt);
    REQUIRE(ref3.global());
    CHECK(ref3.windows(10 * ref3.local_time()).size() == 1);
}

TEST_CASE("BoltzmannReference: depth terms contract in the near-vacuum regime") {
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto cfg = SimConfig::from_scaling(2, 64, 2.0);
    BoltzmannSolveOptions opt;
    opt.series.M = 4000;
    BoltzmannReference ref(f0, cfg, plain_cut(), 3, opt);
    REQUIRE(ref.smallness() < 0.05);
    std::vector<PhasePoint> probe;
    for (double a : {-1.0, 0.0, 1.0})
        for (double b : {-1.0, 0.0, 1.0}) {
            PhasePoint z(2, 1);
            z.x = {a, 0.5 * b};
            z.v = {b, -0.5 * a};
            probe.push_back(z);
        }
    for (double t : {0.25, 0.5}) {
        auto rep = ref.contraction(t, probe);
        CHECK(rep.probes == 9);
        CHECK(rep.max_ratio < 1.0);
        for (std::size_t k = 1; k < rep.magnitudes.size(); ++k) CHECK(rep.magnitudes[k] < rep.magnitudes[k - 1]);
    }
}

TEST_CASE("BoltzmannReference: chained windows agree with a single long window") {
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto cfg = SimConfig::from_scaling(2, 64, 0.6);
    BoltzmannSolveOptions opt;
    opt.series.M = 1500;
    opt.inner_samples = 48;
    BoltzmannReference ref(f0, cfg, plain_cut(), 3, opt);
    REQUIRE(ref.global());
    const double t = 1.5 * ref.local_time();
    REQUIRE(ref.windows(t).size() == 2);
    const double x[2] = {0.2, 0.1}, v[2] = {-0.3, 0.4};
    auto chained = ref.value(t, x, v);
    PhasePoint z(2, 1);
    z.x = {x[0], x[1]};
    z.v = {v[0], v[1]};
    SeriesOptions so;
    so.M = 60000;
    so.seed = 3;
    auto direct = duhamel_mc(z, t, 4, cfg, plain_cut(),
                             product_data([&](const double* p, const double* q) { return f0.eval(p, q); }),
                             Flavor::boltzmann(), so);
    // Truncation allowance: the last depth term of the chained series.
    const double trunc = std::abs(chained.per_depth.back().contribution);
    MESSAGE("chained " << chained.value << " +- " << chained.std_err << ", direct " << direct.value << " +- "
                       << direct.std_err);
    CHECK(std::abs(chained.value - direct.value) < 4 * std::hypot(chained.std_err, direct.std_err) + trunc);
}

TEST_CASE("tensorization of the Boltzmann hierarchy on product data") {
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto cfg = SimConfig::from_scaling(2, 64, 2.0);
    BoltzmannSolveOptions opt;
    opt.series.M = 400;
    opt.series.chunk = 400;
    BoltzmannReference ref(f0, cfg, plain_cut(), 2, opt);
    const double t = 0.5;
    Rng rng(17);
    double z2_sum = 0, worst = 0;
    const int probes = 1000;
    for (int i = 0; i < probes; ++i) {
        PhasePoint z(2, 2);
        for (auto& c : z.x) c = rng.normal();
        for (auto& c : z.v) c = rng.normal();
        // Independent streams, so the combined error is the sum of variances.
        const auto base = std::uint64_t(3 * i + 1);
        auto pair = ref.hierarchy_value(t, z, base);
        auto a = ref.value(t, z.pos(0), z.vel(0), base + 1);
        auto b = ref.value(t, z.pos(1), z.vel(1), base + 2);
        const double prod = a.value * b.value;
        const double se = std::sqrt(pair.std_err * pair.std_err + std::pow(a.std_err * b.value, 2) +
                                    std::pow(b.std_err * a.value, 2));
        const double zscore = (pair.value - prod) / se;
        z2_sum += zscore * zscore;
        worst = std::max(worst, std::abs(zscore));
    }
    MESSAGE("tensorization: mean z^2 " << z2_sum / probes << ", worst |z| " << worst);
    CHECK(z2_sum / probes < 1.3);
    CHECK(worst < 5.5);
}

TEST_CASE("weighted bound on evolved ensemble marginals") {
    // Gaussian data with (beta0, mu0) certificate; marginals at later times
    // obey the (beta0/2, mu0 - 1) bound with transported inertia.
    auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    auto cfg = SimConfig::from_scaling(2, 8, 20.0);
    const auto cert = *f0.weight_certificate();
    const WeightParams after{0.5 * cert.beta, cert.mu - 1};
    auto win = Window::uniform(2, -3, 3, 6, -3, 3, 6);
    for (double t : {0.0, 1.0, 5.0, 10.0}) {
        auto ens = evolve_ensemble(cfg, f0, t, 4000, FlowPolicy{}, 41);
        for (int s = 1; s <= 2; ++s) {
            auto est = estimate_marginal(ens.final, s, s == 1 ? win : Window::uniform(2, -3, 3, 3, -3, 3, 3), 56, 5);
            auto sup = marginal_weighted_sup(est, after, t);
            INFO("t = " << t << ", s = " << s << ", weighted sup " << sup.value);
            CHECK(sup.lower <= 1.0);
        }
    }
}

TEST_CASE("dispersive CSV layout") {
    std::ostringstream os;
    write_dispersive_csv_header(os);
    write_dispersive_csv_row(os, 2, 1, 1, 2, dispersive_check(GaussianZeta{1, 1}, 2, 2));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "# schema=1");
    std::getline(is, line);
    CHECK(line == "d,a,b,t,lhs,rhs,ratio,holds");
    std::getline(is, line);
    CHECK(line.rfind("2,1,1,2,0.6283185307179586", 0) == 0);
    CHECK(line.substr(line.size() - 2) == ",1");
}
