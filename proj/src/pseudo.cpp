#include "kinetic_chaos/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/parallel.hpp"
#include "kinetic_chaos/stats.hpp"

namespace kc {

std::string Flavor::name() const {
    switch (kind) {
        case FlavorKind::bbgky: return "bbgky";
        case FlavorKind::boltzmann: return "boltzmann";
        case FlavorKind::enskog: return "enskog" + std::to_string(m);
    }
    return "?";
}

void CreationSequence::validate(int s, double t, int d) const {
    double prev = t;
    for (int j = 0; j < k(); ++j) {
        const Creation& c = entries[std::size_t(j)];
        if (j == 0 ? !(c.t <= t) : !(c.t < prev)) throw InputError("creation times must be strictly decreasing and <= t");
        if (!(c.t >= 0)) throw InputError("creation times must be nonnegative");
        if (c.parent < 0 || c.parent >= s + j) throw InputError("creation parent index out of range");
        if (int(c.v.size()) != d || int(c.omega.size()) != d) throw InputError("creation vectors have the wrong dimension");
        if (std::abs(std::sqrt(norm2(c.omega.data(), d)) - 1.0) > 1e-12) throw InputError("creation direction must be unit");
        prev = c.t;
    }
}

namespace {

// Backward transport of z over dt for the given flavor. Returns false when
// the flow is not defined (overlap or degenerate event).
bool transport_back(PhasePoint& z, double dt, const SimConfig& cfg, const Flavor& fl, const FlowPolicy& pol) {
    if (dt <= 0) return true;
    if (fl.kind == FlavorKind::boltzmann) {
        for (std::size_t q = 0; q < z.x.size(); ++q) z.x[q] -= z.v[q] * dt;
        return true;
    }
    const int tracked = fl.kind == FlavorKind::bbgky ? z.size() : std::min(z.size(), fl.m - 1);
    try {
        z = evolve(z, dt, cfg.epsilon, tracked, pol, true).state;
    } catch (const DegenerateEventError&) {
        return false;
    } catch (const InputError&) {
        return false;
    }
    return true;
}

PseudoTrajectoryResult undefined_result(PhasePoint z) {
    PseudoTrajectoryResult r;
    r.final_state = std::move(z);
    r.undefined = true;
    r.kernel = 0.0;
    return r;
}

}  // namespace

PseudoTrajectoryResult build_pst(const PhasePoint& zs, double t, const CreationSequence& seq, const SimConfig& cfg,
                                 const Flavor& flavor, const FlowPolicy& policy) {
    const int d = zs.dim;
    const int s = zs.size();
    if (d != cfg.d) throw InputError("build_pst: dimension mismatch");
    if (!(t >= 0)) throw InputError("build_pst: t must be nonnegative");
    if (flavor.kind == FlavorKind::enskog && flavor.m < 1) throw InputError("build_pst: enskog m must be >= 1");
    seq.validate(s, t, d);

    const double eps = cfg.epsilon;
    PhasePoint z = zs;
    if (flavor.kind == FlavorKind::bbgky && !is_admissible(z, eps)) return undefined_result(z);

    PseudoTrajectoryResult res;
    res.kernel = 1.0;
    double now = t;
    for (const Creation& c : seq.entries) {
        if (!transport_back(z, now - c.t, cfg, flavor, policy)) return undefined_result(z);
        now = c.t;

        const int p = c.parent;
        double xn[kMaxDim], vn[kMaxDim];
        const double shift = flavor.kind == FlavorKind::boltzmann ? 0.0 : eps;
        for (int k = 0; k < d; ++k) {
            xn[k] = z.pos(p)[k] + shift * c.omega[k];
            vn[k] = c.v[std::size_t(k)];
        }
        if (flavor.kind == FlavorKind::bbgky) {
            for (int q = 0; q < z.size(); ++q) {
                if (q == p) continue;
                if (dist2(xn, z.pos(q), d) <= eps * eps) return undefined_result(z);
            }
        }
        double dv[kMaxDim];
        for (int k = 0; k < d; ++k) dv[k] = vn[k] - z.vel(p)[k];
        const double cw = dot(c.omega.data(), dv, d);
        res.kernel *= cw;
        const bool post = cw > 0;
        if (post) collide_in_place(z.vel(p), vn, c.omega.data(), d);
        res.post_collisional.push_back(post);
        z.push_back(xn, vn);
    }
    if (!transport_back(z, now, cfg, flavor, policy)) return undefined_result(z);
    res.final_state = std::move(z);
    return res;
}

double coefficient_a(long N, int k, int s, const SimConfig& cfg) {
    if (k < 0 || s < 0) throw InputError("coefficient_a: k and s must be nonnegative");
    if (long(s) + k > N) throw InputError("coefficient_a: requires s + k <= N");
    long double a = 1.0L;
    const long double per = (long double)N * (long double)cfg.ell;
    for (int j = 0; j < k; ++j) a *= (long double)(N - s - j) / per;
    return double(a);
}

namespace {

// Regularized lower incomplete gamma P(a, x) for a in {1/2, 1, 3/2, ...}.
double gamma_p_half_integer(double a, double x) {
    if (x <= 0) return 0.0;
    double p, cur;
    if (std::abs(a - std::round(a)) < 1e-12) {
        p = -std::expm1(-x);
        cur = 1.0;
    } else {
        p = std::erf(std::sqrt(x));
        cur = 0.5;
    }
    // P(b+1, x) = P(b, x) - x^b e^{-x} / Gamma(b+1)
    while (cur + 0.5 < a) {
        p -= std::exp(cur * std::log(x) - x - std::lgamma(cur + 1.0));
        cur += 1.0;
    }
    return std::clamp(p, 0.0, 1.0);
}

// Isotropic Gaussian N(0, I/beta), optionally truncated to |v| <= radius.
struct Proposal {
    int d = 2;
    double beta = 1.0;
    double radius = std::numeric_limits<double>::infinity();
    double log_norm = 0.0;  // log of the density normalizer

    Proposal(int d_, double beta_, double radius_) : d(d_), beta(beta_), radius(radius_) {
        log_norm = 0.5 * d * std::log(beta / (2.0 * M_PI));
        if (std::isfinite(radius)) {
            const double mass = gamma_p_half_integer(0.5 * d, 0.5 * beta * radius * radius);
            if (!(mass > 1e-6)) throw InputError("velocity proposal: truncation ball has negligible mass");
            log_norm -= std::log(mass);
        }
    }
    void draw(Rng& rng, double* v) const {
        const double sd = 1.0 / std::sqrt(beta);
        for (;;) {
            for (int k = 0; k < d; ++k) v[k] = sd * rng.normal();
            if (!std::isfinite(radius) || norm2(v, d) <= radius * radius) return;
        }
    }
    double density(const double* v) const { return std::exp(log_norm - 0.5 * beta * norm2(v, d)); }
};

struct SeriesJob {
    int s, d, n;
    double t;
    const SimConfig* cfg;
    const CutoffParams* cut;
    const HierarchyData* data;
    Flavor flavor;
    const SeriesOptions* opt;
    const PhasePoint* fixed;
    const PointSampler* sampler;
};

double one_sample(const SeriesJob& job, int k, const Proposal& prop, double prefactor, Rng& rng) {
    const int d = job.d;
    PhasePoint z = job.fixed ? *job.fixed : (*job.sampler)(rng);
    CreationSequence seq;
    seq.entries.resize(std::size_t(k));
    std::vector<double> times(static_cast<std::size_t>(k));
    for (auto& tj : times) tj = rng.uniform(0.0, job.t);
    std::sort(times.begin(), times.end(), std::greater<>());
    double w = prefactor;
    const double area = sphere_area(d);
    for (int j = 0; j < k; ++j) {
        Creation& c = seq.entries[std::size_t(j)];
        c.t = times[std::size_t(j)];
        c.v.resize(std::size_t(d));
        c.omega.resize(std::size_t(d));
        const int parents = job.s + j;
        c.parent = int(rng.below(std::uint64_t(parents)));
        rng.unit_vector(c.omega.data(), d);
        prop.draw(rng, c.v.data());
        w *= double(parents) * area / prop.density(c.v.data());
    }
    // Ties in the sorted times have probability zero; treat them as undefined.
    for (int j = 1; j < k; ++j)
        if (!(times[std::size_t(j)] < times[std::size_t(j - 1)])) return 0.0;
    const PseudoTrajectoryResult r = build_pst(z, job.t, seq, *job.cfg, job.flavor, job.opt->policy);
    if (r.undefined || r.kernel == 0.0) return 0.0;
    w *= r.kernel;
    if (job.cut->chi != ChiProfile::none) {
        const double e = functionals(r.final_state).energy;
        const double c = chi(job.cut->chi, e / (job.cut->R * job.cut->R));
        if (c == 0.0) return 0.0;
        w *= c;
    }
    return w * job.data->eval(r.final_state);
}

SeriesEstimate run_series(const SeriesJob& job) {
    const SeriesOptions& opt = *job.opt;
    if (job.n < 0) throw InputError("duhamel_mc: depth n must be nonnegative");
    if (opt.M <= 0) throw InputError("duhamel_mc: M must be positive");
    if (!(job.cut->R > 0)) throw InputError("duhamel_mc: R must be positive");
    if (!(job.t >= 0)) throw InputError("duhamel_mc: t must be nonnegative");
    if (!(opt.proposal_beta > 0)) throw InputError("duhamel_mc: proposal_beta must be positive");
    if (opt.chunk <= 0) throw InputError("duhamel_mc: chunk must be positive");
    if (!job.data->eval) throw InputError("duhamel_mc: data has no evaluator");
    if (job.d != job.cfg->d) throw InputError("duhamel_mc: dimension mismatch");
    job.cfg->validate();
    if (job.flavor.kind == FlavorKind::enskog && job.flavor.m < 1) throw InputError("duhamel_mc: enskog m must be >= 1");

    const double radius = job.cut->chi == ChiProfile::none ? std::numeric_limits<double>::infinity() : 2.0 * job.cut->R;
    const Proposal prop(job.d, opt.proposal_beta, radius);

    // Depths that contribute: data must be available, and bbgky terminates at N.
    std::vector<double> prefactor(std::size_t(job.n) + 1, 0.0);
    double fact = 1.0;
    for (int k = 0; k <= job.n; ++k) {
        if (k > 0) fact *= double(k);
        if (job.flavor.kind == FlavorKind::bbgky && long(job.s) + k > job.cfg->N) continue;
        if (job.s + k > job.data->max_particles) throw InputError("duhamel_mc: data unavailable at this depth");
        const double coef = job.flavor.kind == FlavorKind::bbgky ? coefficient_a(job.cfg->N, k, job.s, *job.cfg)
                                                                 : std::pow(job.cfg->ell, -double(k));
        prefactor[std::size_t(k)] = coef * std::pow(job.t, double(k)) / fact;
    }

    struct Task {
        int k;
        long first, count;
    };
    std::vector<Task> tasks;
    for (int k = 0; k <= job.n; ++k) {
        const bool deterministic = k == 0 && job.fixed;
        const long M = deterministic ? 1 : opt.M;
        for (long first = 0; first < M; first += opt.chunk) tasks.push_back({k, first, std::min(opt.chunk, M - first)});
    }
    std::vector<RunningStats> out(tasks.size()), mag(tasks.size());
    run_tasks(tasks.size(), resolve_workers(opt.workers), [&](std::size_t ti) {
        const Task& task = tasks[ti];
        const double pre = prefactor[std::size_t(task.k)];
        Rng rng = Rng::stream(opt.seed, (std::uint64_t(task.k) << 40) + std::uint64_t(task.first / opt.chunk));
        RunningStats st, ab;
        for (long i = 0; i < task.count; ++i) {
            const double w = pre == 0.0 ? 0.0 : one_sample(job, task.k, prop, pre, rng);
            st.add(w);
            ab.add(std::abs(w));
        }
        out[ti] = st;
        mag[ti] = ab;
    });

    SeriesEstimate est;
    double var = 0;
    for (int k = 0; k <= job.n; ++k) {
        RunningStats acc, ab;
        for (std::size_t ti = 0; ti < tasks.size(); ++ti)
            if (tasks[ti].k == k) {
                acc.merge(out[ti]);
                ab.merge(mag[ti]);
            }
        DepthTerm term;
        term.k = k;
        term.contribution = acc.mean;
        term.magnitude = ab.mean;
        term.std_err = acc.stderr_mean();
        term.samples = acc.n;
        est.per_depth.push_back(term);
        est.value += term.contribution;
        var += term.std_err * term.std_err;
        est.samples += acc.n;
    }
    est.std_err = std::sqrt(var);
    return est;
}

}  // namespace

SeriesEstimate duhamel_mc(const PhasePoint& zs, double t, int n, const SimConfig& cfg, const CutoffParams& cut,
                          const HierarchyData& data, const Flavor& flavor, const SeriesOptions& opt) {
    SeriesJob job{zs.size(), zs.dim, n, t, &cfg, &cut, &data, flavor, &opt, &zs, nullptr};
    return run_series(job);
}

SeriesEstimate duhamel_mc_sampled(const PointSampler& sampler, int s, int d, double t, int n, const SimConfig& cfg,
                                  const CutoffParams& cut, const HierarchyData& data, const Flavor& flavor,
                                  const SeriesOptions& opt) {
    if (!sampler) throw InputError("duhamel_mc_sampled: sampler is empty");
    if (s < 1) throw InputError("duhamel_mc_sampled: s must be positive");
    SeriesJob job{s, d, n, t, &cfg, &cut, &data, flavor, &opt, nullptr, &sampler};
    return run_series(job);
}

namespace {

// Truncated product of per-depth series: sum over k_1+...+k_r <= n of prod c_a[k_a].
double truncated_product(const std::vector<std::vector<double>>& series, int n) {
    std::vector<double> acc(std::size_t(n) + 1, 0.0);
    acc[0] = 1.0;
    for (const auto& c : series) {
        std::vector<double> next(std::size_t(n) + 1, 0.0);
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n && j < int(c.size()); ++j) next[std::size_t(i + j)] += acc[std::size_t(i)] * c[std::size_t(j)];
        acc.swap(next);
    }
    double total = 0;
    for (double a : acc) total += a;
    return total;
}

std::vector<double> contributions(const SeriesEstimate& e) {
    std::vector<double> c;
    for (const auto& t : e.per_depth) c.push_back(t.contribution);
    return c;
}

}  // namespace

FactorizationResidual enskog_factorization_residual(
    const PhasePoint& zs, double t, int n, const SimConfig& cfg,
    const std::function<double(const double*, const double*, const double*, const double*)>& g2,
    const std::function<double(const double*, const double*)>& g1, int m, const SeriesOptions& opt) {
    const int s = zs.size();
    const int d = zs.dim;
    if (s < 3) throw InputError("enskog_factorization_residual: needs s >= 3");
    if (m < 3) throw InputError("enskog_factorization_residual: needs m >= 3");
    if (!g2 || !g1) throw InputError("enskog_factorization_residual: data functions missing");

    CutoffParams cut;
    cut.chi = ChiProfile::none;

    HierarchyData full;
    full.eval = [&](const PhasePoint& z) {
        double p = g2(z.pos(0), z.vel(0), z.pos(1), z.vel(1));
        for (int i = 2; i < z.size() && p != 0.0; ++i) p *= g1(z.pos(i), z.vel(i));
        return p;
    };
    const HierarchyData single = product_data(g1);

    SeriesOptions o = opt;
    const SeriesEstimate est_full = duhamel_mc(zs, t, n, cfg, cut, full, Flavor::enskog(m), o);

    std::vector<SeriesEstimate> factors;
    PhasePoint pair(d, 2);
    std::copy(zs.x.begin(), zs.x.begin() + 2 * d, pair.x.begin());
    std::copy(zs.v.begin(), zs.v.begin() + 2 * d, pair.v.begin());
    o.seed = stream_seed(opt.seed, 1);
    factors.push_back(duhamel_mc(pair, t, n, cfg, cut, full, Flavor::enskog(m), o));
    for (int i = 2; i < s; ++i) {
        PhasePoint one(d, 1);
        std::copy(zs.pos(i), zs.pos(i) + d, one.x.begin());
        std::copy(zs.vel(i), zs.vel(i) + d, one.v.begin());
        o.seed = stream_seed(opt.seed, std::uint64_t(i));
        factors.push_back(duhamel_mc(one, t, n, cfg, cut, single, Flavor::enskog(2), o));
    }

    std::vector<std::vector<double>> c;
    for (const auto& f : factors) c.push_back(contributions(f));
    FactorizationResidual r;
    r.full = est_full.value;
    r.product = truncated_product(c, n);
    r.residual = r.full - r.product;

    // Delta method: the factor estimates are independent of each other and of the full one.
    double var = est_full.std_err * est_full.std_err;
    for (std::size_t a = 0; a < c.size(); ++a) {
        for (std::size_t k = 0; k < c[a].size(); ++k) {
            const double se = factors[a].per_depth[k].std_err;
            if (se == 0.0) continue;
            auto unit = c;
            std::fill(unit[a].begin(), unit[a].end(), 0.0);
            unit[a][k] = 1.0;
            const double deriv = truncated_product(unit, n);
            var += deriv * deriv * se * se;
        }
    }
    r.std_err = std::sqrt(var);
    return r;
}

void write_series_csv_header(std::ostream& os) {
    os << "# schema=1\n";
    os << "flavor,s,k,t,value,stderr,samples\n";
}

void write_series_csv_rows(std::ostream& os, const Flavor& flavor, int s, double t, const SeriesEstimate& est) {
    std::ostringstream buf;
    buf.precision(17);
    for (const auto& term : est.per_depth)
        buf << flavor.name() << ',' << s << ',' << term.k << ',' << t << ',' << term.contribution << ',' << term.std_err
            << ',' << term.samples << '\n';
    buf << flavor.name() << ',' << s << ",-1," << t << ',' << est.value << ',' << est.std_err << ',' << est.samples
        << '\n';
    os << buf.str();
}

}  // namespace kc
