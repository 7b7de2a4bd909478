#include "kinetic_chaos/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/parallel.hpp"

namespace kc {

PhasePoint sample_initial(const SimConfig& cfg, const DensitySpec& f0, Rng& rng, const SamplerOptions& opt) {
    if (f0.d != cfg.d) throw InputError("density dimension differs from the configuration");
    const int d = cfg.d;
    const int N = int(cfg.N);
    const double eps2 = cfg.epsilon * cfg.epsilon;
    const long limit = long(std::ceil(20.0 / opt.acceptance_floor));
    PhasePoint z(d, N);
    for (long attempt = 0;; ++attempt) {
        if (attempt >= limit)
            throw InputError("initial-data acceptance probability is below the configured floor; "
                             "use a smaller diameter or fewer particles");
        bool ok = true;
        for (int i = 0; i < N && ok; ++i) {
            f0.sample(rng, z.pos(i), z.vel(i));
            for (int j = 0; j < i && ok; ++j) ok = dist2(z.pos(i), z.pos(j), d) > eps2;
        }
        if (ok) return z;
    }
}

PartitionEstimate estimate_partition(int s, const SimConfig& cfg, const DensitySpec& f0, long M, Rng& rng) {
    if (M < 100) throw InputError("estimate_partition needs at least 100 draws");
    if (s < 1 || s > cfg.N) throw InputError("estimate_partition: s must lie in [1, N]");
    PartitionEstimate p;
    p.s = s;
    p.samples = M;
    if (s == 1 || cfg.epsilon == 0.0) return p;
    const int d = cfg.d;
    const double eps2 = cfg.epsilon * cfg.epsilon;
    std::vector<double> x(std::size_t(s) * d);
    long hits = 0;
    for (long m = 0; m < M; ++m) {
        bool ok = true;
        for (int i = 0; i < s && ok; ++i) {
            f0.sample_position(rng, &x[std::size_t(i) * d]);
            for (int j = 0; j < i && ok; ++j) ok = dist2(&x[std::size_t(i) * d], &x[std::size_t(j) * d], d) > eps2;
        }
        hits += ok;
    }
    p.value = double(hits) / double(M);
    p.std_err = std::sqrt(p.value * (1 - p.value) / double(M));
    return p;
}

HierarchyData conditioned_marginals(const SimConfig& cfg, const DensitySpec& f0, double partition_N, long inner_draws,
                                    std::uint64_t seed) {
    if (!(partition_N > 0)) throw InputError("conditioned_marginals: partition value must be positive");
    if (inner_draws <= 0) throw InputError("conditioned_marginals: inner_draws must be positive");
    HierarchyData h;
    h.max_particles = int(std::min<long>(cfg.N, INT_MAX));
    h.eval = [cfg, f0, partition_N, inner_draws, seed](const PhasePoint& z) {
        const int s = z.size(), d = z.dim;
        if (s > cfg.N) throw InputError("conditioned_marginals: more particles than N");
        if (!is_admissible(z, cfg.epsilon, 0.0)) return 0.0;
        double prod = 1;
        for (int i = 0; i < s; ++i) prod *= f0.eval(z.pos(i), z.vel(i));
        if (prod == 0.0 || s == cfg.N) return prod / partition_N;
        std::uint64_t h = seed;
        for (double c : z.x) {
            std::uint64_t b;
            std::memcpy(&b, &c, sizeof b);
            h = mix64(h ^ b);
        }
        Rng rng(h);
        const int rest = int(cfg.N) - s;
        const double eps2 = cfg.epsilon * cfg.epsilon;
        std::vector<double> x(std::size_t(rest) * d);
        long hits = 0;
        for (long m = 0; m < inner_draws; ++m) {
            bool ok = true;
            for (int i = 0; i < rest && ok; ++i) {
                double* xi = &x[std::size_t(i) * d];
                f0.sample_position(rng, xi);
                for (int j = 0; j < s && ok; ++j) ok = dist2(xi, z.pos(j), d) > eps2;
                for (int j = 0; j < i && ok; ++j) ok = dist2(xi, &x[std::size_t(j) * d], d) > eps2;
            }
            hits += ok;
        }
        return prod * (double(hits) / double(inner_draws)) / partition_N;
    };
    return h;
}

double conditioning_constant(const SimConfig& cfg, const DensitySpec& f0) {
    return unit_ball_volume(cfg.d) * f0.linf_l1_norm() * cfg.epsilon / cfg.ell;
}

Ensemble evolve_ensemble(const SimConfig& cfg, const DensitySpec& f0, double t, long M, const FlowPolicy& policy,
                         std::uint64_t seed, int workers, const SamplerOptions& opt) {
    if (!(t >= 0)) throw InputError("evolve_ensemble: t must be nonnegative");
    Ensemble ens;
    ens.t = t;
    ens.initial.resize(M);
    ens.final.resize(M);
    std::vector<long> events(M, 0), perturb(M, 0);
    run_tasks(std::size_t(M), resolve_workers(workers), [&](std::size_t r) {
        Rng rng = Rng::stream(seed, r);
        ens.initial[r] = sample_initial(cfg, f0, rng, opt);
        if (t == 0.0) {
            ens.final[r] = ens.initial[r];
            return;
        }
        FlowPolicy p = policy;
        p.perturb_seed = stream_seed(seed ^ 0x70e57a11ULL, r);
        auto res = advance(ens.initial[r], t, cfg, p);
        ens.final[r] = std::move(res.state);
        events[r] = long(res.log.events.size());
        perturb[r] = res.log.perturbations;
    });
    for (long r = 0; r < M; ++r) {
        ens.events += events[r];
        ens.perturbations += perturb[r];
    }
    return ens;
}

Window Window::uniform(int d, double x_lo, double x_hi, int x_bins, double v_lo, double v_hi, int v_bins) {
    Window w;
    for (int k = 0; k < d; ++k) {
        w.lo.push_back(x_lo);
        w.hi.push_back(x_hi);
        w.bins.push_back(x_bins);
    }
    for (int k = 0; k < d; ++k) {
        w.lo.push_back(v_lo);
        w.hi.push_back(v_hi);
        w.bins.push_back(v_bins);
    }
    return w;
}

void Window::validate() const {
    if (lo.empty() || lo.size() % 2 || hi.size() != lo.size() || bins.size() != lo.size())
        throw InputError("window needs 2d axes with bounds and bin counts");
    for (std::size_t a = 0; a < lo.size(); ++a)
        if (!(hi[a] > lo[a]) || bins[a] < 1) throw InputError("empty window");
}

std::size_t MarginalEstimate::cells_per_particle() const {
    std::size_t c = 1;
    for (int b : window.bins) c *= std::size_t(b);
    return c;
}

double MarginalEstimate::cell_volume() const {
    double v = 1;
    for (std::size_t a = 0; a < window.lo.size(); ++a) v *= (window.hi[a] - window.lo[a]) / window.bins[a];
    return std::pow(v, s);
}

std::vector<std::size_t> MarginalEstimate::split(std::size_t cell) const {
    const std::size_t c = cells_per_particle();
    std::vector<std::size_t> out(s);
    for (int p = s - 1; p >= 0; --p) {
        out[p] = cell % c;
        cell /= c;
    }
    return out;
}

void MarginalEstimate::single_cell_bounds(std::size_t single, double* lo, double* hi) const {
    const int axes = int(window.lo.size());
    for (int a = axes - 1; a >= 0; --a) {
        const std::size_t idx = single % std::size_t(window.bins[a]);
        single /= std::size_t(window.bins[a]);
        const double w = (window.hi[a] - window.lo[a]) / window.bins[a];
        lo[a] = window.lo[a] + w * double(idx);
        hi[a] = lo[a] + w;
    }
}

PhasePoint MarginalEstimate::cell_center(std::size_t cell) const {
    PhasePoint z(d, s);
    double lo[2 * kMaxDim], hi[2 * kMaxDim];
    auto parts = split(cell);
    for (int p = 0; p < s; ++p) {
        single_cell_bounds(parts[p], lo, hi);
        for (int k = 0; k < d; ++k) {
            z.pos(p)[k] = 0.5 * (lo[k] + hi[k]);
            z.vel(p)[k] = 0.5 * (lo[d + k] + hi[d + k]);
        }
    }
    return z;
}

double MarginalEstimate::total_mass() const {
    double m = 0;
    for (double v : values) m += v;
    return m * cell_volume();
}

double MarginalEstimate::total_stderr() const {
    double e = 0;
    for (double v : std_err) e += v;
    return e * cell_volume();
}

namespace {

// Single-particle cell of (x, v), or -1 outside the window.
long locate(const Window& w, const double* x, const double* v, int d) {
    long idx = 0;
    for (int a = 0; a < 2 * d; ++a) {
        const double c = a < d ? x[a] : v[a - d];
        const double u = (c - w.lo[a]) / (w.hi[a] - w.lo[a]);
        if (!(u >= 0.0) || !(u < 1.0)) return -1;
        long b = long(u * w.bins[a]);
        if (b >= w.bins[a]) b = w.bins[a] - 1;
        idx = idx * w.bins[a] + b;
    }
    return idx;
}

double falling_factorial(long n, int s) {
    double r = 1;
    for (int j = 0; j < s; ++j) r *= double(n - j);
    return r;
}

}  // namespace

MarginalEstimate estimate_marginal(const std::vector<PhasePoint>& ensemble, int s, const Window& window,
                                   long max_injections, std::uint64_t seed) {
    window.validate();
    if (ensemble.empty()) throw InputError("estimate_marginal: empty ensemble");
    const int d = ensemble.front().dim;
    const int N = ensemble.front().size();
    if (window.dim() != d) throw InputError("window dimension differs from the ensemble");
    if (s < 1 || s > N) throw InputError("estimate_marginal: s must lie in [1, N]");

    MarginalEstimate est;
    est.s = s;
    est.d = d;
    est.window = window;
    est.ensemble_size = long(ensemble.size());
    const std::size_t per = est.cells_per_particle();
    std::size_t total = 1;
    for (int p = 0; p < s; ++p) total *= per;
    est.values.assign(total, 0.0);
    est.std_err.assign(total, 0.0);
    std::vector<double> sumsq(total, 0.0);

    const bool enumerate = falling_factorial(N, s) <= double(max_injections);
    std::vector<std::vector<int>> tuples;
    if (enumerate) {
        std::vector<int> t(s, 0);
        std::function<void(int)> rec = [&](int depth) {
            if (depth == s) {
                tuples.push_back(t);
                return;
            }
            for (int i = 0; i < N; ++i) {
                if (std::find(t.begin(), t.begin() + depth, i) != t.begin() + depth) continue;
                t[depth] = i;
                rec(depth + 1);
            }
        };
        rec(0);
    }
    est.injections = enumerate ? long(tuples.size()) : max_injections;
    const double inv_inj = 1.0 / double(est.injections);

    std::vector<long> single(N);
    std::vector<std::size_t> ids;
    std::vector<int> t(s);
    for (std::size_t r = 0; r < ensemble.size(); ++r) {
        const PhasePoint& z = ensemble[r];
        for (int i = 0; i < N; ++i) single[i] = locate(window, z.pos(i), z.vel(i), d);
        ids.clear();
        auto push = [&](const std::vector<int>& tup) {
            std::size_t id = 0;
            for (int p = 0; p < s; ++p) {
                if (single[tup[p]] < 0) return;
                id = id * per + std::size_t(single[tup[p]]);
            }
            ids.push_back(id);
        };
        if (enumerate) {
            for (const auto& tup : tuples) push(tup);
        } else {
            Rng rng = Rng::stream(seed, r);
            for (long m = 0; m < max_injections; ++m) {
                for (int p = 0; p < s; ++p) {
                    int i;
                    do {
                        i = int(rng.below(N));
                    } while (std::find(t.begin(), t.begin() + p, i) != t.begin() + p);
                    t[p] = i;
                }
                push(t);
            }
        }
        std::sort(ids.begin(), ids.end());
        for (std::size_t a = 0; a < ids.size();) {
            std::size_t b = a;
            while (b < ids.size() && ids[b] == ids[a]) ++b;
            const double c = double(b - a) * inv_inj;
            est.values[ids[a]] += c;
            sumsq[ids[a]] += c * c;
            a = b;
        }
    }
    const double M = double(ensemble.size());
    const double vol = est.cell_volume();
    for (std::size_t c = 0; c < total; ++c) {
        const double mean = est.values[c] / M;
        const double var = M > 1 ? std::max(0.0, (sumsq[c] - M * mean * mean) / (M - 1)) : 0.0;
        est.values[c] = mean / vol;
        est.std_err[c] = std::sqrt(var / M) / vol;
    }
    return est;
}

CellReference reference_at_centers(std::function<double(const PhasePoint&)> f) {
    return [f = std::move(f)](const MarginalEstimate& est, std::size_t cell) {
        return std::pair<double, double>{f(est.cell_center(cell)), 0.0};
    };
}

ChaosError chaos_error(const MarginalEstimate& est, const CellReference& ref, const CutoffParams& cut,
                       const SimConfig& cfg) {
    const double eta = cut.eta_for(cfg);
    const double e_max = cut.R * cut.R;
    ChaosError out;
    for (std::size_t c = 0; c < est.cell_count(); ++c) {
        PhasePoint z = est.cell_center(c);
        if (functionals(z).energy > e_max) continue;
        if (!is_admissible(z, cfg.epsilon, 0.0)) continue;
        if (!in_K(z, cfg.epsilon, cut.set_slack) || !in_U_eta(z, eta, cut.set_slack)) continue;
        auto [rv, rs] = ref(est, c);
        const double err = std::abs(est.values[c] - rv);
        ++out.points_tested;
        if (out.points_tested == 1 || err > out.sup_error) {
            out.sup_error = err;
            out.stderr_at_sup = std::sqrt(est.std_err[c] * est.std_err[c] + rs * rs);
            out.argmax_cell = c;
        }
    }
    if (out.points_tested == 0)
        throw InputError("chaos_error: no cell center passes the good-set and energy tests; widen the window or cutoff");
    return out;
}

void write_marginal_csv(std::ostream& os, const std::string& experiment, const MarginalEstimate& est) {
    os << "# schema=1\n";
    os << "experiment,s,cell";
    for (int p = 0; p < est.s; ++p) {
        for (int k = 0; k < est.d; ++k) os << ",p" << p << "_x" << k;
        for (int k = 0; k < est.d; ++k) os << ",p" << p << "_v" << k;
    }
    os << ",value,stderr\n";
    os.precision(12);
    for (std::size_t c = 0; c < est.cell_count(); ++c) {
        if (est.values[c] == 0.0) continue;
        PhasePoint z = est.cell_center(c);
        os << experiment << ',' << est.s << ',' << c;
        for (int p = 0; p < est.s; ++p) {
            for (int k = 0; k < est.d; ++k) os << ',' << z.pos(p)[k];
            for (int k = 0; k < est.d; ++k) os << ',' << z.vel(p)[k];
        }
        os << ',' << est.values[c] << ',' << est.std_err[c] << '\n';
    }
}

void write_partition_csv_header(std::ostream& os) {
    os << "# schema=1\n";
    os << "experiment,N,s,value,stderr,samples\n";
}

void write_partition_csv_row(std::ostream& os, const std::string& experiment, long N, const PartitionEstimate& p) {
    os.precision(12);
    os << experiment << ',' << N << ',' << p.s << ',' << p.value << ',' << p.std_err << ',' << p.samples << '\n';
}

}  // namespace kc
