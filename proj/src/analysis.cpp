#include "kinetic_chaos/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/rng.hpp"
#include "kinetic_chaos/stats.hpp"

namespace kc {

namespace {

double log_weight(const PhasePoint& z, const WeightParams& w) {
    return w.beta * functionals(z).energy + w.mu * z.size();
}

double transported_inertia(const PhasePoint& z, double t) {
    double s = 0;
    for (std::size_t q = 0; q < z.x.size(); ++q) {
        const double y = z.x[q] - z.v[q] * t;
        s += y * y;
    }
    return 0.5 * s;
}

double factorial(int s) {
    double f = 1;
    for (int j = 2; j <= s; ++j) f *= j;
    return f;
}

}  // namespace

double weighted_sup_norm(const HierarchyData& F, const WeightParams& w, const std::vector<PhasePoint>& probe) {
    double best = 0;
    for (const auto& z : probe) best = std::max(best, std::abs(F(z)) * std::exp(log_weight(z, w)));
    return best;
}

double transported_weighted_sup_norm(const HierarchyData& F, const WeightParams& w,
                                     const std::vector<PhasePoint>& probe, double t) {
    double best = 0;
    for (const auto& z : probe)
        best = std::max(best, std::abs(F(z)) * std::exp(log_weight(z, w) + w.beta * transported_inertia(z, t)));
    return best;
}

namespace {

// min over x in [xa, xb], v in [va, vb] of v^2 + (x - v t)^2. The inner
// minimum over x is convex in v, so golden-section search is exact enough.
double min_coordinate_weight(double xa, double xb, double va, double vb, double t) {
    auto inner = [&](double v) {
        const double y = v * t, gap = y < xa ? xa - y : (y > xb ? y - xb : 0.0);
        return v * v + gap * gap;
    };
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    double a = va, b = vb;
    double c = b - g * (b - a), d = a + g * (b - a);
    for (int it = 0; it < 80; ++it) {
        if (inner(c) < inner(d)) b = d;
        else a = c;
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return std::min({inner(0.5 * (a + b)), inner(va), inner(vb)});
}

}  // namespace

WeightedSup marginal_weighted_sup(const MarginalEstimate& est, const WeightParams& w, double t, double sigmas) {
    WeightedSup out;
    const int d = est.d;
    std::vector<double> lo(std::size_t(2 * d)), hi(std::size_t(2 * d));
    for (std::size_t c = 0; c < est.cell_count(); ++c) {
        double exponent = w.mu * est.s;
        for (std::size_t single : est.split(c)) {
            est.single_cell_bounds(single, lo.data(), hi.data());
            for (int k = 0; k < d; ++k)
                exponent += 0.5 * w.beta *
                            min_coordinate_weight(lo[std::size_t(k)], hi[std::size_t(k)], lo[std::size_t(d + k)],
                                                  hi[std::size_t(d + k)], t);
        }
        const double wt = std::exp(exponent);
        const double val = std::abs(est.values[c]) * wt;
        if (c == 0 || val > out.value) {
            out.value = val;
            out.std_err = est.std_err[c] * wt;
            out.argmax = c;
        }
        out.lower = std::max(out.lower, (std::abs(est.values[c]) - sigmas * est.std_err[c]) * wt);
    }
    return out;
}

double QuadratureSpec::window_volume(int s) const {
    return std::pow((x_hi - x_lo) * (v_hi - v_lo), double(d) * s);
}

void QuadratureSpec::validate() const {
    if (!(x_hi > x_lo) || !(v_hi > v_lo)) throw InputError("quadrature: empty window");
    if (d < 1 || d > kMaxDim) throw InputError("quadrature: unsupported dimension");
    if (M <= 0) throw InputError("quadrature: M must be positive");
    if (!(epsilon >= 0)) throw InputError("quadrature: epsilon must be nonnegative");
}

std::vector<PhasePoint> quadrature_points(const QuadratureSpec& q, int s) {
    q.validate();
    Rng rng = Rng::stream(q.seed, std::uint64_t(s));
    std::vector<PhasePoint> pts;
    pts.reserve(std::size_t(q.M));
    for (long i = 0; i < q.M; ++i) {
        PhasePoint z(q.d, s);
        for (auto& c : z.x) c = rng.uniform(q.x_lo, q.x_hi);
        for (auto& c : z.v) c = rng.uniform(q.v_lo, q.v_hi);
        pts.push_back(std::move(z));
    }
    return pts;
}

namespace {

template <class F>
QuadratureValue integrate_levels(int depth, const QuadratureSpec& q, int max_particles, F&& integrand) {
    QuadratureValue out;
    double var = 0;
    for (int s = 1; s <= std::min(depth, max_particles); ++s) {
        RunningStats st;
        for (const auto& z : quadrature_points(q, s)) st.add(is_admissible(z, q.epsilon, 0.0) ? integrand(z) : 0.0);
        const double scale = q.window_volume(s) / factorial(s);
        out.value += scale * st.mean;
        var += scale * scale * st.stderr_mean() * st.stderr_mean();
    }
    out.std_err = std::sqrt(var);
    return out;
}

}  // namespace

QuadratureValue duality_bracket(const HierarchyData& phi, const HierarchyData& F, int depth, const QuadratureSpec& q) {
    return integrate_levels(depth, q, std::min(phi.max_particles, F.max_particles),
                            [&](const PhasePoint& z) { return phi(z) * F(z); });
}

QuadratureValue weighted_l1_norm(const HierarchyData& phi, const WeightParams& w, int depth, const QuadratureSpec& q) {
    return integrate_levels(depth, q, phi.max_particles,
                            [&](const PhasePoint& z) { return std::abs(phi(z)) * std::exp(-log_weight(z, w)); });
}

double quadrature_sup_norm(const HierarchyData& F, const WeightParams& w, int depth, const QuadratureSpec& q) {
    double best = 0;
    for (int s = 1; s <= std::min(depth, F.max_particles); ++s)
        for (const auto& z : quadrature_points(q, s))
            if (is_admissible(z, q.epsilon, 0.0)) best = std::max(best, std::abs(F(z)) * std::exp(log_weight(z, w)));
    return best;
}

DispersiveResult dispersive_check(const GaussianZeta& zeta, int d, double t) {
    if (t == 0.0) throw InputError("dispersive_check: t = 0 leaves the right side undefined");
    if (!(zeta.a > 0) || !(zeta.b > 0)) throw InputError("dispersive_check: Gaussian widths must be positive");
    if (d < 1) throw InputError("dispersive_check: dimension must be positive");
    const double pi = std::numbers::pi;
    DispersiveResult r;
    r.lhs = std::pow(pi / (zeta.a * t * t + zeta.b), 0.5 * d);
    r.rhs = std::pow(std::abs(t), -double(d)) * std::pow(pi / zeta.a, 0.5 * d);
    r.holds = r.lhs <= r.rhs * (1 + 1e-9);
    return r;
}

DispersiveResult dispersive_check(const std::function<double(const double* x, const double* v)>& zeta, int d,
                                  double t, const DispersiveGrid& grid) {
    if (t == 0.0) throw InputError("dispersive_check: t = 0 leaves the right side undefined");
    if (d < 1 || d > 2) throw InputError("dispersive_check: quadrature supports d = 1 or 2");
    if (grid.n < 2 || !(grid.x_half > 0) || !(grid.v_half > 0)) throw InputError("dispersive_check: bad grid");
    const int n = grid.n;
    const double hx = 2 * grid.x_half / n, hv = 2 * grid.v_half / n;
    auto node = [&](double half, double h, int i) { return -half + (i + 0.5) * h; };
    const long cells = d == 1 ? n : long(n) * n;
    auto fill = [&](long idx, double half, double h, double* out) {
        out[0] = node(half, h, int(idx % n));
        if (d == 2) out[1] = node(half, h, int(idx / n));
    };
    DispersiveResult r;
    double x[2], v[2], y[2];
    for (long i = 0; i < cells; ++i) {
        fill(i, grid.x_half, hx, x);
        double sup_v = 0;
        for (long j = 0; j < cells; ++j) {
            fill(j, grid.v_half, hv, v);
            sup_v = std::max(sup_v, std::abs(zeta(x, v)));
        }
        r.rhs += sup_v;
    }
    r.rhs *= std::pow(hx, d) * std::pow(std::abs(t), -double(d));
    for (long i = 0; i < cells; ++i) {
        fill(i, grid.x_half, hx, x);
        double integral = 0;
        for (long j = 0; j < cells; ++j) {
            fill(j, grid.v_half, hv, v);
            for (int k = 0; k < d; ++k) y[k] = x[k] - v[k] * t;
            integral += std::abs(zeta(y, v));
        }
        r.lhs = std::max(r.lhs, integral * std::pow(hv, d));
    }
    r.holds = r.lhs <= r.rhs * (1 + 1e-9);
    return r;
}

void write_dispersive_csv_header(std::ostream& os) {
    os << "# schema=1\n";
    os << "d,a,b,t,lhs,rhs,ratio,holds\n";
}

void write_dispersive_csv_row(std::ostream& os, int d, double a, double b, double t, const DispersiveResult& r) {
    std::ostringstream buf;
    buf.precision(17);
    buf << d << ',' << a << ',' << b << ',' << t << ',' << r.lhs << ',' << r.rhs << ',' << r.lhs / r.rhs << ','
        << (r.holds ? 1 : 0) << '\n';
    os << buf.str();
}

BoltzmannReference::BoltzmannReference(DensitySpec f0, const SimConfig& cfg, const CutoffParams& cut, int depth,
                                       BoltzmannSolveOptions opt)
    : f0_(std::move(f0)), cfg_(cfg), cut_(cut), depth_(depth), opt_(std::move(opt)) {
    f0_.validate();
    cfg_.validate();
    if (depth < 0) throw InputError("boltzmann_series_solve: depth must be nonnegative");
    if (f0_.d != cfg_.d) throw InputError("boltzmann_series_solve: data and configuration dimensions differ");
    if (!(opt_.smallness_threshold > 0)) throw InputError("boltzmann_series_solve: threshold must be positive");
    if (opt_.inner_samples <= 0) throw InputError("boltzmann_series_solve: inner_samples must be positive");
    const auto cert = f0_.weight_certificate();
    if (!cert) throw InputError("boltzmann_series_solve: data carries no (beta0, mu0) weight certificate");
    cert_ = *cert;
    smallness_ = std::exp(-cert_.mu) * std::pow(cert_.beta, -0.5 * (cfg_.d + 1)) / cfg_.ell;
    global_ = smallness_ <= opt_.smallness_threshold;
    local_time_ = opt_.smallness_threshold / smallness_;
}

std::vector<double> BoltzmannReference::windows(double t) const {
    if (!(t >= 0)) throw InputError("boltzmann_series_solve: t must be nonnegative");
    std::vector<double> ends;
    if (t == 0.0) return ends;
    if (global_ && cfg_.d >= 3) return {t};
    if (!global_ && t > local_time_) {
        std::ostringstream msg;
        msg << "boltzmann_series_solve: smallness condition failed (l^-1 exp(-mu0) beta0^-(d+1)/2 = " << smallness_
            << " exceeds " << opt_.smallness_threshold << ") and t = " << t << " exceeds the local time " << local_time_;
        throw InputError(msg.str());
    }
    const int pieces = int(std::ceil(t / local_time_ - 1e-12));
    for (int j = 1; j <= std::max(1, pieces); ++j) ends.push_back(t * j / std::max(1, pieces));
    return ends;
}

HierarchyData BoltzmannReference::data_at(double t_start, std::uint64_t salt) const {
    if (t_start == 0.0) return product_data([f0 = f0_](const double* x, const double* v) { return f0.eval(x, v); });
    const int d = cfg_.d;
    return product_data([this, t_start, salt, d](const double* x, const double* v) {
        PhasePoint z(d, 1);
        std::copy(x, x + d, z.x.begin());
        std::copy(v, v + d, z.v.begin());
        std::uint64_t h = salt;
        for (int k = 0; k < d; ++k) {
            std::uint64_t bx, bv;
            std::memcpy(&bx, x + k, sizeof bx);
            std::memcpy(&bv, v + k, sizeof bv);
            h = mix64(h ^ bx);
            h = mix64(h ^ bv);
        }
        BoltzmannReference inner = *this;
        inner.opt_.series.M = opt_.inner_samples;
        inner.opt_.series.chunk = opt_.inner_samples;
        inner.opt_.series.workers = 1;
        return inner.run(t_start, z, h).value;
    });
}

SeriesEstimate BoltzmannReference::run(double t_end, const PhasePoint& zs, std::uint64_t seed) const {
    const auto ends = windows(t_end);
    if (ends.empty()) {
        SeriesEstimate e;
        e.value = 1;
        for (int i = 0; i < zs.size(); ++i) e.value *= f0_.eval(zs.pos(i), zs.vel(i));
        DepthTerm term;
        term.contribution = term.magnitude = e.value;
        term.samples = e.samples = 1;
        e.per_depth.push_back(term);
        return e;
    }
    const double start = ends.size() > 1 ? ends[ends.size() - 2] : 0.0;
    SeriesOptions so = opt_.series;
    so.seed = seed;
    return duhamel_mc(zs, t_end - start, depth_, cfg_, cut_, data_at(start, mix64(seed + 1)), Flavor::boltzmann(), so);
}

SeriesEstimate BoltzmannReference::value(double t, const double* x, const double* v, std::uint64_t seed) const {
    PhasePoint z(cfg_.d, 1);
    std::copy(x, x + cfg_.d, z.x.begin());
    std::copy(v, v + cfg_.d, z.v.begin());
    return run(t, z, seed == 0 ? opt_.series.seed : seed);
}

SeriesEstimate BoltzmannReference::hierarchy_value(double t, const PhasePoint& zs, std::uint64_t seed) const {
    return run(t, zs, seed == 0 ? opt_.series.seed : seed);
}

ContractionReport BoltzmannReference::contraction(double t, const std::vector<PhasePoint>& probe) const {
    ContractionReport rep;
    rep.magnitudes.assign(std::size_t(depth_ + 1), 0.0);
    for (const auto& z : probe) {
        const SeriesEstimate e = run(t, z, opt_.series.seed + std::uint64_t(rep.probes));
        ++rep.probes;
        for (std::size_t k = 0; k < e.per_depth.size() && k < rep.magnitudes.size(); ++k)
            rep.magnitudes[k] = std::max(rep.magnitudes[k], e.per_depth[k].magnitude);
        for (std::size_t k = 0; k + 1 < e.per_depth.size(); ++k)
            if (e.per_depth[k].magnitude > 0)
                rep.max_ratio = std::max(rep.max_ratio, e.per_depth[k + 1].magnitude / e.per_depth[k].magnitude);
    }
    return rep;
}

CellReference BoltzmannReference::cell_reference(double t) const {
    // One-particle cell averages, computed once per single cell and multiplied.
    // Keyed by the cell bounds so that one reference can serve several windows.
    auto cache = std::make_shared<std::map<std::vector<double>, std::pair<double, double>>>();
    auto mtx = std::make_shared<std::mutex>();
    return [this, t, cache, mtx](const MarginalEstimate& est, std::size_t cell) {
        const int d = est.d;
        double value = 1, rel2 = 0;
        for (std::size_t single : est.split(cell)) {
            std::pair<double, double> vs;
            std::vector<double> lo(std::size_t(2 * d)), hi(std::size_t(2 * d));
            est.single_cell_bounds(single, lo.data(), hi.data());
            std::vector<double> key = lo;
            key.insert(key.end(), hi.begin(), hi.end());
            {
                std::lock_guard<std::mutex> lock(*mtx);
                auto it = cache->find(key);
                if (it != cache->end()) vs = it->second;
                else {
                    double vol = 1;
                    for (int k = 0; k < 2 * d; ++k) vol *= hi[std::size_t(k)] - lo[std::size_t(k)];
                    if (t == 0.0) {
                        vs = {f0_.cell_mass(lo.data(), hi.data()) / vol, 0.0};
                    } else {
                        PointSampler sampler = [lo, hi, d](Rng& rng) {
                            PhasePoint z(d, 1);
                            for (int k = 0; k < d; ++k) {
                                z.x[std::size_t(k)] = rng.uniform(lo[std::size_t(k)], hi[std::size_t(k)]);
                                z.v[std::size_t(k)] = rng.uniform(lo[std::size_t(d + k)], hi[std::size_t(d + k)]);
                            }
                            return z;
                        };
                        const auto ends = windows(t);
                        const double start = ends.size() > 1 ? ends[ends.size() - 2] : 0.0;
                        SeriesOptions so = opt_.series;
                        std::uint64_t h = opt_.series.seed;
                        for (double c : key) {
                            std::uint64_t b;
                            std::memcpy(&b, &c, sizeof b);
                            h = mix64(h ^ b);
                        }
                        so.seed = h;
                        auto e = duhamel_mc_sampled(sampler, 1, d, t - start, depth_, cfg_, cut_,
                                                    data_at(start, mix64(so.seed + 1)), Flavor::boltzmann(), so);
                        vs = {e.value, e.std_err};
                    }
                    cache->emplace(std::move(key), vs);
                }
            }
            value *= vs.first;
            if (vs.first != 0.0) rel2 += (vs.second / vs.first) * (vs.second / vs.first);
        }
        return std::pair<double, double>{value, std::abs(value) * std::sqrt(rel2)};
    };
}

}  // namespace kc
