#include "kinetic_chaos/bad_sets.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/flow.hpp"
#include "kinetic_chaos/parallel.hpp"
#include "kinetic_chaos/stats.hpp"

namespace kc {

std::vector<double> sphere_map(const std::vector<double>& v, const std::vector<double>& omega) {
    const int d = int(v.size());
    if (int(omega.size()) != d) throw InputError("sphere_map: dimension mismatch");
    const double nv = std::sqrt(norm2(v.data(), d));
    if (nv == 0) throw InputError("sphere_map: v must be nonzero");
    if (std::abs(std::sqrt(norm2(omega.data(), d)) - 1.0) > 1e-12) throw InputError("sphere_map: omega must be unit");
    const double c = dot(omega.data(), v.data(), d);
    std::vector<double> u(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) u[std::size_t(k)] = (2.0 * omega[std::size_t(k)] * c - v[std::size_t(k)]) / nv;
    return u;
}

namespace {

// int_0^phi sin^n
double sin_power_integral(int n, double phi) {
    if (n == 0) return phi;
    if (n == 1) return 1.0 - std::cos(phi);
    return -std::pow(std::sin(phi), n - 1) * std::cos(phi) / n + double(n - 1) / n * sin_power_integral(n - 2, phi);
}

// Measure of {w in S^m : w . n >= c}.
double cap_area(int m, double c) {
    if (m == 0) return (c <= 1.0 ? 1.0 : 0.0) + (c <= -1.0 ? 1.0 : 0.0);
    if (c >= 1.0) return 0.0;
    if (c <= -1.0) return sphere_area(m + 1);
    return sphere_area(m) * sin_power_integral(m - 1, std::acos(c));
}

}  // namespace

MeasureEstimate cylinder_cap_measure(const Line& line, double rho, int d, long M, Rng& rng) {
    if (!(rho > 0)) throw InputError("cylinder_cap_measure: rho must be positive");
    if (d < 2 || d > kMaxDim) throw InputError("cylinder_cap_measure: unsupported dimension");
    if (int(line.point.size()) != d || int(line.direction.size()) != d)
        throw InputError("cylinder_cap_measure: line has the wrong dimension");
    if (M <= 0) throw InputError("cylinder_cap_measure: M must be positive");
    const double ne = std::sqrt(norm2(line.direction.data(), d));
    if (ne == 0) throw InputError("cylinder_cap_measure: zero direction");
    double e[kMaxDim], p[kMaxDim];
    for (int k = 0; k < d; ++k) e[k] = line.direction[std::size_t(k)] / ne;
    const double pe = dot(line.point.data(), e, d);
    for (int k = 0; k < d; ++k) p[k] = line.point[std::size_t(k)] - pe * e[k];
    const double r = std::sqrt(norm2(p, d));

    // omega = cos(psi) e + sin(psi) w with w in the unit sphere of e's complement.
    // dist(omega, line) = |sin(psi) w - p|.
    MeasureEstimate out;
    // Every point of the sphere lies within 1 + r of the line.
    if (rho >= 1.0 + r) {
        out.estimate = sphere_area(d);
        return out;
    }
    const double alo = std::max(0.0, r - rho), ahi = std::min(1.0, r + rho);
    if (alo > ahi) return out;
    const double plo = std::asin(alo), phi_ = std::asin(ahi);
    const double length = 2.0 * (phi_ - plo);
    if (length <= 0) return out;
    RunningStats st;
    for (long i = 0; i < M; ++i) {
        const double psi = rng.uniform(plo, phi_);
        const double a = std::sin(psi);
        double cap;
        if (r == 0.0 || a == 0.0) {
            cap = (r == 0.0 ? a <= rho : r <= rho) ? sphere_area(d - 1) : 0.0;
        } else {
            cap = cap_area(d - 2, (a * a + r * r - rho * rho) / (2.0 * a * r));
        }
        st.add(std::pow(a, d - 2) * cap);
    }
    out.estimate = length * st.mean;
    out.std_err = length * st.stderr_mean();
    return out;
}

std::string flavor_name(BadSetFlavor f) { return f == BadSetFlavor::prop9 ? "prop9" : "appA"; }

std::string BadLabel::name() const {
    static const char* roman[] = {"I", "II", "III", "IV", "V", "VI", "VII"};
    return std::string("B_") + roman[std::clamp(set, 1, 7) - 1] + (post ? "(+)" : "(-)");
}

bool BadSetVerdict::has(int set) const {
    return std::any_of(which.begin(), which.end(), [&](const BadLabel& l) { return l.set == set; });
}
bool BadSetVerdict::has(int set, bool post) const {
    return std::any_of(which.begin(), which.end(), [&](const BadLabel& l) { return l.set == set && l.post == post; });
}

void check_bad_set_hypothesis(const CutoffParams& cut, const SimConfig& cfg) {
    cut.validate();
    if (!(cut.theta > 0 && cut.theta < M_PI / 2)) throw InputError("bad sets: theta must lie in (0, pi/2)");
    if (!(cut.alpha > 0 && cut.y > 0 && cut.eta > 0)) throw InputError("bad sets: alpha, y, eta must be positive");
    if (!(std::sin(cut.theta) > cut.c_d * cfg.epsilon / cut.y))
        throw InputError("bad sets: hypothesis sin(theta) > c_d eps / y violated");
    if (!(cut.eta < cut.R)) throw InputError("bad sets: requires eta < R");
}

BadSetClassifier::BadSetClassifier(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg,
                                   BadSetFlavor flavor)
    : ctx_(ctx), cut_(cut), cfg_(cfg), flavor_(flavor) {
    check_bad_set_hypothesis(cut, cfg);
    const int s = ctx.state.size(), d = ctx.state.dim;
    if (d != cfg.d) throw InputError("bad sets: dimension mismatch");
    if (s < 1) throw InputError("bad sets: empty context");
    if (ctx.parent < 0 || ctx.parent >= s) throw InputError("bad sets: parent index out of range");
    segments_.resize(std::size_t(s));
    for (int i = 0; i < s; ++i)
        segments_[std::size_t(i)].push_back(
            {0.0, {ctx.state.pos(i), ctx.state.pos(i) + d}, {ctx.state.vel(i), ctx.state.vel(i) + d}});
    if (flavor == BadSetFlavor::appA && s >= 2) {
        const FlowEventLog log = collision_history(ctx.state, cfg.epsilon, s, FlowPolicy{}, true);
        for (const auto& ev : log.events) {
            for (int side = 0; side < 2; ++side) {
                const int i = side == 0 ? ev.i : ev.j;
                const Segment& last = segments_[std::size_t(i)].back();
                Segment next;
                next.start = ev.time;
                next.x.resize(std::size_t(d));
                for (int k = 0; k < d; ++k)
                    next.x[std::size_t(k)] = last.x[std::size_t(k)] - last.v[std::size_t(k)] * (ev.time - last.start);
                next.v = side == 0 ? ev.post_i : ev.post_j;
                segments_[std::size_t(i)].push_back(std::move(next));
            }
        }
    }
}

std::vector<BadSetClassifier::Branch> BadSetClassifier::branches(int i, double tau) const {
    const auto& segs = segments_[std::size_t(i)];
    const int d = ctx_.state.dim;
    std::size_t active = 0;
    for (std::size_t q = 0; q < segs.size(); ++q)
        if (segs[q].start <= tau) active = q;
    std::vector<Branch> out;
    const std::size_t last = flavor_ == BadSetFlavor::prop9 ? active + 1 : segs.size();
    for (std::size_t q = active; q < last; ++q) {
        Branch b;
        b.x.resize(std::size_t(d));
        for (int k = 0; k < d; ++k)
            b.x[std::size_t(k)] = segs[q].x[std::size_t(k)] - segs[q].v[std::size_t(k)] * (tau - segs[q].start);
        b.v = segs[q].v;
        out.push_back(std::move(b));
    }
    return out;
}

namespace {

// Cosine of the angle between a and b; a zero vector counts as fully aligned.
double cosine(const double* a, const double* b, int d) {
    const double na = std::sqrt(norm2(a, d)), nb = std::sqrt(norm2(b, d));
    if (na == 0 || nb == 0) return 1.0;
    return dot(a, b, d) / (na * nb);
}

}  // namespace

BadSetVerdict BadSetClassifier::classify(const Candidate& c) const {
    const int d = ctx_.state.dim, s = ctx_.state.size(), p = ctx_.parent;
    if (int(c.v.size()) != d || int(c.omega.size()) != d) throw InputError("classify: candidate dimension mismatch");
    if (!(c.tau >= 0)) throw InputError("classify: tau must be nonnegative");
    const double eps = cfg_.epsilon, eta = cut_.eta, y = cut_.y;
    const double cos_t = std::cos(cut_.theta), sin_a = std::sin(cut_.alpha);
    const double* om = c.omega.data();

    std::vector<std::vector<Branch>> br(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) br[std::size_t(i)] = branches(i, c.tau);
    const double* xp = br[std::size_t(p)][0].x.data();
    const double* vp = br[std::size_t(p)][0].v.data();

    double dv[kMaxDim], vstar[kMaxDim], vpstar[kMaxDim], site[kMaxDim], a[kMaxDim], b[kMaxDim];
    for (int k = 0; k < d; ++k) dv[k] = c.v[std::size_t(k)] - vp[k];
    const double cw = dot(om, dv, d);
    const double gap = std::sqrt(norm2(dv, d));
    const bool post = cw > 0;
    for (int k = 0; k < d; ++k) {
        vstar[k] = c.v[std::size_t(k)] - om[k] * cw;
        vpstar[k] = vp[k] + om[k] * cw;
        site[k] = xp[k] + eps * om[k];
    }

    BadSetVerdict out;
    out.flavor = flavor_;
    auto mark = [&](int set) { out.which.push_back({set, post}); };
    auto vel_close = [&](const double* u, const double* w) { return std::sqrt(dist2(u, w, d)) <= eta; };
    const bool grazing = std::abs(cw) <= sin_a * gap;

    if (flavor_ == BadSetFlavor::prop9) {
        bool concentrated = false;
        for (int i = 0; i < s && !concentrated; ++i)
            if (i != p && std::sqrt(dist2(xp, br[std::size_t(i)][0].x.data(), d)) <= y) concentrated = true;
        if (concentrated) mark(1);
        // The cone ratio uses the displacement between parent and i on the slice.
        auto in_cone = [&](int i, const double* vel) {
            const double* xi = br[std::size_t(i)][0].x.data();
            const double* vi = br[std::size_t(i)][0].v.data();
            for (int k = 0; k < d; ++k) {
                a[k] = xp[k] - xi[k];
                b[k] = vel[k] - vi[k];
            }
            return std::abs(cosine(a, b, d)) >= cos_t;
        };
        if (!post) {
            bool close = false, cone = false;
            for (int i = 0; i < s; ++i) {
                if (vel_close(c.v.data(), br[std::size_t(i)][0].v.data())) close = true;
                if (i != p && in_cone(i, c.v.data())) cone = true;
            }
            if (close) mark(2);
            if (cone) mark(3);
        } else {
            if (grazing) mark(2);
            if (!grazing) {
                bool b3 = false, b4 = false, b6 = false, b7 = false;
                for (int i = 0; i < s; ++i) {
                    if (i == p) continue;
                    const double* vi = br[std::size_t(i)][0].v.data();
                    b3 = b3 || vel_close(vstar, vi);
                    b4 = b4 || vel_close(vpstar, vi);
                    b6 = b6 || in_cone(i, vstar);
                    b7 = b7 || in_cone(i, vpstar);
                }
                if (b3) mark(3);
                if (b4) mark(4);
                if (b6) mark(6);
                if (b7) mark(7);
            }
            if (gap <= eta) mark(5);
        }
    } else {
        // Every branch point on the tau slice, compared pairwise.
        bool concentrated = c.tau == 0.0;
        for (int i = 0; i < s && !concentrated; ++i)
            for (int j = i; j < s && !concentrated; ++j)
                for (std::size_t u = 0; u < br[std::size_t(i)].size() && !concentrated; ++u)
                    for (std::size_t w = (i == j ? u + 1 : 0); w < br[std::size_t(j)].size(); ++w) {
                        const Branch& A = br[std::size_t(i)][u];
                        const Branch& B = br[std::size_t(j)][w];
                        if (i == j && A.x == B.x && A.v == B.v) continue;
                        if (std::sqrt(dist2(A.x.data(), B.x.data(), d)) <= y) {
                            concentrated = true;
                            break;
                        }
                    }
        if (concentrated) mark(1);
        if (grazing) mark(2);
        auto in_cone = [&](const Branch& bi, const double* vel) {
            for (int k = 0; k < d; ++k) {
                a[k] = site[k] - bi.x[std::size_t(k)];
                b[k] = vel[k] - bi.v[std::size_t(k)];
            }
            return cosine(a, b, d) >= cos_t;
        };
        if (!post) {
            bool close = false, cone = false;
            for (int i = 0; i < s; ++i)
                for (const Branch& bi : br[std::size_t(i)]) {
                    close = close || vel_close(c.v.data(), bi.v.data());
                    cone = cone || in_cone(bi, c.v.data());
                }
            if (close) mark(3);
            if (cone) mark(4);
        } else {
            if (!grazing) {
                bool b3 = false, b4 = false, b6 = false, b7 = false;
                for (int i = 0; i < s; ++i)
                    for (const Branch& bi : br[std::size_t(i)]) {
                        b3 = b3 || vel_close(vstar, bi.v.data());
                        if (i == p) continue;
                        b4 = b4 || vel_close(vpstar, bi.v.data());
                        b6 = b6 || in_cone(bi, vstar);
                        b7 = b7 || in_cone(bi, vpstar);
                    }
                if (b3) mark(3);
                if (b4) mark(4);
                if (b6) mark(6);
                if (b7) mark(7);
            }
            if (gap <= eta) mark(5);
        }
    }
    out.member = !out.which.empty();
    return out;
}

PhasePoint BadSetClassifier::extend(const Candidate& c) const {
    const int d = ctx_.state.dim, p = ctx_.parent;
    PhasePoint z;
    if (flavor_ == BadSetFlavor::prop9) {
        z = ctx_.state;
        for (std::size_t q = 0; q < z.x.size(); ++q) z.x[q] -= z.v[q] * c.tau;
    } else {
        z = backward(ctx_.state, c.tau, cfg_).state;
    }
    double xn[kMaxDim], vn[kMaxDim];
    for (int k = 0; k < d; ++k) {
        xn[k] = z.pos(p)[k] + cfg_.epsilon * c.omega[std::size_t(k)];
        vn[k] = c.v[std::size_t(k)];
    }
    double dv[kMaxDim];
    for (int k = 0; k < d; ++k) dv[k] = vn[k] - z.vel(p)[k];
    if (dot(c.omega.data(), dv, d) > 0) collide_in_place(z.vel(p), vn, c.omega.data(), d);
    z.push_back(xn, vn);
    return z;
}

BadSetVerdict classify_candidate(const BadSetContext& ctx, const Candidate& c, const CutoffParams& cut,
                                 const SimConfig& cfg, BadSetFlavor flavor) {
    return BadSetClassifier(ctx, cut, cfg, flavor).classify(c);
}

namespace {

Candidate draw_candidate(Rng& rng, int d, double T, double R) {
    Candidate c;
    c.tau = rng.uniform(0.0, T);
    c.v.resize(std::size_t(d));
    c.omega.resize(std::size_t(d));
    rng.in_ball(c.v.data(), d, 2.0 * R);
    rng.unit_vector(c.omega.data(), d);
    return c;
}

}  // namespace

BadMeasure estimate_bad_measure(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg, double T,
                                long M, std::uint64_t seed, BadSetFlavor flavor, int workers) {
    if (!(T > 0)) throw InputError("estimate_bad_measure: T must be positive");
    if (M <= 0) throw InputError("estimate_bad_measure: M must be positive");
    const BadSetClassifier cls(ctx, cut, cfg, flavor);
    const int d = cfg.d;
    const long chunk = 4096;
    const std::size_t tasks = std::size_t((M + chunk - 1) / chunk);
    struct Acc {
        RunningStats all;
        std::array<RunningStats, 7> per;
        std::array<RunningStats, 14> lab;
    };
    std::vector<Acc> out(tasks);
    run_tasks(tasks, resolve_workers(workers), [&](std::size_t t) {
        Rng rng = Rng::stream(seed, t);
        const long n = std::min(chunk, M - long(t) * chunk);
        Acc acc;
        for (long i = 0; i < n; ++i) {
            const BadSetVerdict v = cls.classify(draw_candidate(rng, d, T, cut.R));
            acc.all.add(v.member ? 1.0 : 0.0);
            for (int k = 0; k < 7; ++k) acc.per[std::size_t(k)].add(v.has(k + 1) ? 1.0 : 0.0);
            for (int k = 0; k < 14; ++k) acc.lab[std::size_t(k)].add(v.has(k / 2 + 1, k % 2 == 1) ? 1.0 : 0.0);
        }
        out[t] = acc;
    });
    Acc tot;
    for (const auto& a : out) {
        tot.all.merge(a.all);
        for (int k = 0; k < 7; ++k) tot.per[std::size_t(k)].merge(a.per[std::size_t(k)]);
        for (int k = 0; k < 14; ++k) tot.lab[std::size_t(k)].merge(a.lab[std::size_t(k)]);
    }
    BadMeasure m;
    m.volume = T * unit_ball_volume(d) * std::pow(2.0 * cut.R, d) * sphere_area(d);
    m.estimate = m.volume * tot.all.mean;
    m.std_err = m.volume * tot.all.stderr_mean();
    for (int k = 0; k < 7; ++k)
        m.per_set[std::size_t(k)] = {m.volume * tot.per[std::size_t(k)].mean, m.volume * tot.per[std::size_t(k)].stderr_mean()};
    for (int k = 0; k < 14; ++k)
        m.per_label[std::size_t(k)] = {m.volume * tot.lab[std::size_t(k)].mean, m.volume * tot.lab[std::size_t(k)].stderr_mean()};
    m.bracket = cut.alpha + cut.y / (cut.eta * T) + std::pow(cut.eta / cut.R, d - 1) + std::pow(cut.theta, 0.5 * (d - 1));
    m.scale = double(ctx.state.size()) * T * std::pow(cut.R, d);
    m.samples = M;
    return m;
}

StabilityReport verify_stability(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg, long M,
                                 std::uint64_t seed, BadSetFlavor flavor, double T) {
    if (M <= 0) throw InputError("verify_stability: M must be positive");
    if (!(T > 0)) throw InputError("verify_stability: T must be positive");
    const BadSetClassifier cls(ctx, cut, cfg, flavor);
    const double eps = cfg.epsilon;
    auto good = [&](const PhasePoint& z) {
        return flavor == BadSetFlavor::prop9 ? in_K(z, eps) && in_U_eta(z, cut.eta)
                                             : in_G(z, eps) && in_hat_U_eta(z, cut.eta, eps);
    };
    if (!good(ctx.state)) throw InputError("verify_stability: context is outside the hypothesis set");
    Rng rng(stream_seed(seed, 0));
    StabilityReport rep;
    const long max_draws = 1000 * M;
    for (long draws = 0; rep.tested < M; ++draws) {
        if (draws >= max_draws) throw InputError("verify_stability: almost every candidate is bad");
        const Candidate c = draw_candidate(rng, cfg.d, T, cut.R);
        if (cls.classify(c).member) {
            ++rep.rejected_as_bad;
            continue;
        }
        ++rep.tested;
        if (!good(cls.extend(c))) ++rep.failures;
    }
    rep.fraction_good = double(rep.tested - rep.failures) / double(rep.tested);
    return rep;
}

void write_badset_csv_header(std::ostream& os) {
    os << "# schema=1\n";
    os << "flavor,subset,alpha,y,eta,theta,R,T,estimate,stderr,bracket,skipped\n";
}

void write_badset_csv_rows(std::ostream& os, BadSetFlavor flavor, const CutoffParams& cut, double T,
                           const BadMeasure& m, bool skipped) {
    static const char* names[] = {"B_I", "B_II", "B_III", "B_IV", "B_V", "B_VI", "B_VII"};
    std::ostringstream buf;
    buf.precision(17);
    auto row = [&](const std::string& subset, double est, double se) {
        buf << flavor_name(flavor) << ',' << subset << ',' << cut.alpha << ',' << cut.y << ',' << cut.eta << ','
            << cut.theta << ',' << cut.R << ',' << T << ',' << est << ',' << se << ',' << m.bracket << ','
            << (skipped ? 1 : 0) << '\n';
    };
    row("all", m.estimate, m.std_err);
    for (int k = 0; k < 7; ++k) row(names[k], m.per_set[std::size_t(k)].estimate, m.per_set[std::size_t(k)].std_err);
    os << buf.str();
}

}  // namespace kc
