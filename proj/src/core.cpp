#include "kinetic_chaos/core.hpp"

#include <algorithm>
#include <cmath>

#include "kinetic_chaos/flow.hpp"

namespace kc {

std::pair<Velocity, Velocity> collide(const Velocity& vi, const Velocity& vj, const Velocity& omega) {
    const std::size_t d = omega.size();
    if (d == 0 || vi.size() != d || vj.size() != d) throw InputError("collide: dimension mismatch");
    double n = std::sqrt(norm2(omega.data(), int(d)));
    if (std::abs(n - 1.0) > 1e-12) throw InputError("collide: omega is not a unit vector");
    Velocity a = vi, b = vj;
    collide_in_place(a.data(), b.data(), omega.data(), int(d));
    return {a, b};
}

Functionals functionals(const PhasePoint& z) {
    Functionals f;
    const std::size_t n = z.x.size();
    for (std::size_t k = 0; k < n; ++k) {
        f.energy += z.v[k] * z.v[k];
        f.moment_of_inertia += z.x[k] * z.x[k];
        f.virial += z.x[k] * z.v[k];
    }
    f.energy *= 0.5;
    f.moment_of_inertia *= 0.5;
    return f;
}

bool is_admissible(const PhasePoint& z, double eps, double rel_tol) {
    const int s = z.size(), d = z.dim;
    const double lim = eps * eps * (1.0 - rel_tol);
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j)
            if (dist2(z.pos(i), z.pos(j), d) < lim) return false;
    return true;
}

double line_distance(const double* dx, const double* dv, int d) {
    double a = norm2(dv, d);
    double x2 = norm2(dx, d);
    if (a == 0) return std::sqrt(x2);
    double b = dot(dx, dv, d);
    return std::sqrt(std::max(0.0, x2 - b * b / a));
}

namespace detail {

// Pointwise test: |dx - dv tau| > thr for every tau > 0. A pair already in
// contact and separating backward passes, since every tau > 0 is strictly
// farther than the start.
bool separated_backward(const double* dx, const double* dv, int d, double thr) {
    double a = norm2(dv, d);
    double x2 = norm2(dx, d);
    if (a == 0) return x2 > thr * thr;
    double b = dot(dx, dv, d);
    if (b <= 0) return x2 >= thr * thr * (1.0 - 1e-9);
    double m2 = std::max(0.0, x2 - b * b / a);
    return m2 > thr * thr;
}

}  // namespace detail

bool in_K(const PhasePoint& z, double eps, double slack) {
    const int s = z.size(), d = z.dim;
    double dx[kMaxDim], dv[kMaxDim];
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j) {
            for (int k = 0; k < d; ++k) {
                dx[k] = z.pos(i)[k] - z.pos(j)[k];
                dv[k] = z.vel(i)[k] - z.vel(j)[k];
            }
            if (!detail::separated_backward(dx, dv, d, eps + slack)) return false;
        }
    return true;
}

bool in_U_eta(const PhasePoint& z, double eta, double slack) {
    const int s = z.size(), d = z.dim;
    const double thr = eta + slack;
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j)
            if (!(std::sqrt(dist2(z.vel(i), z.vel(j), d)) > thr)) return false;
    return true;
}

bool in_tilde_U_eta(const PhasePoint& z, double eta, double slack) {
    if (!(eta > 0) || !(eta < 1)) throw InputError("in_tilde_U_eta: eta must lie in (0, 1)");
    const int s = z.size(), d = z.dim;
    const double lg = eta * std::log(1.0 / eta);
    double dx[kMaxDim], dv[kMaxDim];
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j) {
            for (int k = 0; k < d; ++k) {
                dx[k] = z.pos(i)[k] - z.pos(j)[k];
                dv[k] = z.vel(i)[k] - z.vel(j)[k];
            }
            double score = std::sqrt(norm2(dv, d)) / eta + line_distance(dx, dv, d) / lg;
            if (!(score > 1.0 + slack)) return false;
        }
    return true;
}

bool in_G(const PhasePoint& z, double eps, double slack) {
    const int s = z.size(), d = z.dim;
    if (s <= 2) return true;
    FlowEventLog hist = collision_history(z, eps, s, FlowPolicy{}, /*backward=*/true);
    for (const auto& e : hist.events)
        if (e.i >= 2 || e.j >= 2) return false;

    const double thr = eps + slack;
    double dx[kMaxDim], dv[kMaxDim];
    for (int i = 0; i < 2; ++i) {
        for (int j = 2; j < s; ++j) {
            for (int k = 0; k < d; ++k) {
                dx[k] = z.pos(i)[k] - z.pos(j)[k];
                dv[k] = z.vel(i)[k] - z.vel(j)[k];
            }
            if (!detail::separated_backward(dx, dv, d, thr)) return false;
        }
        // Branch after each backward (1,2) collision, continued as a straight line.
        std::vector<double> xi(z.pos(i), z.pos(i) + d), vi(z.vel(i), z.vel(i) + d);
        double last = 0;
        for (const auto& e : hist.events) {
            for (int k = 0; k < d; ++k) xi[k] -= vi[k] * (e.time - last);
            last = e.time;
            const auto& post = (e.i == i) ? e.post_i : e.post_j;
            vi = post;
            for (int j = 2; j < s; ++j) {
                for (int k = 0; k < d; ++k) {
                    dx[k] = xi[k] - (z.pos(j)[k] - z.vel(j)[k] * e.time);
                    dv[k] = vi[k] - z.vel(j)[k];
                }
                if (!detail::separated_backward(dx, dv, d, thr)) return false;
            }
        }
    }
    return true;
}

bool in_hat_U_eta(const PhasePoint& z, double eta, double eps, double slack) {
    if (!in_U_eta(z, eta, slack)) return false;
    const int s = z.size(), d = z.dim;
    if (s == 1) return true;
    FlowEventLog hist = collision_history(z, eps, s, FlowPolicy{}, /*backward=*/true);
    if (hist.events.empty()) return true;

    std::vector<std::vector<Velocity>> h(s);
    for (int i = 0; i < s; ++i) h[i].emplace_back(z.vel(i), z.vel(i) + d);
    for (const auto& e : hist.events) {
        h[e.i].push_back(e.post_i);
        h[e.j].push_back(e.post_j);
    }
    const double thr = eta + slack;
    for (int i = 0; i < s; ++i)
        for (int j = i; j < s; ++j)
            for (std::size_t a = 0; a < h[i].size(); ++a)
                for (std::size_t b = (i == j ? a + 1 : 0); b < h[j].size(); ++b) {
                    double g = std::sqrt(dist2(h[i][a].data(), h[j][b].data(), d));
                    if (i == j && g == 0) continue;
                    if (!(g > thr)) return false;
                }
    return true;
}

}  // namespace kc
