#include "kinetic_chaos/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "kinetic_chaos/core.hpp"
#include "kinetic_chaos/simd.hpp"

namespace kc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Engine {
public:
    Engine(const PhasePoint& z, double eps, int tracked, const FlowPolicy& pol)
        : d_(z.dim), s_(z.size()), tracked_(std::clamp(tracked, 0, z.size())), eps_(eps), pol_(pol) {
        stride_ = (s_ + 3) & ~3;
        x_.assign(std::size_t(d_) * stride_, 0.0);
        v_.assign(std::size_t(d_) * stride_, 0.0);
        for (int i = 0; i < s_; ++i)
            for (int k = 0; k < d_; ++k) {
                x_[k * stride_ + i] = z.x[std::size_t(i) * d_ + k];
                v_[k * stride_ + i] = z.v[std::size_t(i) * d_ + k];
            }
        eps2_ = eps * eps;
        graze2_ = pol.grazing_tolerance * pol.grazing_tolerance;
        cached_ = tracked_ > pol.full_recompute_limit;
        row_.assign(std::size_t(std::max(tracked_, 1)), kInf);
        check_admissible();
    }

    void run(double t_end, FlowEventLog& log) {
        if (tracked_ < 2) {
            finish(t_end);
            return;
        }
        rebuild();
        long count = 0;
        while (true) {
            auto [a, b, tb] = earliest();
            if (a < 0 || tb > t_end) break;
            if (++count > pol_.max_events) throw DegenerateEventError("flow exceeded the event budget");
            if (simultaneous(a, b, tb) || grazing_at(a, b, tb)) {
                std::ostringstream msg;
                msg << "degenerate event at t=" << tb << " between particles " << a << " and " << b;
                if (pol_.degenerate == DegeneratePolicy::reject) throw DegenerateEventError(msg.str());
                if (++log.perturbations > pol_.max_perturbations)
                    throw DegenerateEventError(msg.str() + " (perturbation budget exhausted)");
                jitter(a, b, log.perturbations);
                rebuild();
                continue;
            }
            stream_to(tb);
            log.events.push_back(collide_pair(a, b));
            update_after(a, b);
        }
        finish(t_end);
    }

    // Earliest contact from the current state without applying it.
    std::optional<Contact> peek() {
        if (tracked_ < 2) return std::nullopt;
        rebuild();
        auto [a, b, tb] = earliest();
        if (a < 0) return std::nullopt;
        Contact c{a, b, tb, std::vector<double>(d_)};
        double r2 = 0;
        for (int k = 0; k < d_; ++k) {
            c.omega[k] = (X(b, k) + V(b, k) * tb) - (X(a, k) + V(a, k) * tb);
            r2 += c.omega[k] * c.omega[k];
        }
        for (auto& w : c.omega) w /= std::sqrt(r2);
        return c;
    }

    PhasePoint state() const {
        PhasePoint z(d_, s_);
        for (int i = 0; i < s_; ++i)
            for (int k = 0; k < d_; ++k) {
                z.x[std::size_t(i) * d_ + k] = x_[k * stride_ + i];
                z.v[std::size_t(i) * d_ + k] = v_[k * stride_ + i];
            }
        return z;
    }

private:
    struct Pick {
        int a, b;
        double t;
    };

    double X(int i, int k) const { return x_[k * stride_ + i]; }
    double V(int i, int k) const { return v_[k * stride_ + i]; }

    void check_admissible() const {
        const double lim = eps2_ * (1.0 - pol_.overlap_tolerance);
        for (int i = 0; i < tracked_; ++i)
            for (int j = i + 1; j < tracked_; ++j) {
                double r2 = 0;
                for (int k = 0; k < d_; ++k) r2 += (X(i, k) - X(j, k)) * (X(i, k) - X(j, k));
                if (r2 < lim) {
                    std::ostringstream msg;
                    msg << "inadmissible state: particles " << i << " and " << j << " overlap";
                    throw InputError(msg.str());
                }
            }
    }

    void scan(int i, int j0, int j1) {
        simd::contact_times(x_.data(), v_.data(), stride_, d_, i, j0, j1, eps2_, graze2_, row_.data());
    }

    void rebuild() {
        if (!cached_) {
            pair_t_.assign(std::size_t(tracked_) * tracked_, kInf);
            for (int i = 0; i + 1 < tracked_; ++i) {
                scan(i, i + 1, tracked_);
                for (int j = i + 1; j < tracked_; ++j) pair_t_[std::size_t(i) * tracked_ + j] = now_ + row_[j - i - 1];
            }
            return;
        }
        best_t_.assign(tracked_, kInf);
        best_j_.assign(tracked_, -1);
        for (int i = 0; i < tracked_; ++i) refresh_row(i);
    }

    // Full scan of particle i against every tracked particle; returns absolute times in row_.
    void refresh_row(int i) {
        scan(i, 0, tracked_);
        row_[i] = kInf;
        best_t_[i] = kInf;
        best_j_[i] = -1;
        for (int j = 0; j < tracked_; ++j) {
            row_[j] += now_;
            if (row_[j] < best_t_[i]) {
                best_t_[i] = row_[j];
                best_j_[i] = j;
            }
        }
    }

    Pick earliest() const {
        Pick p{-1, -1, kInf};
        if (!cached_) {
            for (int i = 0; i + 1 < tracked_; ++i)
                for (int j = i + 1; j < tracked_; ++j) {
                    double t = pair_t_[std::size_t(i) * tracked_ + j];
                    if (t < p.t) p = {i, j, t};
                }
            return p;
        }
        for (int i = 0; i < tracked_; ++i)
            if (best_t_[i] < p.t) p = {std::min(i, best_j_[i]), std::max(i, best_j_[i]), best_t_[i]};
        return p;
    }

    double pair_time(int i, int j) const {
        if (i > j) std::swap(i, j);
        return pair_t_[std::size_t(i) * tracked_ + j];
    }

    bool simultaneous(int a, int b, double tb) const {
        const double tol = pol_.simultaneity_tolerance;
        if (!cached_) {
            for (int k = 0; k < tracked_; ++k) {
                if (k == a || k == b) continue;
                if (pair_time(a, k) - tb <= tol || pair_time(b, k) - tb <= tol) return true;
            }
            return false;
        }
        for (int k = 0; k < tracked_; ++k) {
            if (k == a || k == b) continue;
            if ((best_j_[k] == a || best_j_[k] == b) && best_t_[k] - tb <= tol) return true;
        }
        return false;
    }

    bool grazing_at(int a, int b, double tb) const {
        const double dt = tb - now_;
        double r2 = 0, rv = 0;
        for (int k = 0; k < d_; ++k) {
            double dx = (X(b, k) + V(b, k) * dt) - (X(a, k) + V(a, k) * dt);
            double dv = V(b, k) - V(a, k);
            r2 += dx * dx;
            rv += dx * dv;
        }
        return std::abs(rv / std::sqrt(r2)) < pol_.grazing_tolerance;
    }

    void jitter(int a, int b, int round) {
        std::mt19937_64 rng(pol_.perturb_seed + 0x9e3779b97f4a7c15ULL * std::uint64_t(round));
        std::normal_distribution<double> g;
        for (int p : {a, b}) {
            double dir[kMaxDim], n2 = 0;
            for (int k = 0; k < d_; ++k) {
                dir[k] = g(rng);
                n2 += dir[k] * dir[k];
            }
            const double scale = 1e-9 * eps_ / std::sqrt(n2);
            for (int k = 0; k < d_; ++k) x_[k * stride_ + p] += dir[k] * scale;
        }
    }

    void stream_to(double t) {
        const double dt = t - now_;
        if (dt != 0.0) simd::stream(x_.data(), v_.data(), x_.size(), dt);
        now_ = t;
    }

    void finish(double t_end) {
        if (std::isfinite(t_end)) stream_to(t_end);
    }

    FlowEvent collide_pair(int a, int b) {
        FlowEvent e;
        e.time = now_;
        e.i = a;
        e.j = b;
        e.omega.resize(d_);
        double r2 = 0;
        for (int k = 0; k < d_; ++k) {
            e.omega[k] = X(b, k) - X(a, k);
            r2 += e.omega[k] * e.omega[k];
        }
        const double r = std::sqrt(r2);
        for (auto& w : e.omega) w /= r;
        e.pre_i.resize(d_);
        e.pre_j.resize(d_);
        for (int k = 0; k < d_; ++k) {
            e.pre_i[k] = V(a, k);
            e.pre_j[k] = V(b, k);
        }
        e.post_i = e.pre_i;
        e.post_j = e.pre_j;
        collide_in_place(e.post_i.data(), e.post_j.data(), e.omega.data(), d_);
        for (int k = 0; k < d_; ++k) {
            v_[k * stride_ + a] = e.post_i[k];
            v_[k * stride_ + b] = e.post_j[k];
        }
        return e;
    }

    void update_after(int a, int b) {
        if (!cached_) {
            for (int p : {a, b}) {
                scan(p, 0, tracked_);
                for (int j = 0; j < tracked_; ++j) {
                    if (j == p) continue;
                    const int lo = std::min(p, j), hi = std::max(p, j);
                    pair_t_[std::size_t(lo) * tracked_ + hi] = now_ + row_[j];
                }
            }
            return;
        }
        refresh_row(a);
        std::vector<double> row_a = row_;
        refresh_row(b);
        const std::vector<double>& row_b = row_;
        std::vector<int> stale;
        for (int k = 0; k < tracked_; ++k) {
            if (k == a || k == b) continue;
            if (best_j_[k] == a || best_j_[k] == b) {
                stale.push_back(k);
                continue;
            }
            if (row_a[k] < best_t_[k]) {
                best_t_[k] = row_a[k];
                best_j_[k] = a;
            }
            if (row_b[k] < best_t_[k]) {
                best_t_[k] = row_b[k];
                best_j_[k] = b;
            }
        }
        for (int k : stale) refresh_row(k);
    }

    int d_, s_, tracked_, stride_ = 0;
    double eps_, eps2_ = 0, graze2_ = 0;
    const FlowPolicy& pol_;
    std::vector<double> x_, v_;
    double now_ = 0;
    bool cached_ = false;
    std::vector<double> row_;
    std::vector<double> pair_t_;
    std::vector<double> best_t_;
    std::vector<int> best_j_;
};

void negate(std::vector<double>& w) {
    for (auto& c : w) c = -c;
}

}  // namespace

std::optional<Contact> next_collision(const PhasePoint& z, double eps, const FlowPolicy& policy) {
    Engine eng(z, eps, z.size(), policy);
    return eng.peek();
}

FlowResult evolve(const PhasePoint& z, double t, double eps, int tracked, const FlowPolicy& policy, bool reverse) {
    if (!(t >= 0)) throw InputError("flow time must be nonnegative");
    PhasePoint start = z;
    if (reverse) negate(start.v);
    Engine eng(start, eps, tracked, policy);
    FlowResult r;
    eng.run(t, r.log);
    r.state = eng.state();
    if (reverse) {
        negate(r.state.v);
        for (auto& e : r.log.events) {
            negate(e.pre_i);
            negate(e.pre_j);
            negate(e.post_i);
            negate(e.post_j);
        }
    }
    return r;
}

FlowResult advance(const PhasePoint& z, double t, const SimConfig& cfg, const FlowPolicy& policy) {
    return evolve(z, t, cfg.epsilon, z.size(), policy, false);
}

FlowResult backward(const PhasePoint& z, double t, const SimConfig& cfg, const FlowPolicy& policy) {
    return evolve(z, t, cfg.epsilon, z.size(), policy, true);
}

FlowResult advance_tilde(const PhasePoint& z, double t, int m, const SimConfig& cfg, const FlowPolicy& policy) {
    if (m < 1) throw InputError("advance_tilde: m must be at least 1");
    return evolve(z, t, cfg.epsilon, m - 1, policy, false);
}

FlowResult backward_tilde(const PhasePoint& z, double t, int m, const SimConfig& cfg, const FlowPolicy& policy) {
    if (m < 1) throw InputError("backward_tilde: m must be at least 1");
    return evolve(z, t, cfg.epsilon, m - 1, policy, true);
}

FlowEventLog collision_history(const PhasePoint& z, double eps, int tracked, const FlowPolicy& policy, bool backward) {
    return evolve(z, kInf, eps, tracked, policy, backward).log;
}

void write_event_log_csv(std::ostream& os, const FlowEventLog& log, int d) {
    os << "# schema=1\n";
    os << "time,i,j";
    for (const char* tag : {"omega", "pre_i", "pre_j", "post_i", "post_j"})
        for (int k = 0; k < d; ++k) os << ',' << tag << '_' << k;
    os << '\n';
    os.precision(17);
    for (const auto& e : log.events) {
        os << e.time << ',' << e.i << ',' << e.j;
        for (const auto* w : {&e.omega, &e.pre_i, &e.pre_j, &e.post_i, &e.post_j})
            for (double c : *w) os << ',' << c;
        os << '\n';
    }
}

}  // namespace kc
