#include "kinetic_chaos/experiments.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "kinetic_chaos/analysis.hpp"
#include "kinetic_chaos/bad_sets.hpp"
#include "kinetic_chaos/ensemble.hpp"
#include "kinetic_chaos/parallel.hpp"
#include "kinetic_chaos/pseudo.hpp"
#include "kinetic_chaos/stats.hpp"

#ifndef KC_VERSION
#define KC_VERSION "unknown"
#endif

namespace kc {

std::string code_version() { return KC_VERSION; }

std::uint64_t task_seed(std::uint64_t master, const std::string& task) { return stream_seed(master, fnv1a64(task)); }

void RunManifest::write(std::ostream& os) const {
    auto hex = [](std::uint64_t v) {
        std::ostringstream s;
        s << std::hex << std::setw(16) << std::setfill('0') << v;
        return s.str();
    };
    os << "command=" << command << '\n';
    os << "experiment=" << experiment << '\n';
    os << "code_version=" << code_version() << '\n';
    os << "config_hash=" << hex(config_hash) << '\n';
    os << "master_seed=" << master_seed << '\n';
    os << "workers=" << workers << '\n';
    os << "wall_seconds=" << std::fixed << std::setprecision(3) << wall_seconds << '\n';
    os << std::defaultfloat;
    os << "events=" << events << '\n';
    os << "perturbations=" << perturbations << '\n';
    for (const auto& [task, seed] : task_seeds) os << "seed." << task << '=' << hex(seed) << '\n';
    os << "outputs=";
    for (std::size_t i = 0; i < outputs.size(); ++i) os << (i ? " " : "") << outputs[i];
    os << '\n';
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
        if (x[i] > 0 && y[i] > 0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    if (std::set<double>(lx.begin(), lx.end()).size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return fit_line(lx, ly).slope;
}

namespace {

using Clock = std::chrono::steady_clock;

// Shortest text that parses back to the same double.
std::string num(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string opt_num(double v) { return std::isnan(v) ? std::string() : num(v); }

struct Session {
    const ExperimentConfig& cfg;
    RunManifest manifest;
    Clock::time_point start = Clock::now();
    std::filesystem::path dir;

    Session(const ExperimentConfig& c, const std::string& command) : cfg(c) {
        manifest.command = command;
        manifest.experiment = c.id;
        manifest.config_hash = fnv1a64(c.source_text);
        manifest.master_seed = c.seed;
        manifest.workers = resolve_workers(c.workers);
        dir = c.out_dir;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("cannot create output directory " + c.out_dir + ": " + ec.message());
    }

    std::uint64_t seed(const std::string& task) {
        const auto s = task_seed(cfg.seed, task);
        manifest.task_seeds[task] = s;
        return s;
    }

    void emit(const std::string& name, const std::string& body) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + (dir / name).string());
        out << body;
        manifest.outputs.push_back(name);
    }

    RunManifest finish() {
        emit("run_config.ini", cfg.source_text);
        manifest.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
        std::ofstream out(dir / "manifest.txt", std::ios::binary);
        manifest.write(out);
        return manifest;
    }
};

std::string tag(const SimConfig& sc, double t) {
    std::ostringstream s;
    s << "N=" << sc.N << ",t=" << num(t);
    return s.str();
}

}  // namespace

RunManifest run_simulate(const ExperimentConfig& cfg) {
    Session ses(cfg, "simulate");
    std::map<int, std::ostringstream> files;
    const long N_max = *std::max_element(cfg.N_values.begin(), cfg.N_values.end());
    for (int s : cfg.marginal_s) {
        if (s > N_max) continue;
        auto& os = files[s];
        os << "# schema=1\n";
        os << "experiment,N,epsilon,t,s,cell";
        for (int p = 0; p < s; ++p) {
            for (int k = 0; k < cfg.d; ++k) os << ",p" << p << "_x" << k;
            for (int k = 0; k < cfg.d; ++k) os << ",p" << p << "_v" << k;
        }
        os << ",value,stderr\n";
    }
    for (const auto& sc : cfg.scan()) {
        for (double t : cfg.times) {
            const auto key = tag(sc, t);
            const auto ens = evolve_ensemble(sc, cfg.density, t, cfg.M, cfg.policy, ses.seed("simulate/" + key),
                                             ses.manifest.workers);
            ses.manifest.events += ens.events;
            ses.manifest.perturbations += ens.perturbations;
            for (int s : cfg.marginal_s) {
                if (s > sc.N) continue;
                const auto est = estimate_marginal(ens.final, s, cfg.window(s), cfg.max_injections,
                                                   ses.seed("inject/" + key + ",s=" + std::to_string(s)));
                auto& os = files[s];
                for (std::size_t c = 0; c < est.cell_count(); ++c) {
                    if (est.values[c] == 0.0) continue;
                    const PhasePoint z = est.cell_center(c);
                    os << cfg.id << ',' << sc.N << ',' << num(sc.epsilon) << ',' << num(t) << ',' << s << ',' << c;
                    for (int p = 0; p < s; ++p) {
                        for (int k = 0; k < cfg.d; ++k) os << ',' << num(z.pos(p)[k]);
                        for (int k = 0; k < cfg.d; ++k) os << ',' << num(z.vel(p)[k]);
                    }
                    os << ',' << num(est.values[c]) << ',' << num(est.std_err[c]) << '\n';
                }
            }
        }
    }
    for (auto& [s, os] : files) ses.emit("simulate_s" + std::to_string(s) + ".csv", os.str());
    return ses.finish();
}

std::vector<ConvergenceRow> convergence_rows(const ExperimentConfig& cfg, RunManifest& manifest) {
    auto seed = [&](const std::string& task) {
        const auto v = task_seed(cfg.seed, task);
        manifest.task_seeds[task] = v;
        return v;
    };
    const int workers = resolve_workers(cfg.workers);
    const auto scan = cfg.scan();
    BoltzmannSolveOptions opt;
    opt.smallness_threshold = cfg.smallness_threshold;
    opt.inner_samples = cfg.inner_samples;
    opt.series.M = cfg.series_M;
    opt.series.seed = seed("reference");
    opt.series.workers = workers;
    opt.series.policy = cfg.policy;
    // One reference serves the whole scan: it depends on l and the data only.
    const BoltzmannReference ref(cfg.density, scan.front(), cfg.cut, cfg.cut.n, opt);
    for (double t : cfg.times) ref.windows(t);  // hypothesis failures surface before any sampling

    std::vector<ConvergenceRow> rows;
    for (const auto& sc : scan) {
        for (double t : cfg.times) {
            const auto key = tag(sc, t);
            const auto ens = evolve_ensemble(sc, cfg.density, t, cfg.M, cfg.policy, seed("converge/" + key), workers);
            manifest.events += ens.events;
            manifest.perturbations += ens.perturbations;
            const auto cell_ref = ref.cell_reference(t);
            for (int s : cfg.marginal_s) {
                if (s > sc.N) continue;
                const auto est = estimate_marginal(ens.final, s, cfg.window(s), cfg.max_injections,
                                                   seed("inject/" + key + ",s=" + std::to_string(s)));
                rows.push_back({sc.N, sc.epsilon, s, t, chaos_error(est, cell_ref, cfg.cut, sc)});
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ConvergenceRow& a, const ConvergenceRow& b) {
        return std::tie(a.N, a.s, a.t) < std::tie(b.N, b.s, b.t);
    });
    return rows;
}

RunManifest run_converge(const ExperimentConfig& cfg) {
    Session ses(cfg, "converge");
    const auto rows = convergence_rows(cfg, ses.manifest);
    std::ostringstream os;
    os << "# schema=1\nexperiment,N,epsilon,s,t,error,stderr,points\n";
    for (const auto& r : rows)
        os << cfg.id << ',' << r.N << ',' << num(r.epsilon) << ',' << r.s << ',' << num(r.t) << ','
           << num(r.error.sup_error) << ',' << num(r.error.stderr_at_sup) << ',' << r.error.points_tested << '\n';
    ses.emit("converge.csv", os.str());
    return ses.finish();
}

RunManifest run_badset_scan(const ExperimentConfig& cfg) {
    Session ses(cfg, "badset-scan");
    const auto& b = cfg.badset;
    const BadSetFlavor flavor = b.flavor == "appA" ? BadSetFlavor::appA : BadSetFlavor::prop9;

    SimConfig sc;
    sc.d = cfg.d;
    sc.N = 1;
    sc.epsilon = b.epsilon;
    sc.ell = std::pow(b.epsilon, -(cfg.d - 1));

    BadSetContext ctx;
    ctx.state = PhasePoint(cfg.d, int(b.context_x.size() / std::size_t(cfg.d)));
    ctx.state.x = b.context_x;
    ctx.state.v = b.context_v;
    ctx.parent = b.parent;

    using Point = std::array<double, 6>;  // alpha, y, eta, theta, R, T
    std::set<Point> grid;
    for (double a : b.alpha)
        for (double y : b.y)
            for (double e : b.eta)
                for (double th : b.theta)
                    for (double R : b.R)
                        for (double T : b.T) grid.insert({a, y, e, th, R, T});

    struct Result {
        Point p;
        CutoffParams cut;
        BadMeasure m;
        bool skipped = false;
    };
    std::vector<Result> results;
    for (const auto& p : grid) {
        Result r{p, cfg.cut, {}, false};
        r.cut.alpha = p[0];
        r.cut.y = p[1];
        r.cut.eta = p[2];
        r.cut.theta = p[3];
        r.cut.R = p[4];
        const double T = p[5];
        try {
            check_bad_set_hypothesis(r.cut, sc);
        } catch (const InputError&) {
            r.skipped = true;
        }
        if (!r.skipped) {
            std::ostringstream key;
            key << "badset/" << num(r.cut.alpha) << ',' << num(r.cut.y) << ',' << num(r.cut.eta) << ','
                << num(r.cut.theta) << ',' << num(r.cut.R) << ',' << num(T);
            r.m = estimate_bad_measure(ctx, r.cut, sc, T, b.M, ses.seed(key.str()), flavor, ses.manifest.workers);
        }
        results.push_back(r);
    }

    double fitted_C = 0;
    for (const auto& r : results)
        if (!r.skipped && r.m.scale * r.m.bracket > 0) fitted_C = std::max(fitted_C, r.m.estimate / (r.m.scale * r.m.bracket));

    // Slope along one coordinate, holding the others fixed.
    auto exponent = [&](const Result& me, std::size_t axis) {
        std::vector<double> xs, ys;
        for (const auto& r : results) {
            if (r.skipped) continue;
            bool same = true;
            for (std::size_t k = 0; k < 6; ++k)
                if (k != axis && r.p[k] != me.p[k]) same = false;
            if (!same) continue;
            xs.push_back(r.p[axis]);
            ys.push_back(r.m.estimate);
        }
        return log_log_slope(xs, ys);
    };

    std::ostringstream os, sub;
    os << "# schema=1\nexperiment,flavor,alpha,y,eta,theta,R,T,estimate,stderr,bracket,scale,ratio,fitted_C,"
          "theta_exponent,eta_exponent,skipped\n";
    write_badset_csv_header(sub);
    for (const auto& r : results) {
        const double T = r.p[5];
        const double ratio = r.skipped ? std::numeric_limits<double>::quiet_NaN() : r.m.estimate / (r.m.scale * r.m.bracket);
        const double th_exp = r.skipped ? std::numeric_limits<double>::quiet_NaN() : exponent(r, 3);
        const double eta_exp = r.skipped ? std::numeric_limits<double>::quiet_NaN() : exponent(r, 2);
        os << cfg.id << ',' << flavor_name(flavor) << ',' << num(r.cut.alpha) << ',' << num(r.cut.y) << ','
           << num(r.cut.eta) << ',' << num(r.cut.theta) << ',' << num(r.cut.R) << ',' << num(T) << ','
           << (r.skipped ? "" : num(r.m.estimate)) << ',' << (r.skipped ? "" : num(r.m.std_err)) << ','
           << (r.skipped ? "" : num(r.m.bracket)) << ',' << (r.skipped ? "" : num(r.m.scale)) << ','
           << opt_num(ratio) << ',' << num(fitted_C) << ',' << opt_num(th_exp) << ',' << opt_num(eta_exp) << ','
           << (r.skipped ? 1 : 0) << '\n';
        if (!r.skipped) write_badset_csv_rows(sub, flavor, r.cut, T, r.m, false);
    }
    ses.emit("badset_scan.csv", os.str());
    ses.emit("badset_subsets.csv", sub.str());
    return ses.finish();
}

RunManifest run_pseudo(const ExperimentConfig& cfg) {
    Session ses(cfg, "pseudo");
    const auto& p = cfg.pseudo;
    PhasePoint zs(cfg.d, int(p.x.size() / std::size_t(cfg.d)));
    zs.x = p.x;
    zs.v = p.v;
    std::vector<Flavor> flavors;
    for (const auto& name : p.flavors) {
        if (name == "bbgky") flavors.push_back(Flavor::bbgky());
        else if (name == "boltzmann") flavors.push_back(Flavor::boltzmann());
        else throw ConfigError("[pseudo] flavors: expected bbgky or boltzmann, got '" + name + "'");
    }
    std::ostringstream os;
    os << "# schema=1\nN,flavor,s,k,t,value,stderr,samples\n";
    for (const auto& sc : cfg.scan()) {
        if (zs.size() > sc.N) continue;
        for (const auto& fl : flavors) {
            HierarchyData data;
            if (fl.kind == FlavorKind::bbgky) {
                Rng rng(ses.seed("partition/N=" + std::to_string(sc.N)));
                const auto zN = estimate_partition(int(sc.N), sc, cfg.density, p.partition_draws, rng);
                if (!(zN.value > 0)) throw InputError("pseudo: no accepted draw for the partition function");
                data = conditioned_marginals(sc, cfg.density, zN.value, p.inner_draws,
                                             ses.seed("marginals/N=" + std::to_string(sc.N)));
            } else {
                const DensitySpec f0 = cfg.density;
                data = product_data([f0](const double* x, const double* v) { return f0.eval(x, v); });
            }
            for (double t : cfg.times) {
                SeriesOptions opt;
                opt.M = cfg.series_M;
                opt.workers = ses.manifest.workers;
                opt.policy = cfg.policy;
                opt.seed = ses.seed("pseudo/" + fl.name() + "/" + tag(sc, t));
                const auto est = duhamel_mc(zs, t, cfg.cut.n, sc, cfg.cut, data, fl, opt);
                std::ostringstream rows;
                write_series_csv_rows(rows, fl, zs.size(), t, est);
                std::istringstream in(rows.str());
                for (std::string line; std::getline(in, line);) os << sc.N << ',' << line << '\n';
            }
        }
    }
    ses.emit("pseudo.csv", os.str());
    return ses.finish();
}

RunManifest run_partition(const ExperimentConfig& cfg) {
    Session ses(cfg, "partition");
    std::ostringstream os;
    os << "# schema=1\nexperiment,N,epsilon,s,value,stderr,samples,c,lower_bound,ratio_to_N,ratio_upper\n";
    for (const auto& sc : cfg.scan()) {
        const long s_max = cfg.partition_s_max > 0 ? std::min(cfg.partition_s_max, sc.N) : sc.N;
        const double c = conditioning_constant(sc, cfg.density);
        std::vector<long> sizes;
        for (long s = 1; s <= s_max; ++s) sizes.push_back(s);
        if (s_max < sc.N) sizes.push_back(sc.N);
        std::map<long, PartitionEstimate> est;
        std::vector<PartitionEstimate> slot(sizes.size());
        std::vector<std::uint64_t> seeds;
        for (long s : sizes) seeds.push_back(ses.seed("partition/N=" + std::to_string(sc.N) + ",s=" + std::to_string(s)));
        run_tasks(sizes.size(), ses.manifest.workers, [&](std::size_t i) {
            Rng rng(seeds[i]);
            slot[i] = estimate_partition(int(sizes[i]), sc, cfg.density, cfg.partition_M, rng);
        });
        for (std::size_t i = 0; i < sizes.size(); ++i) est[sizes[i]] = slot[i];
        const double zN = est[sc.N].value;
        for (long s = 1; s <= s_max; ++s) {
            const auto& e = est[s];
            const double prev = s == 1 ? 1.0 : est[s - 1].value;
            os << cfg.id << ',' << sc.N << ',' << num(sc.epsilon) << ',' << s << ',' << num(e.value) << ','
               << num(e.std_err) << ',' << e.samples << ',' << num(c) << ',' << num(prev * (1 - c)) << ','
               << (zN > 0 ? num(e.value / zN) : "") << ',' << num(std::pow(1 - c, -double(sc.N - s))) << '\n';
        }
    }
    ses.emit("partition.csv", os.str());
    return ses.finish();
}

}  // namespace kc
