#include "kinetic_chaos/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "kinetic_chaos/checks.hpp"
#include "kinetic_chaos/config.hpp"
#include "kinetic_chaos/experiments.hpp"
#include "kinetic_chaos/flow.hpp"

namespace kc {

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_config) {
    if (with_config) {
        auto* flag = cmd->add_option("--config", o.config, "experiment definition (INI)");
        auto* pos = cmd->add_option("config_path", o.config, "experiment definition (INI)");
        flag->excludes(pos);
    }
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
    cmd->add_option("--workers", o.workers, "worker threads; KINETIC_CHAOS_WORKERS is the fallback")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, with_config ? "output directory (overrides the config)" : "directory for check CSVs");
}

ExperimentConfig load(const Overrides& o) {
    if (o.config.empty()) throw ConfigError("no config file given (--config PATH)");
    auto cfg = load_experiment(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    else if (std::getenv("KINETIC_CHAOS_WORKERS")) cfg.workers = 0;
    if (o.out) cfg.out_dir = *o.out;
    return cfg;
}

int verify(const std::string& suite, const Overrides& o, double scale, std::ostream& out, std::ostream& err) {
    std::vector<const CheckInfo*> checks;
    try {
        checks = suite_checks(suite);
    } catch (const std::out_of_range&) {
        err << "unknown suite '" << suite << "'; available:";
        for (const auto& s : suite_names()) err << ' ' << s;
        err << '\n';
        return 2;
    }
    CheckBudget budget;
    budget.scale = scale;
    if (o.seed) budget.seed = *o.seed;
    if (o.workers) budget.workers = *o.workers;
    bool all = true;
    out << std::left << std::setw(24) << "check" << std::setw(14) << "suite" << std::setw(8) << "result"
        << std::setw(10) << "seconds" << "detail\n";
    for (const auto* c : checks) {
        const auto r = run_check(*c, budget);
        all = all && r.pass;
        out << std::left << std::setw(24) << r.name << std::setw(14) << c->suite << std::setw(8)
            << (r.pass ? "PASS" : "FAIL") << std::setw(10) << std::fixed << std::setprecision(2) << r.seconds
            << std::defaultfloat << r.detail << '\n';
        out.flush();
        if (o.out)
            for (const auto& [name, text] : r.artifacts) {
                std::filesystem::create_directories(*o.out);
                std::ofstream(std::filesystem::path(*o.out) / name, std::ios::binary) << text;
            }
    }
    return all ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hard-sphere kinetic simulation and verification toolkit", "kinetic-chaos"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    Overrides o;
    std::string suite = "all";
    double scale = 1.0;
    auto* sim = app.add_subcommand("simulate", "ensemble marginals on the time grid");
    auto* conv = app.add_subcommand("converge", "chaos error against the Boltzmann reference");
    auto* scan = app.add_subcommand("badset-scan", "bad-set measure over a parameter grid");
    auto* pseudo = app.add_subcommand("pseudo", "Duhamel series estimates at a fixed point");
    auto* part = app.add_subcommand("partition", "partition functions and conditioning bounds");
    auto* ver = app.add_subcommand("verify", "run a check suite");
    for (auto* cmd : {sim, conv, scan, pseudo, part}) add_common(cmd, o, true);
    add_common(ver, o, false);
    ver->add_option("suite", suite, "suite name or check name (default all)");
    ver->add_option("--scale", scale, "multiplier on sample counts")->check(CLI::PositiveNumber);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (ver->parsed()) return verify(suite, o, scale, out, err);
        const auto cfg = load(o);
        RunManifest m;
        if (sim->parsed()) m = run_simulate(cfg);
        else if (conv->parsed()) m = run_converge(cfg);
        else if (scan->parsed()) m = run_badset_scan(cfg);
        else if (pseudo->parsed()) m = run_pseudo(cfg);
        else m = run_partition(cfg);
        out << m.command << ": wrote";
        for (const auto& f : m.outputs) out << ' ' << f;
        out << " manifest.txt to " << cfg.out_dir << '\n';
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    } catch (const DegenerateEventError& e) {
        err << "degenerate event: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace kc
