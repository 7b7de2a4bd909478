#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "kinetic_chaos/checks.hpp"
#include "kinetic_chaos/cli.hpp"
#include "kinetic_chaos/config.hpp"
#include "kinetic_chaos/ensemble.hpp"
#include "kinetic_chaos/experiments.hpp"
#include "kinetic_chaos/rng.hpp"
#include "kinetic_chaos/stats.hpp"

using namespace kc;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("kc_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "exp.ini";
    std::ofstream(p) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

using Row = std::map<std::string, std::string>;

// Checks the schema line and returns the data rows keyed by header names.
std::vector<Row> read_csv(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line == "# schema=1");
    REQUIRE(std::getline(in, line));
    std::vector<std::string> header;
    std::stringstream hs(line);
    for (std::string c; std::getline(hs, c, ',');) header.push_back(c);
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        Row r;
        std::stringstream ls(line);
        std::string c;
        for (std::size_t i = 0; i < header.size(); ++i) {
            std::getline(ls, c, ',');
            r[header[i]] = c;
        }
        rows.push_back(r);
    }
    return rows;
}

double num(const Row& r, const std::string& key) { return std::stod(r.at(key)); }

const std::string base = R"([experiment]
id = smoke
seed = 7
[system]
d = 2
N = 1
smallness = 0.02
[time]
grid = 0.5
[sampling]
M = 4000
)";

}  // namespace

TEST_CASE("config: parsing, defaults and errors") {
    auto f = ConfigFile::parse("[system]\nN = 8 32 128\nd = 2\n[time]\ngrid = 0 0.25\n");
    auto c = parse_experiment(f);
    CHECK(c.N_values == std::vector<long>{8, 32, 128});
    CHECK(c.times == std::vector<double>{0, 0.25});
    // smallness 0.02 by default: l^{-1} exp(-mu0) beta0^{-3/2} with exp(-mu0) = 1/(4 pi^2), beta0 = 1.
    CHECK(c.ell == doctest::Approx(1.0 / (4 * std::numbers::pi * std::numbers::pi * 0.02)).epsilon(1e-12));
    for (const auto& sc : c.scan()) CHECK(sc.scaling_residual() <= 1e-12);

    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[time]\ngrid =\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[system]\nNN = 3\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[system]\nN = 8 x\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[system]\nell = 1\nsmallness = 0.1\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[system]\nd = 7\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(ConfigFile::parse("[cutoff]\nchi = wavy\n")), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("[a]\nk = 1\nk = 2\n"), ConfigError);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("cli: argument and config errors exit with 2") {
    const auto dir = scratch("errors");
    const std::string empty_grid = R"([system]
N = 1
[time]
grid =
)";
    auto r = cli({"simulate", "--config", write_config(dir, empty_grid), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("empty time grid") != std::string::npos);
    CHECK(cli({"simulate"}).code == 2);
    CHECK(cli({"simulate", "--config", (dir / "missing.ini").string()}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("simulate: N = 1 smoke run matches free streaming") {
    const auto dir = scratch("smoke");
    auto r = cli({"simulate", write_config(dir, base), "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "out" / "simulate_s1.csv"));
    CHECK_FALSE(fs::exists(dir / "out" / "simulate_s2.csv"));
    CHECK(fs::exists(dir / "out" / "manifest.txt"));
    const auto rows = read_csv(dir / "out" / "simulate_s1.csv");
    REQUIRE(!rows.empty());

    // Oracle: cell average of f0(x - v t, v), integrated by Monte Carlo.
    const auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    const double t = 0.5, h = 1.0;  // default window: [-2, 2] with 4 bins per axis
    Rng rng(5);
    int compared = 0;
    double total = 0;
    for (const auto& row : rows) {
        const double value = num(row, "value"), se = num(row, "stderr");
        total += value * std::pow(h, 4);
        if (value < 0.01) continue;
        const double c[4] = {num(row, "p0_x0"), num(row, "p0_x1"), num(row, "p0_v0"), num(row, "p0_v1")};
        RunningStats acc;
        for (int i = 0; i < 200000; ++i) {
            double x[2], v[2];
            for (int k = 0; k < 2; ++k) {
                v[k] = c[2 + k] + h * (rng.uniform() - 0.5);
                x[k] = c[k] + h * (rng.uniform() - 0.5) - v[k] * t;
            }
            acc.add(f0.eval(x, v));
        }
        CHECK(std::abs(value - acc.mean) <= 4 * std::hypot(se, acc.stderr_mean()));
        ++compared;
    }
    CHECK(compared >= 4);
    CHECK(total <= 1.0);
    CHECK(total > 0.5);
}

TEST_CASE("simulate: byte-identical across reruns and worker counts") {
    const auto dir = scratch("determinism");
    const std::string text = R"([experiment]
id = det
seed = 11
[system]
N = 4 8
smallness = 0.02
[time]
grid = 0 0.5
[sampling]
M = 500
)";
    const auto cfg = write_config(dir, text);
    REQUIRE(cli({"simulate", cfg, "--out", (dir / "a").string(), "--workers", "1"}).code == 0);
    REQUIRE(cli({"simulate", cfg, "--out", (dir / "b").string(), "--workers", "1"}).code == 0);
    REQUIRE(cli({"simulate", cfg, "--out", (dir / "c").string(), "--workers", "3"}).code == 0);
    REQUIRE(cli({"simulate", cfg, "--out", (dir / "d").string(), "--seed", "12"}).code == 0);
    for (const char* f : {"simulate_s1.csv", "simulate_s2.csv"}) {
        const auto a = slurp(dir / "a" / f);
        CHECK(a.size() > 100);
        CHECK(a == slurp(dir / "b" / f));
        CHECK(a == slurp(dir / "c" / f));
        CHECK(a != slurp(dir / "d" / f));
    }
    const auto manifest = slurp(dir / "a" / "manifest.txt");
    for (const char* key : {"command=simulate", "config_hash=", "code_version=", "master_seed=11", "wall_seconds=",
                            "events=", "seed.simulate/N=8,t=0.5=", "outputs=simulate_s1.csv simulate_s2.csv"})
        CHECK(manifest.find(key) != std::string::npos);
    CHECK(slurp(dir / "a" / "run_config.ini") == text);
    // Scan consistency of the emitted (N, epsilon) pairs.
    for (const auto& row : read_csv(dir / "a" / "simulate_s1.csv")) {
        const double N = num(row, "N"), eps = num(row, "epsilon");
        CHECK(std::abs(N * eps * 1.0 / (4 * std::numbers::pi * std::numbers::pi * 0.02) - 1.0) <= 1e-12);
    }
}

TEST_CASE("converge: t = 0 error within the conditioning bound, rows sorted") {
    const auto dir = scratch("converge");
    const std::string text = R"([experiment]
id = c0
seed = 3
[system]
N = 16 8
smallness = 0.02
[time]
grid = 0
[sampling]
M = 4000
)";
    REQUIRE(cli({"converge", write_config(dir, text), "--out", (dir / "o").string()}).code == 0);
    const auto rows = read_csv(dir / "o" / "converge.csv");
    REQUIRE(rows.size() == 4);
    const auto f0 = DensitySpec::gaussian(2, 1.0, 1.0);
    const double fmax = 1.0 / (4 * std::numbers::pi * std::numbers::pi);
    long prevN = 0;
    int prevS = 0;
    for (const auto& row : rows) {
        const long N = std::stol(row.at("N"));
        const int s = std::stoi(row.at("s"));
        CHECK((N > prevN || (N == prevN && s > prevS)));
        prevN = N;
        prevS = s;
        SimConfig sc;
        sc.d = 2;
        sc.N = N;
        sc.epsilon = num(row, "epsilon");
        sc.ell = 1.0 / (N * sc.epsilon);
        const double c = conditioning_constant(sc, f0);
        CHECK(num(row, "error") <= (s + 1) * c * std::pow(fmax, s) + 3 * num(row, "stderr"));
        CHECK(std::stol(row.at("points")) > 0);
    }
}

TEST_CASE("badset-scan: single point, deduplication and exponent columns") {
    const auto dir = scratch("badset");
    const std::string single = R"([badset]
alpha = 0.1
y = 0.05
eta = 0.1
theta = 0.3
M = 1000
)";
    REQUIRE(cli({"badset-scan", write_config(dir, single), "--out", (dir / "one").string()}).code == 0);
    auto rows = read_csv(dir / "one" / "badset_scan.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("skipped") == "0");
    CHECK(rows[0].at("theta_exponent").empty());
    CHECK(num(rows[0], "estimate") >= 0);
    CHECK(read_csv(dir / "one" / "badset_subsets.csv").size() == 8);

    const std::string grid = R"([badset]
alpha = 0.1 0.1
y = 0.05
eta = 0.05 0.1 0.05
theta = 0.15 0.3 1e-9
M = 2000
epsilon = 1e-6
)";
    REQUIRE(cli({"badset-scan", write_config(dir, grid), "--out", (dir / "grid").string()}).code == 0);
    rows = read_csv(dir / "grid" / "badset_scan.csv");
    CHECK(rows.size() == 6);
    int skipped = 0;
    for (const auto& r : rows) {
        CHECK(r.count("fitted_C"));
        CHECK(r.count("eta_exponent"));
        if (r.at("skipped") == "1") {
            ++skipped;
            CHECK(r.at("estimate").empty());
            continue;
        }
        CHECK_FALSE(r.at("theta_exponent").empty());
        CHECK_FALSE(r.at("eta_exponent").empty());
        CHECK(num(r, "ratio") <= num(r, "fitted_C") * (1 + 1e-12));
    }
    CHECK(skipped == 2);  // theta = 1e-9 violates sin(theta) > c_d eps / y
}

TEST_CASE("partition and pseudo: layouts and bounds") {
    const auto dir = scratch("partition");
    const std::string text = R"([system]
N = 6
density = x
)";
    CHECK(cli({"partition", write_config(dir, text)}).code == 2);  // unknown key
    const std::string ok = R"([system]
N = 6
ell = 2
[density]
kind = box
[partition]
M = 20000
[pseudo]
x = 0 0
v = 0.5 0
inner_draws = 16
partition_draws = 2000
[series]
M = 500
[time]
grid = 0.25
)";
    const auto cfg = write_config(dir, ok);
    REQUIRE(cli({"partition", cfg, "--out", (dir / "p").string()}).code == 0);
    const auto rows = read_csv(dir / "p" / "partition.csv");
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        const double sig = 3 * num(r, "stderr") + 1e-12;
        CHECK(num(r, "value") >= num(r, "lower_bound") - sig);
        CHECK(num(r, "ratio_to_N") <= num(r, "ratio_upper") + 3 * sig / num(rows.back(), "value"));
    }
    CHECK(num(rows.back(), "ratio_to_N") == 1.0);

    REQUIRE(cli({"pseudo", cfg, "--out", (dir / "q").string()}).code == 0);
    const auto series = read_csv(dir / "q" / "pseudo.csv");
    CHECK(series.size() == 2 * 5);  // two flavors, depths 0..3 and the total
    for (const auto& r : series) CHECK(r.at("N") == "6");
}

TEST_CASE("verify: suites, unknown names and exit codes") {
    auto r = cli({"verify", "nonsense"});
    CHECK(r.code == 2);
    CHECK(r.err.find("lemma-3") != std::string::npos);
    CHECK(r.err.find("all") != std::string::npos);
    r = cli({"verify", "collision", "--scale", "0.05"});
    CHECK(r.code == 0);
    CHECK(r.out.find("collision-algebra") != std::string::npos);
    CHECK(r.out.find("PASS") != std::string::npos);
    r = cli({"verify", "lemma-3", "--scale", "0.05", "--workers", "2"});
    CHECK(r.code == 0);
    const auto dir = scratch("verify");
    r = cli({"verify", "dispersive", "--out", (dir / "v").string()});
    CHECK(r.code == 0);
    const auto rows = read_csv(dir / "v" / "dispersive.csv");
    CHECK(rows.size() == 200);
    for (const auto& row : rows) {
        CHECK(row.at("holds") == "1");
        CHECK(num(row, "ratio") <= 1.0);
    }
    const auto names = suite_names();
    CHECK(names.back() == "all");
}

TEST_CASE("shipped configs parse") {
    int n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(KC_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".ini") continue;
        CHECK_NOTHROW(load_experiment(e.path().string()));
        ++n;
    }
    CHECK(n >= 5);
}
