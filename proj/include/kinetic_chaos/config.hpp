#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinetic_chaos/density.hpp"
#include "kinetic_chaos/ensemble.hpp"
#include "kinetic_chaos/flow.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

// Malformed or inconsistent experiment definitions (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sectioned key-value text: "[section]" headers, "key = v1 v2 ...", ';' or '#' comments.
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    const std::vector<std::string>& values(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                    const std::vector<double>& fallback) const;
    std::vector<long> get_longs(const std::string& section, const std::string& key,
                                const std::vector<long>& fallback) const;

    // Throws ConfigError naming the first key never read, so typos are not silently ignored.
    void reject_unused() const;

    const std::string& text() const { return text_; }

private:
    std::string text_;
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> entries_;
    mutable std::set<std::pair<std::string, std::string>> used_;
};

// FNV-1a 64-bit.
std::uint64_t fnv1a64(const std::string& bytes);

struct BadsetScanConfig {
    std::vector<double> alpha, y, eta, theta, R, T;
    long M = 1000;
    std::string flavor = "prop9";
    double epsilon = 1e-6;
    std::vector<double> context_x, context_v;
    int parent = 0;
};

struct PseudoConfig {
    std::vector<std::string> flavors = {"bbgky", "boltzmann"};
    std::vector<double> x, v;
    long inner_draws = 64;
    long partition_draws = 100000;
};

struct ExperimentConfig {
    std::string id = "experiment";
    int d = 2;
    std::vector<long> N_values = {8};
    double ell = 0;  // resolved from "ell" or from "smallness" and the data certificate
    DensitySpec density = DensitySpec::gaussian(2, 1.0, 1.0);
    CutoffParams cut{};
    std::vector<double> times = {0.5};
    long M = 20000;
    std::uint64_t seed = 1;
    int workers = 0;
    std::string out_dir = ".";
    FlowPolicy policy{};

    std::vector<int> marginal_s = {1, 2};
    Window window1 = Window::uniform(2, -2, 2, 4, -2, 2, 4);
    Window window2 = Window::uniform(2, -2, 2, 2, -2, 2, 2);
    long max_injections = 200;

    long series_M = 4000;
    double smallness_threshold = 0.05;
    long inner_samples = 64;

    long partition_M = 100000;
    long partition_s_max = 0;  // 0: up to N

    BadsetScanConfig badset{};
    PseudoConfig pseudo{};

    std::string source_text;  // verbatim config, hashed into the manifest

    std::vector<SimConfig> scan() const;
    const Window& window(int s) const { return s == 1 ? window1 : window2; }
};

// Parses and validates; every scan entry satisfies the scaling constraint.
ExperimentConfig parse_experiment(const ConfigFile& file);
ExperimentConfig load_experiment(const std::string& path);

}  // namespace kc
