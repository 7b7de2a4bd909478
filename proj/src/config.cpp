#include "kinetic_chaos/config.hpp"

#include <CLI11.hpp>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kc {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

double to_double(const std::string& sec, const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("[" + sec + "] " + key + ": '" + s + "' is not a number");
    }
}

long to_long(const std::string& sec, const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("[" + sec + "] " + key + ": '" + s + "' is not an integer");
    }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile f;
    f.text_ = text;
    std::istringstream is(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(is);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;
        std::string section;
        for (const auto& p : it.parents) section += (section.empty() ? "" : ".") + lower(p);
        if (section.empty()) throw ConfigError("config: key '" + it.name + "' appears before any [section]");
        std::vector<std::string> vals;
        for (const auto& v : it.inputs)
            if (!v.empty()) vals.push_back(v);
        f.entries_[std::make_pair(section, lower(it.name))] = vals;
    }
    // The INI reader merges repeated keys; a repeated key is almost always a mistake here.
    std::set<std::pair<std::string, std::string>> seen;
    std::string section;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == ';' || line[b] == '#') continue;
        if (line[b] == '[') {
            section = lower(line.substr(b + 1, line.find(']', b) - b - 1));
            continue;
        }
        const auto eq = line.find('=', b);
        if (eq == std::string::npos) continue;
        std::string key = line.substr(b, eq - b);
        key.erase(key.find_last_not_of(" \t") + 1);
        if (!seen.insert({section, lower(key)}).second)
            throw ConfigError("config: duplicate key " + key + " in [" + section + "]");
    }
    return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return entries_.count({section, key}) > 0;
}

const std::vector<std::string>& ConfigFile::values(const std::string& section, const std::string& key) const {
    auto it = entries_.find({section, key});
    if (it == entries_.end()) throw ConfigError("config: missing [" + section + "] " + key);
    used_.insert({section, key});
    return it->second;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    if (!has(section, key)) return fallback;
    const auto& v = values(section, key);
    if (v.size() != 1) throw ConfigError("[" + section + "] " + key + ": expected one value");
    return v[0];
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    return to_double(section, key, get_string(section, key, ""));
}

long ConfigFile::get_long(const std::string& section, const std::string& key, long fallback) const {
    if (!has(section, key)) return fallback;
    return to_long(section, key, get_string(section, key, ""));
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<double> out;
    for (const auto& s : values(section, key)) out.push_back(to_double(section, key, s));
    return out;
}

std::vector<long> ConfigFile::get_longs(const std::string& section, const std::string& key,
                                        const std::vector<long>& fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<long> out;
    for (const auto& s : values(section, key)) out.push_back(to_long(section, key, s));
    return out;
}

void ConfigFile::reject_unused() const {
    for (const auto& [key, v] : entries_)
        if (!used_.count(key)) throw ConfigError("config: unknown key " + key.second + " in [" + key.first + "]");
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<SimConfig> ExperimentConfig::scan() const {
    std::vector<SimConfig> out;
    for (long N : N_values) out.push_back(SimConfig::from_scaling(d, N, ell));
    return out;
}

namespace {

Window read_window(const ConfigFile& f, const std::string& sec, int d, const Window& fallback) {
    const int xb = fallback.bins.front(), vb = fallback.bins.back();
    const double xlo = f.get_double(sec, "x_lo", fallback.lo.front()), xhi = f.get_double(sec, "x_hi", fallback.hi.front());
    const double vlo = f.get_double(sec, "v_lo", fallback.lo.back()), vhi = f.get_double(sec, "v_hi", fallback.hi.back());
    Window w = Window::uniform(d, xlo, xhi, int(f.get_long(sec, "x_bins", xb)), vlo, vhi,
                               int(f.get_long(sec, "v_bins", vb)));
    try {
        w.validate();
    } catch (const std::exception& e) {
        throw ConfigError("[" + sec + "] " + e.what());
    }
    return w;
}

ChiProfile parse_chi(const std::string& s) {
    if (s == "none") return ChiProfile::none;
    if (s == "linear") return ChiProfile::linear;
    if (s == "smoothstep") return ChiProfile::smoothstep;
    throw ConfigError("[cutoff] chi: expected none, linear or smoothstep, got '" + s + "'");
}

}  // namespace

ExperimentConfig parse_experiment(const ConfigFile& f) {
    ExperimentConfig c;
    c.source_text = f.text();
    c.id = f.get_string("experiment", "id", c.id);
    c.seed = std::uint64_t(f.get_long("experiment", "seed", long(c.seed)));
    c.workers = int(f.get_long("experiment", "workers", c.workers));
    c.out_dir = f.get_string("experiment", "out", c.out_dir);

    c.d = int(f.get_long("system", "d", c.d));
    if (c.d < 2 || c.d > kMaxDim) throw ConfigError("[system] d must be 2 or 3");
    c.N_values = f.get_longs("system", "n", c.N_values);
    if (c.N_values.empty()) throw ConfigError("[system] N: empty scan");
    for (long N : c.N_values)
        if (N < 1) throw ConfigError("[system] N: values must be positive");
    const std::string policy = f.get_string("system", "policy", "perturb");
    if (policy == "reject") c.policy.degenerate = DegeneratePolicy::reject;
    else if (policy == "perturb") c.policy.degenerate = DegeneratePolicy::perturb;
    else throw ConfigError("[system] policy: expected reject or perturb");

    const std::string kind = f.get_string("density", "kind", "gaussian");
    const double beta = f.get_double("density", "beta", 1.0);
    if (kind == "gaussian") c.density = DensitySpec::gaussian(c.d, f.get_double("density", "x_sigma", 1.0), beta);
    else if (kind == "box")
        c.density = DensitySpec::uniform_box(c.d, f.get_double("density", "box_lo", 0.0),
                                             f.get_double("density", "box_hi", 1.0), beta);
    else throw ConfigError("[density] kind: expected gaussian or box");
    try {
        c.density.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("[density] ") + e.what());
    }

    if (f.has("system", "ell") && f.has("system", "smallness"))
        throw ConfigError("[system] give either ell or smallness, not both");
    if (f.has("system", "ell")) {
        c.ell = f.get_double("system", "ell", 0);
    } else {
        const double target = f.get_double("system", "smallness", 0.02);
        const auto cert = c.density.weight_certificate();
        if (!cert) throw ConfigError("[system] smallness needs data with a weight certificate; give ell instead");
        if (!(target > 0)) throw ConfigError("[system] smallness must be positive");
        c.ell = std::exp(-cert->mu) * std::pow(cert->beta, -0.5 * (c.d + 1)) / target;
    }
    if (!(c.ell > 0)) throw ConfigError("[system] ell must be positive");

    auto& cut = c.cut;
    cut.eta = f.get_double("cutoff", "eta", cut.eta);
    cut.R = f.get_double("cutoff", "r", 3.0);
    cut.alpha = f.get_double("cutoff", "alpha", cut.alpha);
    cut.y = f.get_double("cutoff", "y", cut.y);
    cut.theta = f.get_double("cutoff", "theta", cut.theta);
    cut.kappa = f.get_double("cutoff", "kappa", cut.kappa);
    cut.n = int(f.get_long("cutoff", "n", 3));
    cut.chi = parse_chi(f.get_string("cutoff", "chi", "smoothstep"));
    cut.c_d = f.get_double("cutoff", "c_d", cut.c_d);
    try {
        cut.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("[cutoff] ") + e.what());
    }

    c.times = f.get_doubles("time", "grid", c.times);
    if (c.times.empty()) throw ConfigError("[time] grid: empty time grid");
    for (double t : c.times)
        if (!(t >= 0)) throw ConfigError("[time] grid: times must be nonnegative");

    c.M = f.get_long("sampling", "m", c.M);
    if (c.M <= 0) throw ConfigError("[sampling] M must be positive");
    c.max_injections = f.get_long("sampling", "max_injections", c.max_injections);
    c.marginal_s.clear();
    for (long s : f.get_longs("sampling", "marginals", {1, 2})) {
        if (s != 1 && s != 2) throw ConfigError("[sampling] marginals: only 1 and 2 are supported");
        c.marginal_s.push_back(int(s));
    }
    if (c.marginal_s.empty()) throw ConfigError("[sampling] marginals: empty list");
    c.window1 = read_window(f, "window", c.d, Window::uniform(c.d, -2, 2, 4, -2, 2, 4));
    c.window2 = read_window(f, "window2", c.d, Window::uniform(c.d, -2, 2, 2, -2, 2, 2));

    c.series_M = f.get_long("series", "m", c.series_M);
    c.smallness_threshold = f.get_double("series", "threshold", c.smallness_threshold);
    c.inner_samples = f.get_long("series", "inner_samples", c.inner_samples);
    if (c.series_M <= 0 || c.inner_samples <= 0) throw ConfigError("[series] sample counts must be positive");

    c.partition_M = f.get_long("partition", "m", c.partition_M);
    c.partition_s_max = f.get_long("partition", "s_max", c.partition_s_max);

    auto& b = c.badset;
    b.alpha = f.get_doubles("badset", "alpha", {c.cut.alpha});
    b.y = f.get_doubles("badset", "y", {c.cut.y});
    b.eta = f.get_doubles("badset", "eta", {c.cut.eta});
    b.theta = f.get_doubles("badset", "theta", {c.cut.theta});
    b.R = f.get_doubles("badset", "r", {2.0});
    b.T = f.get_doubles("badset", "t", {1.0});
    b.M = f.get_long("badset", "m", b.M);
    b.flavor = f.get_string("badset", "flavor", b.flavor);
    b.epsilon = f.get_double("badset", "epsilon", b.epsilon);
    b.context_x = f.get_doubles("badset", "context_x", {0, 0, 1, 0.3, -0.4, 0.9});
    b.context_v = f.get_doubles("badset", "context_v", {0, 0, -0.8, -0.2, 0.3, -0.9});
    b.parent = int(f.get_long("badset", "parent", 0));
    if (b.flavor != "prop9" && b.flavor != "appA") throw ConfigError("[badset] flavor: expected prop9 or appA");
    if (b.M <= 0 || !(b.epsilon > 0)) throw ConfigError("[badset] M and epsilon must be positive");
    if (b.context_x.size() != b.context_v.size() || b.context_x.empty() || b.context_x.size() % std::size_t(c.d))
        throw ConfigError("[badset] context_x and context_v must hold the same whole number of d-vectors");
    if (b.parent < 0 || b.parent >= int(b.context_x.size() / std::size_t(c.d)))
        throw ConfigError("[badset] parent out of range");
    for (const auto* list : {&b.alpha, &b.y, &b.eta, &b.theta, &b.R, &b.T})
        if (list->empty()) throw ConfigError("[badset] empty parameter list");

    auto& p = c.pseudo;
    if (f.has("pseudo", "flavors")) p.flavors = f.values("pseudo", "flavors");
    p.x = f.get_doubles("pseudo", "x", std::vector<double>(std::size_t(c.d), 0.0));
    p.v = f.get_doubles("pseudo", "v", std::vector<double>(std::size_t(c.d), 0.0));
    p.inner_draws = f.get_long("pseudo", "inner_draws", p.inner_draws);
    p.partition_draws = f.get_long("pseudo", "partition_draws", p.partition_draws);
    if (p.x.size() != p.v.size() || p.x.empty() || p.x.size() % std::size_t(c.d))
        throw ConfigError("[pseudo] x and v must hold the same whole number of d-vectors");

    f.reject_unused();
    for (const auto& cfg : c.scan())
        if (cfg.scaling_residual() > 1e-12) throw ConfigError("[system] scan entry violates N eps^(d-1) l = 1");
    return c;
}

ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(ConfigFile::load(path)); }

}  // namespace kc
