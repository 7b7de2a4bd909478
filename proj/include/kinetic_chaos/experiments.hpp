#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kinetic_chaos/config.hpp"
#include "kinetic_chaos/ensemble.hpp"

namespace kc {

std::string code_version();

// Written next to the CSVs as manifest.txt (key=value lines).
struct RunManifest {
    std::string command;
    std::string experiment;
    std::uint64_t config_hash = 0;
    std::uint64_t master_seed = 0;
    int workers = 1;
    double wall_seconds = 0;
    long events = 0;
    long perturbations = 0;
    std::map<std::string, std::uint64_t> task_seeds;  // task name -> stream seed
    std::vector<std::string> outputs;                  // file names relative to the output directory

    void write(std::ostream& os) const;
};

// Seed of a named task; independent of task order and worker count.
std::uint64_t task_seed(std::uint64_t master, const std::string& task);

// Each runner writes its CSVs, a copy of the config (run_config.ini) and
// manifest.txt into cfg.out_dir, creating it when missing.
//
// simulate_s<s>.csv:  experiment,N,epsilon,t,s,cell,<p0_x0..p0_v{d-1}, ...>,value,stderr
// converge.csv:       experiment,N,epsilon,s,t,error,stderr,points
// badset_scan.csv:    experiment,flavor,alpha,y,eta,theta,R,T,estimate,stderr,bracket,scale,ratio,
//                     fitted_C,theta_exponent,eta_exponent,skipped
// badset_subsets.csv: flavor,subset,alpha,y,eta,theta,R,T,estimate,stderr,bracket,skipped
// pseudo.csv:         N,flavor,s,k,t,value,stderr,samples
// partition.csv:      experiment,N,epsilon,s,value,stderr,samples,c,lower_bound,ratio_to_N,ratio_upper
// All files start with "# schema=1". Exponent columns are empty when the
// scan has fewer than two usable values of that parameter.
RunManifest run_simulate(const ExperimentConfig& cfg);
RunManifest run_converge(const ExperimentConfig& cfg);
RunManifest run_badset_scan(const ExperimentConfig& cfg);
RunManifest run_pseudo(const ExperimentConfig& cfg);
RunManifest run_partition(const ExperimentConfig& cfg);

struct ConvergenceRow {
    long N = 0;
    double epsilon = 0;
    int s = 1;
    double t = 0;
    ChaosError error;
};

// The converge table, sorted by (N, s, t); task seeds and event counts go to the manifest.
std::vector<ConvergenceRow> convergence_rows(const ExperimentConfig& cfg, RunManifest& manifest);

// Least-squares slope of log(y) against log(x) over pairs with x, y > 0;
// NaN with fewer than two distinct x.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace kc
