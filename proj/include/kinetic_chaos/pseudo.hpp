#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kinetic_chaos/flow.hpp"
#include "kinetic_chaos/hierarchy.hpp"
#include "kinetic_chaos/rng.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

enum class FlavorKind { bbgky, boltzmann, enskog };

struct Flavor {
    FlavorKind kind = FlavorKind::bbgky;
    int m = 3;  // enskog: collisions only among the first m-1 particles

    static Flavor bbgky() { return {FlavorKind::bbgky, 0}; }
    static Flavor boltzmann() { return {FlavorKind::boltzmann, 0}; }
    static Flavor enskog(int m) { return {FlavorKind::enskog, m}; }
    std::string name() const;
};

struct Creation {
    double t = 0;
    std::vector<double> v;
    std::vector<double> omega;
    int parent = 0;  // 0-based, < s + j for the j-th creation (j from 0)
};

struct CreationSequence {
    std::vector<Creation> entries;  // times strictly decreasing
    int k() const { return int(entries.size()); }
    void validate(int s, double t, int d) const;
};

struct PseudoTrajectoryResult {
    PhasePoint final_state;
    bool undefined = false;
    double kernel = 0;
    std::vector<bool> post_collisional;  // per creation: the exchange was applied
};

// Backward recursion with particle creations. The kernel is the product of
// omega_j . (v_new - v_parent), times the suitability indicators for bbgky.
PseudoTrajectoryResult build_pst(const PhasePoint& zs, double t, const CreationSequence& seq, const SimConfig& cfg,
                                 const Flavor& flavor, const FlowPolicy& policy = {});

// (N-s)! / (N-s-k)! eps^{k(d-1)}.
double coefficient_a(long N, int k, int s, const SimConfig& cfg);

struct DepthTerm {
    int k = 0;
    double contribution = 0;
    double std_err = 0;
    double magnitude = 0;  // mean of |weighted sample|, the majorant of this depth
    long samples = 0;
};

struct SeriesEstimate {
    double value = 0;
    double std_err = 0;
    std::vector<DepthTerm> per_depth;
    long samples = 0;
};

struct SeriesOptions {
    long M = 10000;                // samples per depth
    std::uint64_t seed = 1;
    int workers = 1;
    double proposal_beta = 1.0;    // Gaussian velocity proposal N(0, I / proposal_beta)
    long chunk = 512;              // samples per task; fixed so results do not depend on workers
    FlowPolicy policy{};
};

// Draws the s-particle point at which the series is evaluated; nullptr means
// the fixed point passed to duhamel_mc.
using PointSampler = std::function<PhasePoint(Rng&)>;

// Monte Carlo estimate of the truncated Duhamel series (depths 0..n) at zs.
// Depths are sampled independently. The energy cutoff chi(E/R^2) multiplies
// the data unless cut.chi is none; with a cutoff, velocity proposals are
// truncated to the ball of radius 2R.
SeriesEstimate duhamel_mc(const PhasePoint& zs, double t, int n, const SimConfig& cfg, const CutoffParams& cut,
                          const HierarchyData& data, const Flavor& flavor, const SeriesOptions& opt);

// Same, with the evaluation point redrawn for every sample (averages the series
// over the law of the sampler, e.g. uniform in a cell).
SeriesEstimate duhamel_mc_sampled(const PointSampler& sampler, int s, int d, double t, int n, const SimConfig& cfg,
                                  const CutoffParams& cut, const HierarchyData& data, const Flavor& flavor,
                                  const SeriesOptions& opt);

struct FactorizationResidual {
    double residual = 0;   // full - product
    double std_err = 0;
    double full = 0;
    double product = 0;
};

// Compares the unsymmetric hierarchy at s >= 3 particles with the product of
// its pair and one-particle solutions, all truncated at total depth n. The
// initial data is g2(z1, z2) prod_{i>=3} g1(z_i).
FactorizationResidual enskog_factorization_residual(
    const PhasePoint& zs, double t, int n, const SimConfig& cfg,
    const std::function<double(const double* x1, const double* v1, const double* x2, const double* v2)>& g2,
    const std::function<double(const double* x, const double* v)>& g1, int m, const SeriesOptions& opt);

// CSV rows: flavor,s,k,t,value,stderr,samples (k = -1 is the total).
void write_series_csv_header(std::ostream& os);
void write_series_csv_rows(std::ostream& os, const Flavor& flavor, int s, double t, const SeriesEstimate& est);

}  // namespace kc
