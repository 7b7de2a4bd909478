#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "kinetic_chaos/density.hpp"
#include "kinetic_chaos/flow.hpp"
#include "kinetic_chaos/hierarchy.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

struct PartitionEstimate {
    int s = 1;
    double value = 1.0;
    double std_err = 0.0;
    long samples = 0;
};

struct SamplerOptions {
    double acceptance_floor = 1e-4;
};

// One draw of N particles from f0^{(x)N} conditioned on no overlap. Sequential
// rejection: particles are drawn one at a time and the whole draw restarts at
// the first overlap, which has the same law as drawing all N and testing.
PhasePoint sample_initial(const SimConfig& cfg, const DensitySpec& f0, Rng& rng, const SamplerOptions& opt = {});

// Fraction of M product draws of s particles with no overlap.
PartitionEstimate estimate_partition(int s, const SimConfig& cfg, const DensitySpec& f0, long M, Rng& rng);

// Initial marginals of the conditioned N-particle measure:
//   f^{(s)}(Z) = prod f0(z_i) 1_D(X) Q_{N-s}(X) / Z_N,
// with Q the probability that N - s fresh positions avoid X and each other.
// Q is estimated by inner_draws fresh draws per call (unbiased), seeded from
// the coordinates so repeated calls agree.
HierarchyData conditioned_marginals(const SimConfig& cfg, const DensitySpec& f0, double partition_N, long inner_draws,
                                    std::uint64_t seed);

// l^{-1} |B_1^d| ||f0|| eps, the small parameter of the conditioning bounds.
double conditioning_constant(const SimConfig& cfg, const DensitySpec& f0);

struct Ensemble {
    double t = 0;
    std::vector<PhasePoint> initial;
    std::vector<PhasePoint> final;
    long events = 0;
    long perturbations = 0;
};

// M replicas; replica r uses the stream (seed, r), so the result does not
// depend on the number of workers.
Ensemble evolve_ensemble(const SimConfig& cfg, const DensitySpec& f0, double t, long M, const FlowPolicy& policy,
                         std::uint64_t seed, int workers = 1, const SamplerOptions& opt = {});

// Axis-aligned grid for one particle: 2d axes (positions, then velocities).
struct Window {
    std::vector<double> lo, hi;
    std::vector<int> bins;

    static Window uniform(int d, double x_lo, double x_hi, int x_bins, double v_lo, double v_hi, int v_bins);
    int dim() const { return int(lo.size()) / 2; }
    void validate() const;
};

struct MarginalEstimate {
    int s = 1;
    int d = 2;
    Window window;
    std::vector<double> values;  // density, cell average
    std::vector<double> std_err;
    long ensemble_size = 0;
    long injections = 0;

    std::size_t cells_per_particle() const;
    std::size_t cell_count() const { return values.size(); }
    double cell_volume() const;  // of the full s-particle cell
    // Per-particle single-cell indices of an s-particle cell (particle 0 slowest).
    std::vector<std::size_t> split(std::size_t cell) const;
    void single_cell_bounds(std::size_t single, double* lo, double* hi) const;
    PhasePoint cell_center(std::size_t cell) const;
    double total_mass() const;
    double total_stderr() const;
};

// Histogram estimate of the s-particle marginal. Exchangeability is used by
// averaging over min(N!/(N-s)!, max_injections) ordered index tuples per
// replica (all of them when that count is small enough).
MarginalEstimate estimate_marginal(const std::vector<PhasePoint>& ensemble, int s, const Window& window,
                                   long max_injections = 200, std::uint64_t seed = 0);

struct ChaosError {
    double sup_error = 0;
    double stderr_at_sup = 0;  // combined estimate and reference error at the maximizing cell
    long points_tested = 0;
    std::size_t argmax_cell = 0;
};

// Expected value of the reference over a cell and its statistical error.
using CellReference = std::function<std::pair<double, double>(const MarginalEstimate&, std::size_t cell)>;

// Point-evaluable reference sampled at cell centers.
CellReference reference_at_centers(std::function<double(const PhasePoint&)> f);

// Sup over cells whose centers lie in K, in U^eta with eta = eps^kappa, and
// in {E <= R^2}, of |estimate - reference|.
ChaosError chaos_error(const MarginalEstimate& est, const CellReference& ref, const CutoffParams& cut,
                       const SimConfig& cfg);

// CSV: experiment,s,cell,<coordinate columns of cell centers>,value,stderr
void write_marginal_csv(std::ostream& os, const std::string& experiment, const MarginalEstimate& est);
void write_partition_csv_header(std::ostream& os);
void write_partition_csv_row(std::ostream& os, const std::string& experiment, long N, const PartitionEstimate& p);

}  // namespace kc
