#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kinetic_chaos/density.hpp"
#include "kinetic_chaos/ensemble.hpp"
#include "kinetic_chaos/hierarchy.hpp"
#include "kinetic_chaos/pseudo.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

// sup over the probe of |f(Z)| exp(beta E + mu s).
double weighted_sup_norm(const HierarchyData& F, const WeightParams& w, const std::vector<PhasePoint>& probe);

// As above with the extra factor exp(beta I(X - V t, V)); t = 0 gives the
// inertia-weighted norm of initial data.
double transported_weighted_sup_norm(const HierarchyData& F, const WeightParams& w,
                                     const std::vector<PhasePoint>& probe, double t);

struct WeightedSup {
    double value = 0;    // max over cells of estimate x weight
    double std_err = 0;  // at the maximizing cell
    double lower = 0;    // max over cells of (estimate - sigmas stderr) x weight
    std::size_t argmax = 0;
};

// Histogram version of the transported norm. Each cell average is weighted by
// the smallest weight on the cell, the most a pointwise bound implies for it.
WeightedSup marginal_weighted_sup(const MarginalEstimate& est, const WeightParams& w, double t, double sigmas = 3.0);

// Uniform Monte Carlo over window^s, restricted to the exclusion domain.
struct QuadratureSpec {
    double x_lo = -1, x_hi = 1;
    double v_lo = -1, v_hi = 1;
    int d = 2;
    double epsilon = 0;
    long M = 4000;
    std::uint64_t seed = 1;

    double window_volume(int s) const;
    void validate() const;
};

// Deterministic sample points for depth s; the bracket and both norms below use these.
std::vector<PhasePoint> quadrature_points(const QuadratureSpec& q, int s);

struct QuadratureValue {
    double value = 0;
    double std_err = 0;
};

// sum_{s <= depth} (1/s!) integral of phi f over the window.
QuadratureValue duality_bracket(const HierarchyData& phi, const HierarchyData& F, int depth, const QuadratureSpec& q);
// sum_{s <= depth} (1/s!) integral of |phi| exp(-beta E - mu s) over the window.
QuadratureValue weighted_l1_norm(const HierarchyData& phi, const WeightParams& w, int depth, const QuadratureSpec& q);
// Weighted sup of F over the same quadrature points, all depths.
double quadrature_sup_norm(const HierarchyData& F, const WeightParams& w, int depth, const QuadratureSpec& q);

struct DispersiveResult {
    double lhs = 0;
    double rhs = 0;
    bool holds = false;
};

// zeta(x, v) = exp(-a |x|^2 - b |v|^2).
struct GaussianZeta {
    double a = 1, b = 1;
};

// ||zeta(x - v t, v)||_{Linf_x L1_v} against |t|^{-d} ||zeta||_{L1_x Linf_v}, closed form.
DispersiveResult dispersive_check(const GaussianZeta& zeta, int d, double t);

// Midpoint-rule version for a general zeta on the box [-x_half, x_half]^d x [-v_half, v_half]^d,
// d <= 2 with n nodes per axis.
struct DispersiveGrid {
    double x_half = 5, v_half = 5;
    int n = 48;
};
DispersiveResult dispersive_check(const std::function<double(const double* x, const double* v)>& zeta, int d,
                                  double t, const DispersiveGrid& grid);

void write_dispersive_csv_header(std::ostream& os);
void write_dispersive_csv_row(std::ostream& os, int d, double a, double b, double t, const DispersiveResult& r);

struct BoltzmannSolveOptions {
    double smallness_threshold = 0.05;  // on l^{-1} exp(-mu0) beta0^{-(d+1)/2}
    SeriesOptions series{};
    long inner_samples = 64;  // per inner evaluation when time windows are chained
};

struct ContractionReport {
    std::vector<double> magnitudes;  // worst |term_k| majorant over the probe, k = 0..n
    double max_ratio = 0;            // max over probes and k of |term_{k+1}| / |term_k|
    long probes = 0;
};

// f(t, x, v) of the Boltzmann equation through the truncated hierarchy series
// on factorized data. In d = 2, and whenever only the local condition holds,
// [0, t] is cut into windows no longer than the local time and the series is
// restarted on each window from the previous window's evaluable.
class BoltzmannReference {
public:
    BoltzmannReference(DensitySpec f0, const SimConfig& cfg, const CutoffParams& cut, int depth,
                       BoltzmannSolveOptions opt = {});

    // l^{-1} exp(-mu0) beta0^{-(d+1)/2} of the data certificate.
    double smallness() const { return smallness_; }
    bool global() const { return global_; }
    double local_time() const { return local_time_; }

    // Throws InputError naming the failed condition when t is not covered.
    std::vector<double> windows(double t) const;

    // seed = 0 uses the configured series seed.
    SeriesEstimate value(double t, const double* x, const double* v, std::uint64_t seed = 0) const;
    // s-particle hierarchy value on product data (tensorization check).
    SeriesEstimate hierarchy_value(double t, const PhasePoint& zs, std::uint64_t seed = 0) const;
    ContractionReport contraction(double t, const std::vector<PhasePoint>& probe) const;

    // Cell reference for chaos_error: product of one-particle values at cell centers.
    CellReference cell_reference(double t) const;

private:
    HierarchyData data_at(double t_start, std::uint64_t salt) const;
    SeriesEstimate run(double t_end, const PhasePoint& zs, std::uint64_t seed) const;

    DensitySpec f0_;
    SimConfig cfg_;
    CutoffParams cut_;
    int depth_;
    BoltzmannSolveOptions opt_;
    WeightParams cert_;
    double smallness_ = 0, local_time_ = 0;
    bool global_ = false;
};

}  // namespace kc
