#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kc {

// Fixed scratch arrays in the predicates and kernels assume this bound.
constexpr int kMaxDim = 8;

// Bad arguments or violated preconditions.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Labeled hard spheres in R^d. Coordinates are particle-major: particle i
// occupies x[i*dim .. i*dim+dim).
struct PhasePoint {
    int dim = 2;
    std::vector<double> x;
    std::vector<double> v;

    PhasePoint() = default;
    PhasePoint(int d, int s) : dim(d), x(std::size_t(d) * s, 0.0), v(std::size_t(d) * s, 0.0) {}

    int size() const { return dim > 0 ? int(x.size() / std::size_t(dim)) : 0; }

    double* pos(int i) { return x.data() + std::size_t(i) * dim; }
    const double* pos(int i) const { return x.data() + std::size_t(i) * dim; }
    double* vel(int i) { return v.data() + std::size_t(i) * dim; }
    const double* vel(int i) const { return v.data() + std::size_t(i) * dim; }

    void push_back(const double* xi, const double* vi) {
        x.insert(x.end(), xi, xi + dim);
        v.insert(v.end(), vi, vi + dim);
    }

    bool operator==(const PhasePoint&) const = default;
};

// Dimension, particle number, diameter and mean free path tied by
// N * eps^(d-1) = 1/ell.
struct SimConfig {
    int d = 2;
    long N = 1;
    double ell = 1.0;
    double epsilon = 1.0;

    static SimConfig from_scaling(int d, long N, double ell);
    // Relative mismatch of N eps^(d-1) ell against 1.
    double scaling_residual() const;
    void validate() const;
};

struct Functionals {
    double energy = 0;             // 1/2 sum |v|^2
    double moment_of_inertia = 0;  // 1/2 sum |x|^2
    double virial = 0;             // sum x.v
};

// Cutoff profile chi: 1 on [0,1], 0 on [2,inf), non-increasing, |chi'| <= 2.
enum class ChiProfile { smoothstep, linear, none };
double chi(ChiProfile p, double z);

struct CutoffParams {
    double eta = 0.1;
    double R = 4.0;
    double alpha = 0.1;
    double y = 0.1;
    double theta = 0.3;
    double kappa = 0.5;
    int n = 3;
    ChiProfile chi = ChiProfile::smoothstep;
    double c_d = 4.0;       // geometric constant in sin(theta) > c_d eps / y
    double set_slack = 0.0; // strict inequalities test "value > threshold + set_slack"

    double eta_for(const SimConfig& cfg) const { return std::pow(cfg.epsilon, kappa); }
    void validate() const;
};

struct WeightParams {
    double beta = 1.0;
    double mu = 0.0;
};

// Small fixed-dimension vector helpers on raw coordinate pointers.
inline double dot(const double* a, const double* b, int d) {
    double s = 0;
    for (int k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
}
inline double norm2(const double* a, int d) { return dot(a, a, d); }
inline double dist2(const double* a, const double* b, int d) {
    double s = 0;
    for (int k = 0; k < d; ++k) {
        double t = a[k] - b[k];
        s += t * t;
    }
    return s;
}

// Surface measure of S^{d-1} and volume of the unit ball in R^d.
double sphere_area(int d);
double unit_ball_volume(int d);

}  // namespace kc
