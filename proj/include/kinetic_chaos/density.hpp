#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "kinetic_chaos/rng.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

// One-particle initial density f0(x, v).
struct DensitySpec {
    enum class Kind { gaussian_product, uniform_box_maxwellian, custom };

    Kind kind = Kind::gaussian_product;
    int d = 2;
    double x_sigma = 1.0;             // gaussian: x ~ N(0, x_sigma^2 I)
    double box_lo = 0.0, box_hi = 1.0; // box: x uniform on [box_lo, box_hi]^d
    double beta = 1.0;                // velocities ~ N(0, I / beta)

    // custom: all three must be supplied
    std::function<double(const double* x, const double* v)> custom_eval;
    std::function<void(Rng&, double* x, double* v)> custom_sample;
    double custom_linf_l1 = 0.0;

    static DensitySpec gaussian(int d, double x_sigma, double beta);
    static DensitySpec uniform_box(int d, double lo, double hi, double beta);

    double eval(const double* x, const double* v) const;
    void sample(Rng& rng, double* x, double* v) const;
    // Draw from the spatial marginal only.
    void sample_position(Rng& rng, double* x) const;

    // sup_x of the velocity integral of f0, supplied in closed form.
    double linf_l1_norm() const;

    // Integral of f0 over the box prod [lo_k, hi_k] with 2d axes (positions, then velocities).
    double cell_mass(const double* lo, const double* hi) const;

    // (beta0, mu0) with f0 <= exp(-beta0 (|v|^2/2 + |x|^2/2) - mu0), when one exists.
    std::optional<WeightParams> weight_certificate() const;

    void validate() const;
};

}  // namespace kc
