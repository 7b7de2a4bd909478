#include "kinetic_chaos/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kc {

namespace {

double gauss_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

DensitySpec DensitySpec::gaussian(int d, double x_sigma, double beta) {
    DensitySpec f;
    f.kind = Kind::gaussian_product;
    f.d = d;
    f.x_sigma = x_sigma;
    f.beta = beta;
    f.validate();
    return f;
}

DensitySpec DensitySpec::uniform_box(int d, double lo, double hi, double beta) {
    DensitySpec f;
    f.kind = Kind::uniform_box_maxwellian;
    f.d = d;
    f.box_lo = lo;
    f.box_hi = hi;
    f.beta = beta;
    f.validate();
    return f;
}

void DensitySpec::validate() const {
    if (d < 2 || d > kMaxDim) throw InputError("density dimension must lie in [2, 8]");
    switch (kind) {
        case Kind::gaussian_product:
            if (!(x_sigma > 0) || !(beta > 0)) throw InputError("gaussian density needs x_sigma > 0 and beta > 0");
            break;
        case Kind::uniform_box_maxwellian:
            if (!(box_hi > box_lo) || !(beta > 0)) throw InputError("box density needs box_hi > box_lo and beta > 0");
            break;
        case Kind::custom:
            if (!custom_eval || !custom_sample || !(custom_linf_l1 > 0))
                throw InputError("custom density needs eval, sample and a declared L-inf/L1 norm");
            break;
    }
}

double DensitySpec::eval(const double* x, const double* v) const {
    if (kind == Kind::custom) return custom_eval(x, v);
    const double vel = std::pow(beta / (2 * std::numbers::pi), d / 2.0) * std::exp(-0.5 * beta * norm2(v, d));
    if (kind == Kind::gaussian_product) {
        const double s2 = x_sigma * x_sigma;
        return std::pow(2 * std::numbers::pi * s2, -d / 2.0) * std::exp(-0.5 * norm2(x, d) / s2) * vel;
    }
    for (int k = 0; k < d; ++k)
        if (x[k] < box_lo || x[k] > box_hi) return 0.0;
    return vel / std::pow(box_hi - box_lo, d);
}

void DensitySpec::sample_position(Rng& rng, double* x) const {
    if (kind == Kind::custom) {
        double v[kMaxDim];
        custom_sample(rng, x, v);
        return;
    }
    for (int k = 0; k < d; ++k)
        x[k] = kind == Kind::gaussian_product ? x_sigma * rng.normal() : rng.uniform(box_lo, box_hi);
}

void DensitySpec::sample(Rng& rng, double* x, double* v) const {
    if (kind == Kind::custom) {
        custom_sample(rng, x, v);
        return;
    }
    sample_position(rng, x);
    const double sv = 1.0 / std::sqrt(beta);
    for (int k = 0; k < d; ++k) v[k] = sv * rng.normal();
}

double DensitySpec::linf_l1_norm() const {
    switch (kind) {
        case Kind::gaussian_product:
            return std::pow(2 * std::numbers::pi * x_sigma * x_sigma, -d / 2.0);
        case Kind::uniform_box_maxwellian:
            return std::pow(box_hi - box_lo, -d);
        case Kind::custom:
            return custom_linf_l1;
    }
    return 0.0;
}

double DensitySpec::cell_mass(const double* lo, const double* hi) const {
    if (kind == Kind::custom) throw InputError("cell_mass is not available for custom densities");
    double m = 1.0;
    const double sv = 1.0 / std::sqrt(beta);
    for (int k = 0; k < d; ++k) {
        if (kind == Kind::gaussian_product) {
            m *= gauss_cdf(hi[k] / x_sigma) - gauss_cdf(lo[k] / x_sigma);
        } else {
            double a = std::max(lo[k], box_lo), b = std::min(hi[k], box_hi);
            m *= std::max(0.0, b - a) / (box_hi - box_lo);
        }
        m *= gauss_cdf(hi[d + k] / sv) - gauss_cdf(lo[d + k] / sv);
    }
    return m;
}

std::optional<WeightParams> DensitySpec::weight_certificate() const {
    if (kind != Kind::gaussian_product) return std::nullopt;
    // f0 = C exp(-I / sigma^2 - beta E) with I = |x|^2/2, E = |v|^2/2.
    const double c = std::pow(2 * std::numbers::pi * x_sigma * x_sigma, -d / 2.0) *
                     std::pow(beta / (2 * std::numbers::pi), d / 2.0);
    return WeightParams{std::min(beta, 1.0 / (x_sigma * x_sigma)), -std::log(c)};
}

}  // namespace kc
