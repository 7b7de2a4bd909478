#include "kinetic_chaos/types.hpp"

#include <algorithm>
#include <numbers>

namespace kc {

SimConfig SimConfig::from_scaling(int d, long N, double ell) {
    if (d < 2 || d > kMaxDim) throw InputError("dimension must lie in [2, 8]");
    if (N < 1) throw InputError("particle count must be positive");
    if (!(ell > 0)) throw InputError("ell must be positive");
    SimConfig c;
    c.d = d;
    c.N = N;
    c.ell = ell;
    c.epsilon = std::pow(double(N) * ell, -1.0 / double(d - 1));
    return c;
}

double SimConfig::scaling_residual() const {
    return std::abs(double(N) * std::pow(epsilon, d - 1) * ell - 1.0);
}

void SimConfig::validate() const {
    if (d < 2 || d > kMaxDim) throw InputError("dimension must lie in [2, 8]");
    if (N < 1) throw InputError("particle count must be positive");
    if (!(ell > 0) || !(epsilon > 0)) throw InputError("ell and epsilon must be positive");
    if (scaling_residual() > 1e-12) throw InputError("N eps^(d-1) ell != 1");
}

double chi(ChiProfile p, double z) {
    switch (p) {
        case ChiProfile::none:
            return 1.0;
        case ChiProfile::linear:
            return std::clamp(2.0 - z, 0.0, 1.0);
        case ChiProfile::smoothstep: {
            if (z <= 1.0) return 1.0;
            if (z >= 2.0) return 0.0;
            double u = z - 1.0;
            return 1.0 - u * u * (3.0 - 2.0 * u);
        }
    }
    return 1.0;
}

void CutoffParams::validate() const {
    if (!(eta > 0) || !(R > 0) || !(alpha > 0) || !(y > 0)) throw InputError("eta, R, alpha, y must be positive");
    if (!(eta < R)) throw InputError("eta must be smaller than R");
    if (!(theta > 0) || !(theta < std::numbers::pi / 2)) throw InputError("theta must lie in (0, pi/2)");
    if (!(kappa > 0) || !(kappa < 1)) throw InputError("kappa must lie in (0, 1)");
    if (n < 0) throw InputError("truncation depth must be nonnegative");
    if (set_slack < 0) throw InputError("set slack must be nonnegative");
}

double unit_ball_volume(int d) {
    return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

double sphere_area(int d) { return d * unit_ball_volume(d); }

}  // namespace kc
