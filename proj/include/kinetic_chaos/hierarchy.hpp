#pragma once

#include <climits>
#include <functional>
#include <optional>

#include "kinetic_chaos/types.hpp"

namespace kc {

// A sequence of s-particle functions f^{(s)} evaluated on PhasePoints of any
// size up to max_particles.
struct HierarchyData {
    std::function<double(const PhasePoint&)> eval;
    int max_particles = INT_MAX;
    // Certificate |f^{(s)}(Z)| <= exp(-beta E - mu s), with an extra
    // exp(-beta I) factor when with_inertia is set.
    std::optional<WeightParams> weight_cert;
    bool with_inertia = false;

    double operator()(const PhasePoint& z) const { return eval(z); }
};

// f^{(s)} = prod_i g(z_i).
HierarchyData product_data(std::function<double(const double* x, const double* v)> g);

}  // namespace kc
