#include "kinetic_chaos/hierarchy.hpp"

#include <utility>

namespace kc {

HierarchyData product_data(std::function<double(const double* x, const double* v)> g) {
    HierarchyData h;
    h.eval = [g = std::move(g)](const PhasePoint& z) {
        double p = 1.0;
        for (int i = 0; i < z.size() && p != 0.0; ++i) p *= g(z.pos(i), z.vel(i));
        return p;
    };
    return h;
}

}  // namespace kc
