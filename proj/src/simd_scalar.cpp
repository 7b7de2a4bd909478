#include <cmath>
#include <limits>

#include "kinetic_chaos/simd.hpp"

namespace kc::simd::scalar {

void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1,
                   double eps2, double graze2, double* out) {
    const double inf = std::numeric_limits<double>::infinity();
    for (int j = j0; j < j1; ++j) {
        double a = 0, b = 0, c = 0;
        for (int k = 0; k < d; ++k) {
            const double dx = x[k * stride + j] - x[k * stride + i];
            const double dv = v[k * stride + j] - v[k * stride + i];
            a = a + dv * dv;
            b = b + dx * dv;
            c = c + dx * dx;
        }
        c = c - eps2;
        const double disc = b * b - a * c;
        if (b < 0.0 && disc > graze2 * a) {
            // Smaller root written as c / (-b + sqrt(disc)) to avoid cancellation near contact.
            double tau = c / (std::sqrt(disc) - b);
            out[j - j0] = tau < 0.0 ? 0.0 : tau;
        } else {
            out[j - j0] = inf;
        }
    }
}

void stream(double* x, const double* v, std::size_t n, double dt) {
    for (std::size_t k = 0; k < n; ++k) x[k] = x[k] + v[k] * dt;
}

}  // namespace kc::simd::scalar
