#pragma once

#include <cstddef>

// Pairwise contact-time scan and free streaming over structure-of-arrays
// coordinates (axis k of particle i at x[k*stride + i]). A scalar reference
// and an AVX2 variant compute bit-identical results; the active one is picked
// at runtime from CPU support, or forced with KINETIC_CHAOS_SIMD=scalar.
namespace kc::simd {

enum class Backend { scalar, avx2 };

bool avx2_available();
Backend active_backend();
void set_backend(Backend b);  // throws InputError if avx2 is requested but unavailable
const char* backend_name(Backend b);

// out[j - j0] = earliest tau >= 0 at which particles i and j touch while
// approaching, or +inf. Roots with discriminant <= graze2 |dv|^2 are misses.
void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1,
                   double eps2, double graze2, double* out);

// x += v * dt elementwise over n entries.
void stream(double* x, const double* v, std::size_t n, double dt);

namespace scalar {
void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1,
                   double eps2, double graze2, double* out);
void stream(double* x, const double* v, std::size_t n, double dt);
}  // namespace scalar

namespace avx2 {
void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1,
                   double eps2, double graze2, double* out);
void stream(double* x, const double* v, std::size_t n, double dt);
}  // namespace avx2

}  // namespace kc::simd
