#include <cmath>
#include <limits>

#include "kinetic_chaos/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define KC_HAVE_X86 1
#include <immintrin.h>
#endif

namespace kc::simd::avx2 {

#ifdef KC_HAVE_X86

// Same operation order as the scalar kernel and no FMA, so lanes round identically.
__attribute__((target("avx2"))) void contact_times(const double* x, const double* v, int stride, int d,
                                                   int i, int j0, int j1, double eps2, double graze2,
                                                   double* out) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    const __m256d veps2 = _mm256_set1_pd(eps2);
    const __m256d vg2 = _mm256_set1_pd(graze2);
    int j = j0;
    for (; j + 4 <= j1; j += 4) {
        __m256d a = zero, b = zero, c = zero;
        for (int k = 0; k < d; ++k) {
            const __m256d xi = _mm256_set1_pd(x[k * stride + i]);
            const __m256d vi = _mm256_set1_pd(v[k * stride + i]);
            const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + k * stride + j), xi);
            const __m256d dv = _mm256_sub_pd(_mm256_loadu_pd(v + k * stride + j), vi);
            a = _mm256_add_pd(a, _mm256_mul_pd(dv, dv));
            b = _mm256_add_pd(b, _mm256_mul_pd(dx, dv));
            c = _mm256_add_pd(c, _mm256_mul_pd(dx, dx));
        }
        c = _mm256_sub_pd(c, veps2);
        const __m256d disc = _mm256_sub_pd(_mm256_mul_pd(b, b), _mm256_mul_pd(a, c));
        const __m256d approaching = _mm256_cmp_pd(b, zero, _CMP_LT_OQ);
        const __m256d hit = _mm256_and_pd(approaching, _mm256_cmp_pd(disc, _mm256_mul_pd(vg2, a), _CMP_GT_OQ));
        __m256d tau = _mm256_div_pd(c, _mm256_sub_pd(_mm256_sqrt_pd(disc), b));
        tau = _mm256_blendv_pd(tau, zero, _mm256_cmp_pd(tau, zero, _CMP_LT_OQ));
        _mm256_storeu_pd(out + (j - j0), _mm256_blendv_pd(inf, tau, hit));
    }
    if (j < j1) scalar::contact_times(x, v, stride, d, i, j, j1, eps2, graze2, out + (j - j0));
}

__attribute__((target("avx2"))) void stream(double* x, const double* v, std::size_t n, double dt) {
    const __m256d vdt = _mm256_set1_pd(dt);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        __m256d xv = _mm256_loadu_pd(x + k);
        xv = _mm256_add_pd(xv, _mm256_mul_pd(_mm256_loadu_pd(v + k), vdt));
        _mm256_storeu_pd(x + k, xv);
    }
    for (; k < n; ++k) x[k] = x[k] + v[k] * dt;
}

#else

void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1, double eps2,
                   double graze2, double* out) {
    scalar::contact_times(x, v, stride, d, i, j0, j1, eps2, graze2, out);
}
void stream(double* x, const double* v, std::size_t n, double dt) { scalar::stream(x, v, n, dt); }

#endif

}  // namespace kc::simd::avx2
