#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kinetic_chaos/simd.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc::simd {

bool avx2_available() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    static const bool ok = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") != 0;
    }();
    return ok;
#else
    return false;
#endif
}

namespace {

Backend initial_backend() {
    const char* env = std::getenv("KINETIC_CHAOS_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return Backend::scalar;
    return avx2_available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> b{initial_backend()};
    return b;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_available()) throw InputError("AVX2 is not supported on this CPU");
    current().store(b, std::memory_order_relaxed);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

void contact_times(const double* x, const double* v, int stride, int d, int i, int j0, int j1, double eps2,
                   double graze2, double* out) {
    if (active_backend() == Backend::avx2)
        avx2::contact_times(x, v, stride, d, i, j0, j1, eps2, graze2, out);
    else
        scalar::contact_times(x, v, stride, d, i, j0, j1, eps2, graze2, out);
}

void stream(double* x, const double* v, std::size_t n, double dt) {
    if (active_backend() == Backend::avx2)
        avx2::stream(x, v, n, dt);
    else
        scalar::stream(x, v, n, dt);
}

}  // namespace kc::simd
