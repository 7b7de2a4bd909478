#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "kinetic_chaos/types.hpp"

namespace kc {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed of the stream owned by task `index` under `master`.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) : eng_(seed) {}
    static Rng stream(std::uint64_t master, std::uint64_t index) { return Rng(stream_seed(master, index)); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_); }

    void unit_vector(double* out, int d) {
        double n2 = 0;
        do {
            n2 = 0;
            for (int k = 0; k < d; ++k) {
                out[k] = normal();
                n2 += out[k] * out[k];
            }
        } while (n2 == 0);
        const double inv = 1.0 / std::sqrt(n2);
        for (int k = 0; k < d; ++k) out[k] *= inv;
    }

    // Uniform in the ball of radius r.
    void in_ball(double* out, int d, double r) {
        unit_vector(out, d);
        const double rad = r * std::pow(uniform(), 1.0 / d);
        for (int k = 0; k < d; ++k) out[k] *= rad;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace kc
