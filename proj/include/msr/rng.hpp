#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace msr {

// splitmix64 finalizer: decorrelates derived stream seeds so replications,
// sweep points, and trace thinning all split off one master seed.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 wrapped with hand-rolled distributions: std:: distributions are
// implementation-defined, and byte-identical outputs for a given seed are
// part of the CLI contract.
struct Rng {
    std::mt19937_64 eng;

    explicit Rng(std::uint64_t seed) : eng(seed) {}

    // Uniform in [0, 1): top 53 bits of the raw draw.
    double uniform01() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    // Uniform integer in [0, n). Multiply-and-floor bias is O(n/2^53).
    std::size_t pick(std::size_t n) {
        std::size_t k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    // Box-Muller without the cached spare, so every call consumes exactly two
    // uniforms and the draw sequence stays reproducible.
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1]: keeps log finite
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

}  // namespace msr
