#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evoact {

// Counter-based generator: output i is a pure function of (seed, i), so the
// full stream state is the pair (seed, counter) and serializes to 16 bytes.
// Algorithm: out(i) = mix64(seed + (i+1) * 0x9E3779B97F4A7C15), the splitmix64
// finalizer. Identical (seed, call sequence) gives identical bytes everywhere;
// the floating-point layers (normal, gamma) additionally depend on libm.
class Rng {
public:
    static constexpr const char* kAlgorithm = "splitmix64-counter-v1";

    explicit Rng(std::uint64_t seed) : seed_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t counter) : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();

    // Independent child stream; consumes one draw from this stream.
    Rng split();

    // Uniform on [0, 1).
    double uniform();
    // Uniform on (0, 1]; safe to feed into log().
    double uniform_pos();
    // Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n);
    // Uniform on [lo, hi).
    double uniform_range(double lo, double hi);

    // Standard normal via Box-Muller; two draws per value, no cached spare,
    // so (seed, counter) fully captures the stream position.
    double normal();

    // Gamma(shape, 1) via Marsaglia-Tsang squeeze.
    double gamma(double shape);
    // Beta(alpha, beta) from two gamma draws.
    double beta(double alpha, double beta);

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace evoact
