#pragma once

#include <cstdint>
#include <random>

namespace msrlab {

// Deterministic random source for experiments. mt19937_64 output is fully
// pinned by the standard; doubles go through an explicit 53-bit ladder so
// results never depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection-free modulo is fine here; n is tiny compared to 2^64
        return next_u64() % n;
    }

private:
    std::mt19937_64 gen_;
};

// Stable per-instance seed derivation (splitmix64 finalizer) so parallel
// experiment runs produce identical streams regardless of thread count.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace msrlab
