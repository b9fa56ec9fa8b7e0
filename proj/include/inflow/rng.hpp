#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace inflow {

/// Derives a well-mixed child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/**
 * Seeded generator with platform-independent draws.
 *
 * The standard distributions are implementation-defined, so uniform and
 * normal samples are computed here from the raw mt19937_64 stream.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi) for lo < hi; the bounds may be given in either order.
    double uniform(double lo, double hi);
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace inflow
