#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ips {

/// Seeded random source with portable draws.
///
/// The engine is std::mt19937_64 (bit-exact across standard libraries); every
/// derived quantity (uniform reals, bounded integers) is computed here rather
/// than through std distributions, whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    /// Independent stream for (seed, stream, index). Used to give every
    /// generated sample its own reproducible substream.
    static Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer on [0, n). Unbiased (rejection on the top range).
    std::uint64_t below(std::uint64_t n);

    std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

} // namespace ips
