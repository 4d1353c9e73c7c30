#include "ips/rng.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace ips {

Rng::Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    Rng rng;
    std::seed_seq seq{static_cast<std::uint32_t>(seed),  static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x1b5u};
    rng.engine_.seed(seq);
    return rng;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below: empty range");
    }
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - (max % n + 1) % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x > limit);
    return x % n;
}

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream in(state);
    in >> engine_;
    if (!in) {
        throw std::invalid_argument("Rng::restore: malformed engine state");
    }
}

} // namespace ips
