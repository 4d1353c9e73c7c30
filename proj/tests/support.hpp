#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "ips/benchgen.hpp"
#include "ips/rng.hpp"

namespace ips::test {

// Per class a few solid blobs of different shapes; each is one connected
// component, and intensity encodes the class so glyphs are distinguishable.
inline bench::GlyphBank synthetic_bank(int per_class = 3) {
    bench::GlyphBank bank;
    for (int c = 0; c < bench::kNumClasses; ++c) {
        for (int k = 0; k < per_class; ++k) {
            Image g(bench::kMnistSide, bench::kMnistSide);
            for (int y = 5 + k; y < 23 - k; ++y) {
                for (int x = 8; x < 20 - (c % 3); ++x) {
                    g.at(y, x) = 0.1f + 0.09f * static_cast<float>(c);
                }
            }
            bank.by_class[static_cast<std::size_t>(c)].push_back(g);
        }
    }
    return bank;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ips_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace ips::test
