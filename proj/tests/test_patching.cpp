#include <doctest.h>

#include <cmath>

#include "ips/patching.hpp"
#include "ips/rng.hpp"

using namespace ips;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image im(h, w);
    for (auto& v : im.data) v = static_cast<float>(rng.uniform01());
    return im;
}

// Paper precision: round to the number of significant digits given.
double round_sig(double v, int sig) {
    const double scale = std::pow(10.0, sig - 1 - static_cast<int>(std::floor(std::log10(std::abs(v)))));
    return std::round(v * scale) / scale;
}

} // namespace

TEST_CASE("grid arithmetic") {
    const auto g = make_patch_grid(3000, 3000, 50, 50);
    CHECK(g.size() == 3600);
    CHECK(g.rows == 60);
    const auto sts = make_patch_grid(960, 1280, 75, 75);
    CHECK(sts.rows == 12);
    CHECK(sts.cols == 17);
    const auto overlap = make_patch_grid(100, 130, 40, 30);
    CHECK(overlap.rows == 3);
    CHECK(overlap.cols == 4);
    CHECK_THROWS_AS(make_patch_grid(40, 40, 50, 50), std::invalid_argument);
    CHECK_THROWS_AS(make_patch_grid(100, 100, 50, 0), std::invalid_argument);
}

TEST_CASE("coords are row-major and match windows") {
    const auto im = random_image(90, 120, 1);
    const auto patches = extract_patches(im, 30, 20);
    const auto grid = make_patch_grid(90, 120, 30, 20);
    REQUIRE(static_cast<std::int64_t>(patches.size()) == grid.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        CHECK(patches[i].index == static_cast<std::int64_t>(i));
        if (i > 0) {
            const auto a = patches[i - 1].top_left, b = patches[i].top_left;
            CHECK((a.y < b.y || (a.y == b.y && a.x < b.x)));
        }
        CHECK(patches[i].pixels == crop(im, patches[i].top_left.y, patches[i].top_left.x, 30, 30));
    }
}

TEST_CASE("single window and exact reassembly") {
    const auto im = random_image(60, 60, 2);
    const auto one = extract_patches(im, 60, 60);
    REQUIRE(one.size() == 1);
    CHECK(one[0].pixels == im);

    const auto tiles = extract_patches(im, 20, 20);
    Image rebuilt(60, 60);
    for (const auto& p : tiles) {
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) rebuilt.at(p.top_left.y + y, p.top_left.x + x) = p.pixels.at(y, x);
        }
    }
    CHECK(rebuilt == im);
}

TEST_CASE("object-to-patch ratios") {
    CHECK(o2p_ratio(84, 25) == doctest::Approx(1128.96));
    CHECK(o2p_ratio(28, 50) == doctest::Approx(31.36));
    CHECK(o2p_ratio(64, 64) == doctest::Approx(100.0));
    CHECK(round_sig(o2p_ratio(84, 25), 3) == 1130.0);
    CHECK(round_sig(o2p_ratio(84, 50), 3) == 282.0);
    CHECK(round_sig(o2p_ratio(84, 100), 2) == 71.0);
    CHECK(round_sig(o2p_ratio(84, 150), 2) == 31.0);
}
