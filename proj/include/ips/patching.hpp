#pragma once

#include <cstdint>
#include <vector>

#include "ips/benchgen.hpp"
#include "ips/image.hpp"

namespace ips {

/// Row-major tiling of an image into full windows; incomplete edge windows are
/// dropped.
struct PatchGrid {
    int patch_size = 0;
    int stride = 0;
    int image_height = 0;
    int image_width = 0;
    int rows = 0;
    int cols = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(rows) * cols; }
    bench::Pos top_left(std::int64_t index) const {
        return {static_cast<int>(index / cols) * stride, static_cast<int>(index % cols) * stride};
    }
    std::vector<bench::Pos> coords() const;
};

/// Throws std::invalid_argument when the patch does not fit or stride < 1.
PatchGrid make_patch_grid(int image_height, int image_width, int patch_size, int stride);

struct Patch {
    std::int64_t index = 0;
    bench::Pos top_left;
    Image pixels;
};

Patch extract_patch(const Image& image, const PatchGrid& grid, std::int64_t index);
std::vector<Patch> extract_patches(const Image& image, int patch_size, int stride);

/// 100 * object^2 / patch^2.
double o2p_ratio(int object_size, int patch_size);

} // namespace ips
