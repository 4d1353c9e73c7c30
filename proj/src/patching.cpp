#include "ips/patching.hpp"

#include <stdexcept>
#include <string>

namespace ips {

std::vector<bench::Pos> PatchGrid::coords() const {
    std::vector<bench::Pos> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::int64_t i = 0; i < size(); ++i) {
        out.push_back(top_left(i));
    }
    return out;
}

PatchGrid make_patch_grid(int image_height, int image_width, int patch_size, int stride) {
    if (patch_size < 1 || stride < 1) {
        throw std::invalid_argument("patch grid: patch size and stride must be >= 1");
    }
    if (patch_size > image_height || patch_size > image_width) {
        throw std::invalid_argument("patch grid: patch size " + std::to_string(patch_size) +
                                    " exceeds image " + std::to_string(image_height) + "x" +
                                    std::to_string(image_width));
    }
    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.stride = stride;
    grid.image_height = image_height;
    grid.image_width = image_width;
    grid.rows = (image_height - patch_size) / stride + 1;
    grid.cols = (image_width - patch_size) / stride + 1;
    return grid;
}

Patch extract_patch(const Image& image, const PatchGrid& grid, std::int64_t index) {
    if (index < 0 || index >= grid.size()) {
        throw std::out_of_range("extract_patch: index outside grid");
    }
    const auto at = grid.top_left(index);
    return Patch{index, at, crop(image, at.y, at.x, grid.patch_size, grid.patch_size)};
}

std::vector<Patch> extract_patches(const Image& image, int patch_size, int stride) {
    const PatchGrid grid = make_patch_grid(image.height, image.width, patch_size, stride);
    std::vector<Patch> patches;
    patches.reserve(static_cast<std::size_t>(grid.size()));
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        patches.push_back(extract_patch(image, grid, i));
    }
    return patches;
}

double o2p_ratio(int object_size, int patch_size) {
    if (object_size <= 0 || patch_size <= 0) {
        throw std::invalid_argument("o2p_ratio: sizes must be positive");
    }
    return 100.0 * object_size * object_size / (static_cast<double>(patch_size) * patch_size);
}

} // namespace ips
