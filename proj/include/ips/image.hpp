#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ips {

/// Dense float raster, row-major, channels interleaved (HWC).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c = 1, float fill = 0.0f)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool empty() const { return data.empty(); }
    double sum() const;

    friend bool operator==(const Image&, const Image&) = default;
};

/// Window [y0, y0+h) x [x0, x0+w); the window must lie inside the image.
Image crop(const Image& image, int y0, int x0, int h, int w);

/// Values in [0,1] are written as 8-bit; 1 or 3 channels.
void write_png(const std::filesystem::path& path, const Image& image);

/// Decodes any format OpenCV understands into an RGB image scaled to [0,1].
Image read_rgb(const std::filesystem::path& path);

} // namespace ips
