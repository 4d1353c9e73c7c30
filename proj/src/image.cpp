#include "ips/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace ips {

double Image::sum() const {
    return std::accumulate(data.begin(), data.end(), 0.0);
}

Image crop(const Image& image, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > image.height || x0 + w > image.width) {
        throw std::out_of_range("crop: window outside image");
    }
    Image out(h, w, image.channels);
    const std::size_t row = static_cast<std::size_t>(w) * image.channels;
    for (int y = 0; y < h; ++y) {
        const float* src = &image.data[(static_cast<std::size_t>(y0 + y) * image.width + x0) * image.channels];
        std::copy(src, src + row, out.data.begin() + static_cast<std::ptrdiff_t>(y * row));
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw std::invalid_argument("write_png: expected 1 or 3 channels");
    }
    cv::Mat mat(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<unsigned char>(y);
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                // OpenCV stores BGR.
                const int dst = image.channels == 3 ? 2 - c : c;
                const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
                row[x * image.channels + dst] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!cv::imwrite(path.string(), mat)) {
        throw std::runtime_error("write_png: failed to write " + path.string());
    }
}

Image read_rgb(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) {
        throw std::runtime_error("read_rgb: cannot decode " + path.string());
    }
    Image out(mat.rows, mat.cols, 3);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<unsigned char>(y);
        for (int x = 0; x < mat.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = row[x * 3 + (2 - c)] / 255.0f;
            }
        }
    }
    return out;
}

} // namespace ips
