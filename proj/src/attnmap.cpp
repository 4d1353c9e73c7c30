#include "ips/attnmap.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <stdexcept>

#include <opencv2/imgproc.hpp>

namespace ips {

using nlohmann::json;

namespace {

constexpr float kFillAlpha = 0.45f;

std::array<float, 3> viridis(double t) {
    cv::Mat level(1, 1, CV_8UC1, cv::Scalar(static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0))));
    cv::Mat color;
    cv::applyColorMap(level, color, cv::COLORMAP_VIRIDIS);
    const auto bgr = color.at<cv::Vec3b>(0, 0);
    return {bgr[2] / 255.0f, bgr[1] / 255.0f, bgr[0] / 255.0f};
}

Image to_rgb(const Image& source) {
    if (source.channels == 3) {
        return source;
    }
    if (source.channels != 1) {
        throw std::invalid_argument("render_map: expected 1 or 3 channels");
    }
    Image out(source.height, source.width, 3);
    for (std::size_t i = 0; i < source.data.size(); ++i) {
        out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = source.data[i];
    }
    return out;
}

} // namespace

AttentionMap map_from_scores(const PatchGrid& grid, const std::vector<std::int64_t>& indices,
                             const std::vector<double>& raw, int memory_size, std::string source) {
    if (indices.size() != raw.size()) {
        throw std::invalid_argument("attention map: index/score count mismatch");
    }
    if (static_cast<int>(indices.size()) > memory_size) {
        throw std::invalid_argument("attention map: more entries than the memory size");
    }
    AttentionMap map;
    map.source = std::move(source);
    map.image_height = grid.image_height;
    map.image_width = grid.image_width;
    map.memory_size = memory_size;
    double peak = 0.0;
    for (double r : raw) {
        if (!(r >= 0.0)) {
            throw std::invalid_argument("attention map: scores must be non-negative");
        }
        peak = std::max(peak, r);
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        map.entries.push_back({indices[i], grid.top_left(indices[i]), grid.patch_size, raw[i],
                               peak > 0.0 ? raw[i] / peak : 0.0});
    }
    return map;
}

AttentionMap build_map(IpsModel& model, const Image& image, std::string source) {
    const bool was_training = model->is_training();
    model->eval();
    const auto buffer = model->select(image);
    const auto scores = model->classifier->pool->attention_scores(buffer.embeddings()).to(torch::kDouble).contiguous();
    model->train(was_training);
    const std::vector<double> raw(scores.data_ptr<double>(), scores.data_ptr<double>() + scores.numel());
    const auto& cfg = model->config();
    return map_from_scores(make_patch_grid(image.height, image.width, cfg.patch_size, cfg.stride), buffer.indices(),
                           raw, cfg.memory_size, std::move(source));
}

std::vector<AttentionEntry> visible_entries(const AttentionMap& map, double threshold) {
    std::vector<AttentionEntry> out;
    std::copy_if(map.entries.begin(), map.entries.end(), std::back_inserter(out),
                 [&](const AttentionEntry& e) { return e.normalized > threshold; });
    return out;
}

Image render_map(const AttentionMap& map, const Image& source, double threshold,
                 const std::optional<CropWindow>& crop_window) {
    if (source.height != map.image_height || source.width != map.image_width) {
        throw std::invalid_argument("render_map: source size differs from the map");
    }
    Image out = to_rgb(source);
    auto visible = visible_entries(map, threshold);
    // Stronger patches are painted last so they stay on top where windows overlap.
    std::stable_sort(visible.begin(), visible.end(),
                     [](const AttentionEntry& a, const AttentionEntry& b) { return a.normalized < b.normalized; });
    for (const auto& e : visible) {
        const auto tint = viridis(e.normalized);
        const int y1 = std::min(out.height, e.top_left.y + e.patch_size);
        const int x1 = std::min(out.width, e.top_left.x + e.patch_size);
        for (int y = e.top_left.y; y < y1; ++y) {
            for (int x = e.top_left.x; x < x1; ++x) {
                const bool edge = y == e.top_left.y || y == y1 - 1 || x == e.top_left.x || x == x1 - 1;
                for (int c = 0; c < 3; ++c) {
                    float& px = out.at(y, x, c);
                    px = edge ? (c == 0 ? 1.0f : 0.0f) : (1.0f - kFillAlpha) * px + kFillAlpha * tint[c];
                }
            }
        }
    }
    if (crop_window) {
        return crop(out, crop_window->y, crop_window->x, crop_window->height, crop_window->width);
    }
    return out;
}

json to_json(const AttentionMap& map, double threshold) {
    json entries = json::array();
    for (const auto& e : map.entries) {
        entries.push_back({{"index", e.index},
                           {"y", e.top_left.y},
                           {"x", e.top_left.x},
                           {"patch_size", e.patch_size},
                           {"raw", e.raw},
                           {"normalized", e.normalized},
                           {"visible", e.normalized > threshold}});
    }
    return {{"source", map.source},
            {"image_height", map.image_height},
            {"image_width", map.image_width},
            {"memory_size", map.memory_size},
            {"threshold", threshold},
            {"entries", entries}};
}

AttentionMap attention_map_from_json(const json& j) {
    AttentionMap map;
    map.source = j.at("source").get<std::string>();
    map.image_height = j.at("image_height").get<int>();
    map.image_width = j.at("image_width").get<int>();
    map.memory_size = j.at("memory_size").get<int>();
    for (const auto& e : j.at("entries")) {
        map.entries.push_back({e.at("index").get<std::int64_t>(),
                               {e.at("y").get<int>(), e.at("x").get<int>()},
                               e.at("patch_size").get<int>(),
                               e.at("raw").get<double>(),
                               e.at("normalized").get<double>()});
    }
    return map;
}

void export_map(const std::filesystem::path& png, const AttentionMap& map, const Image& source, double threshold,
                const std::optional<CropWindow>& crop_window) {
    write_png(png, render_map(map, source, threshold, crop_window));
    auto sidecar_json = to_json(map, threshold);
    if (crop_window) {
        sidecar_json["crop"] = {{"y", crop_window->y},
                                {"x", crop_window->x},
                                {"height", crop_window->height},
                                {"width", crop_window->width}};
    }
    auto sidecar = png;
    sidecar.replace_extension(".json");
    std::ofstream out(sidecar);
    if (!out) {
        throw std::runtime_error(sidecar.string() + ": cannot write");
    }
    out << sidecar_json.dump(2) << '\n';
}

} // namespace ips
