#pragma once

// Attention maps: the patches left in the selection buffer after a full pass,
// with head-averaged attention from the pooling layer, normalized by the max.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/benchgen.hpp"
#include "ips/image.hpp"
#include "ips/model.hpp"
#include "ips/patching.hpp"

namespace ips {

inline constexpr double kDefaultMapThreshold = 0.1;

struct AttentionEntry {
    std::int64_t index = 0;
    bench::Pos top_left;
    int patch_size = 0;
    double raw = 0.0;
    double normalized = 0.0;
    friend bool operator==(const AttentionEntry&, const AttentionEntry&) = default;
};

struct AttentionMap {
    std::string source;
    int image_height = 0;
    int image_width = 0;
    int memory_size = 0;
    std::vector<AttentionEntry> entries;  // buffer order
    friend bool operator==(const AttentionMap&, const AttentionMap&) = default;
};

/// Normalizes raw scores by their maximum. Throws when sizes disagree or a
/// score is negative.
AttentionMap map_from_scores(const PatchGrid& grid, const std::vector<std::int64_t>& indices,
                             const std::vector<double>& raw, int memory_size, std::string source = {});

AttentionMap build_map(IpsModel& model, const Image& image, std::string source = {});

/// Entries with normalized score strictly above the threshold.
std::vector<AttentionEntry> visible_entries(const AttentionMap& map, double threshold = kDefaultMapThreshold);

struct CropWindow {
    int y = 0;
    int x = 0;
    int height = 0;
    int width = 0;
};

/// Source as RGB with every visible patch filled by a viridis tint of its
/// normalized score and outlined in red. The result is cropped when asked.
Image render_map(const AttentionMap& map, const Image& source, double threshold = kDefaultMapThreshold,
                 const std::optional<CropWindow>& crop_window = std::nullopt);

nlohmann::json to_json(const AttentionMap& map, double threshold);
AttentionMap attention_map_from_json(const nlohmann::json& j);

/// Writes `<png>` and the sidecar `<png minus extension>.json`.
void export_map(const std::filesystem::path& png, const AttentionMap& map, const Image& source,
                double threshold = kDefaultMapThreshold, const std::optional<CropWindow>& crop_window = std::nullopt);

} // namespace ips
