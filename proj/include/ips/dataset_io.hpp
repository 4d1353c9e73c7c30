#pragma once

// On-disk form of a generated split: manifest.json (config echo, resolved
// noise count and O2I, counts, glyph-bank reference) next to a compact binary
// record file of placements. Canvases are re-rasterized on demand.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/benchgen.hpp"

namespace ips::bench {

inline constexpr const char* kManifestFormat = "ips-megapixel-mnist";
inline constexpr int kManifestVersion = 1;

nlohmann::json to_json(const DatasetConfig& config);
/// Missing keys take DatasetConfig defaults; unknown keys are rejected.
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

struct GlyphBankRef {
    std::filesystem::path dir;
    std::string split = "train";
};

nlohmann::json make_manifest(const DatasetConfig& config, const GlyphBankRef& bank,
                             const std::vector<CanvasSample>& samples, const std::string& records_file);

void write_records(const std::filesystem::path& path, const std::vector<CanvasSample>& samples);
std::vector<CanvasSample> read_records(const std::filesystem::path& path);

/// Generates every sample of `config` and writes `<out_dir>/manifest.json` and
/// `<out_dir>/<split>.records`. Returns the manifest.
nlohmann::json generate_dataset(const DatasetConfig& config, const GlyphBankRef& bank_ref,
                                const GlyphBank& bank, const std::filesystem::path& out_dir);

struct LoadedDataset {
    DatasetConfig config;
    GlyphBankRef bank_ref;
    std::vector<CanvasSample> samples;
};

LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

/// Glyph-bank split conventionally paired with a dataset split.
std::string default_bank_split(Split split);

} // namespace ips::bench
