#pragma once

// Swedish traffic signs, restricted to the speed-limit subtask.
//
// Expected layout under the root:
//   Set1/annotations.txt  Set1Part0/*.jpg   (training)
//   Set2/annotations.txt  Set2Part0/*.jpg   (validation)
// Annotation lines look like
//   <file>:<VISIBILITY>, <lrx>, <lry>, <ulx>, <uly>, <TYPE>, <NAME>;...
// and an image without signs has nothing after the colon.

#include <cstdint>
#include <filesystem>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ips::sts {

inline constexpr int kTrainCount = 747;
inline constexpr int kValidationCount = 684;
inline constexpr int kImageHeight = 960;
inline constexpr int kImageWidth = 1280;

enum class Label { no_sign = 0, limit_50 = 1, limit_70 = 2, limit_80 = 3 };
inline constexpr int kNumLabels = 4;

std::string to_string(Label label);
Label label_from_string(const std::string& name);

struct SignAnnotation {
    std::string visibility;
    std::string type;
    std::string name;
};

struct StsRecord {
    std::filesystem::path image;
    Label label = Label::no_sign;
    std::vector<SignAnnotation> signs;
};

struct Exclusion {
    std::string file;
    std::string reason;
};

struct StsSplit {
    std::vector<StsRecord> records;
    std::vector<Exclusion> excluded;
    std::vector<std::string> warnings;
};

/// Parses one annotation line. Returns the file name and its signs.
std::pair<std::string, std::vector<SignAnnotation>> parse_annotation_line(const std::string& line);

/// Labeling rule: no signs -> no_sign; a single visible 50/70/80 limit class ->
/// that class; anything else (other signs only, occluded limits, conflicting
/// limits) is excluded with a reason.
std::optional<Label> classify(const std::vector<SignAnnotation>& signs, std::string* reason = nullptr);

/// Reads one set ("Set1" or "Set2"). Throws std::runtime_error when the
/// annotation file is missing.
StsSplit ingest_set(const std::filesystem::path& root, int set_number);

struct StsDataset {
    StsSplit train;
    StsSplit validation;
};

/// Both sets; record count mismatches against 747/684 are reported as warnings.
StsDataset ingest_sts(const std::filesystem::path& root);

struct SubsetSpec {
    double fraction = 1.0;
    std::uint64_t seed = 0;
    /// Stratum shares in Label order.
    std::array<double, kNumLabels> proportions{0.5, 1.0 / 6, 1.0 / 6, 1.0 / 6};
};

/// Published training-subset totals for the full 747-record split.
int published_subset_total(double fraction, std::size_t full_size);

/// Per-label counts for a subset of `total` records (largest remainder over the
/// stratum shares, no_sign absorbing the residue).
std::array<int, kNumLabels> stratum_targets(int total, const SubsetSpec& spec);

/// Stratified sampling without replacement; fraction 1 returns the input
/// unchanged. Throws std::runtime_error when a stratum runs out.
std::vector<StsRecord> stratified_subset(const std::vector<StsRecord>& records, const SubsetSpec& spec);

nlohmann::json to_manifest(const StsDataset& dataset);
StsSplit split_from_manifest(const nlohmann::json& manifest, const std::string& split);

} // namespace ips::sts
