#include "ips/sts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ips/rng.hpp"

namespace ips::sts {

std::string to_string(Label label) {
    switch (label) {
    case Label::no_sign: return "no_sign";
    case Label::limit_50: return "limit_50";
    case Label::limit_70: return "limit_70";
    case Label::limit_80: return "limit_80";
    }
    return "?";
}

Label label_from_string(const std::string& name) {
    for (int i = 0; i < kNumLabels; ++i) {
        if (to_string(static_cast<Label>(i)) == name) {
            return static_cast<Label>(i);
        }
    }
    throw std::invalid_argument("unknown traffic-sign label '" + name + "'");
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, sep)) {
        parts.push_back(trim(part));
    }
    return parts;
}

} // namespace

std::pair<std::string, std::vector<SignAnnotation>> parse_annotation_line(const std::string& line) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("annotation line without ':' separator: " + line);
    }
    std::pair<std::string, std::vector<SignAnnotation>> out{trim(line.substr(0, colon)), {}};
    for (const auto& sign : split(line.substr(colon + 1), ';')) {
        if (sign.empty()) {
            continue;
        }
        const auto fields = split(sign, ',');
        if (fields.size() < 7) {
            throw std::invalid_argument("annotation for " + out.first + " has " + std::to_string(fields.size()) +
                                        " fields, expected 7");
        }
        out.second.push_back({fields[0], fields[5], fields[6]});
    }
    return out;
}

std::optional<Label> classify(const std::vector<SignAnnotation>& signs, std::string* reason) {
    auto reject = [&](const char* why) -> std::optional<Label> {
        if (reason) *reason = why;
        return std::nullopt;
    };
    if (signs.empty()) {
        return Label::no_sign;
    }
    std::set<Label> limits;
    bool occluded_limit = false;
    for (const auto& s : signs) {
        Label label;
        if (s.name == "50_SIGN") label = Label::limit_50;
        else if (s.name == "70_SIGN") label = Label::limit_70;
        else if (s.name == "80_SIGN") label = Label::limit_80;
        else continue;
        if (s.visibility == "VISIBLE") {
            limits.insert(label);
        } else {
            occluded_limit = true;
        }
    }
    if (limits.size() > 1) {
        return reject("conflicting speed limits");
    }
    if (limits.size() == 1) {
        return *limits.begin();
    }
    return reject(occluded_limit ? "speed limit not visible" : "no speed-limit sign");
}

StsSplit ingest_set(const std::filesystem::path& root, int set_number) {
    const auto annotations = root / ("Set" + std::to_string(set_number)) / "annotations.txt";
    const auto image_dir = root / ("Set" + std::to_string(set_number) + "Part0");
    std::ifstream in(annotations);
    if (!in) {
        throw std::runtime_error(annotations.string() + ": missing annotation file");
    }
    StsSplit out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        auto [file, signs] = parse_annotation_line(line);
        const auto image = image_dir / file;
        if (!std::filesystem::exists(image)) {
            out.excluded.push_back({file, "image file missing"});
            continue;
        }
        std::string reason;
        if (auto label = classify(signs, &reason)) {
            out.records.push_back({image, *label, std::move(signs)});
        } else {
            out.excluded.push_back({file, reason});
        }
    }
    return out;
}

StsDataset ingest_sts(const std::filesystem::path& root) {
    StsDataset ds{ingest_set(root, 1), ingest_set(root, 2)};
    auto check = [](StsSplit& split, int expected, const char* name) {
        const auto n = static_cast<int>(split.records.size());
        if (n != expected) {
            split.warnings.push_back(std::string(name) + ": " + std::to_string(n) + " records, expected " +
                                     std::to_string(expected) + " (diff " + std::to_string(n - expected) + ")");
        }
    };
    check(ds.train, kTrainCount, "train");
    check(ds.validation, kValidationCount, "validation");
    return ds;
}

int published_subset_total(double fraction, std::size_t full_size) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("subset fraction must lie in (0, 1]");
    }
    if (full_size == static_cast<std::size_t>(kTrainCount)) {
        if (std::abs(fraction - 0.25) < 1e-9) return 184;
        if (std::abs(fraction - 0.5) < 1e-9) return 372;
    }
    return static_cast<int>(std::lround(fraction * static_cast<double>(full_size)));
}

std::array<int, kNumLabels> stratum_targets(int total, const SubsetSpec& spec) {
    std::array<int, kNumLabels> targets{};
    std::array<double, kNumLabels> remainder{};
    const double share_sum = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
    int assigned = 0;
    for (int i = 0; i < kNumLabels; ++i) {
        const double quota = total * spec.proportions[i] / share_sum;
        targets[i] = static_cast<int>(std::floor(quota + 1e-9));
        remainder[i] = quota - targets[i];
        assigned += targets[i];
    }
    // Hand out the leftover records to the largest remainders among the limit
    // strata first (stable in label order); no_sign takes whatever is left.
    std::array<int, kNumLabels - 1> order{1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i : order) {
        if (assigned < total && remainder[i] > 1e-9) {
            ++targets[i];
            ++assigned;
        }
    }
    targets[0] += total - assigned;
    return targets;
}

std::vector<StsRecord> stratified_subset(const std::vector<StsRecord>& records, const SubsetSpec& spec) {
    if (std::abs(spec.fraction - 1.0) < 1e-12) {
        return records;
    }
    const int total = published_subset_total(spec.fraction, records.size());
    const auto targets = stratum_targets(total, spec);

    std::array<std::vector<std::size_t>, kNumLabels> strata;
    for (std::size_t i = 0; i < records.size(); ++i) {
        strata[static_cast<std::size_t>(records[i].label)].push_back(i);
    }
    std::vector<std::size_t> chosen;
    for (int l = 0; l < kNumLabels; ++l) {
        auto& pool = strata[l];
        if (static_cast<int>(pool.size()) < targets[l]) {
            throw std::runtime_error("stratum " + to_string(static_cast<Label>(l)) + " has " +
                                     std::to_string(pool.size()) + " records, need " + std::to_string(targets[l]));
        }
        Rng rng = Rng::substream(spec.seed, 0x535453ULL, static_cast<std::uint64_t>(l));
        // Partial Fisher-Yates: the first targets[l] slots are a uniform sample.
        for (int k = 0; k < targets[l]; ++k) {
            const auto j = static_cast<std::size_t>(k) + rng.below(pool.size() - static_cast<std::size_t>(k));
            std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        }
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + targets[l]);
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<StsRecord> subset;
    subset.reserve(chosen.size());
    for (auto i : chosen) {
        subset.push_back(records[i]);
    }
    return subset;
}

namespace {

nlohmann::json split_to_json(const StsSplit& split) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : split.records) {
        nlohmann::json signs = nlohmann::json::array();
        for (const auto& s : r.signs) {
            signs.push_back({{"visibility", s.visibility}, {"type", s.type}, {"name", s.name}});
        }
        records.push_back({{"image", r.image.string()}, {"label", to_string(r.label)}, {"signs", signs}});
    }
    nlohmann::json excluded = nlohmann::json::array();
    for (const auto& e : split.excluded) {
        excluded.push_back({{"file", e.file}, {"reason", e.reason}});
    }
    std::array<int, kNumLabels> counts{};
    for (const auto& r : split.records) {
        ++counts[static_cast<std::size_t>(r.label)];
    }
    nlohmann::json label_counts;
    for (int l = 0; l < kNumLabels; ++l) {
        label_counts[to_string(static_cast<Label>(l))] = counts[l];
    }
    return {{"records", records}, {"excluded", excluded}, {"warnings", split.warnings}, {"label_counts", label_counts}};
}

} // namespace

nlohmann::json to_manifest(const StsDataset& dataset) {
    return {{"format", "ips-sts"},
            {"version", 1},
            {"train", split_to_json(dataset.train)},
            {"validation", split_to_json(dataset.validation)}};
}

StsSplit split_from_manifest(const nlohmann::json& manifest, const std::string& split) {
    if (manifest.value("format", "") != "ips-sts") {
        throw std::invalid_argument("not a traffic-sign manifest");
    }
    StsSplit out;
    for (const auto& r : manifest.at(split).at("records")) {
        StsRecord rec;
        rec.image = r.at("image").get<std::string>();
        rec.label = label_from_string(r.at("label").get<std::string>());
        for (const auto& s : r.at("signs")) {
            rec.signs.push_back({s.at("visibility"), s.at("type"), s.at("name")});
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

} // namespace ips::sts
