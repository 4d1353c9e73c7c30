#include "ips/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace ips::bench {

nlohmann::json to_json(const DatasetConfig& c) {
    nlohmann::json j;
    j["canvas_size"] = c.canvas_size;
    j["digit_size"] = c.digit_size;
    j["n_samples"] = c.n_samples;
    j["noise_count"] = c.noise_count ? nlohmann::json(*c.noise_count) : nlohmann::json("auto");
    j["noise_thickness"] = c.noise_thickness;
    j["noise_size"] = c.noise_size ? nlohmann::json(*c.noise_size) : nlohmann::json("auto");
    j["seed"] = c.seed;
    j["split"] = to_string(c.split);
    nlohmann::json tasks = nlohmann::json::array();
    for (Task t : c.tasks) {
        tasks.push_back(to_string(t));
    }
    j["tasks"] = tasks;
    return j;
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"canvas_size", "digit_size",  "n_samples", "noise_count",
                                             "noise_thickness", "noise_size", "seed", "split", "tasks"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument("dataset config: unknown key '" + key + "'");
        }
    }
    DatasetConfig c;
    c.canvas_size = j.value("canvas_size", c.canvas_size);
    c.digit_size = j.value("digit_size", c.digit_size);
    c.n_samples = j.value("n_samples", c.n_samples);
    auto optional_int = [&](const char* key) -> std::optional<int> {
        if (!j.contains(key) || j[key].is_null() || (j[key].is_string() && j[key] == "auto")) {
            return std::nullopt;
        }
        return j[key].get<int>();
    };
    c.noise_count = optional_int("noise_count");
    c.noise_size = optional_int("noise_size");
    c.noise_thickness = j.value("noise_thickness", c.noise_thickness);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
        c.split = split_from_string(j["split"].get<std::string>());
    }
    if (j.contains("tasks")) {
        c.tasks.clear();
        for (const auto& t : j["tasks"]) {
            c.tasks.push_back(task_from_string(t.get<std::string>()));
        }
    }
    return c;
}

nlohmann::json make_manifest(const DatasetConfig& config, const GlyphBankRef& bank,
                             const std::vector<CanvasSample>& samples, const std::string& records_file) {
    nlohmann::json m;
    m["format"] = kManifestFormat;
    m["version"] = kManifestVersion;
    m["config"] = to_json(config);
    m["resolved"] = {
        {"noise_count", config.resolved_noise_count()},
        {"noise_size", config.resolved_noise_size()},
        {"o2i_percent", o2i_ratio(config.digit_size, config.canvas_size)},
    };
    std::array<int, kNumClasses> majority{};
    for (const auto& s : samples) {
        ++majority[static_cast<std::size_t>(s.labels.maj)];
    }
    m["counts"] = {{"samples", samples.size()}, {"majority_class_histogram", majority}};
    m["glyph_bank"] = {{"dir", bank.dir.string()}, {"split", bank.split}};
    m["records_file"] = records_file;
    return m;
}

namespace {

constexpr char kRecordsMagic[8] = {'I', 'P', 'S', 'R', 'E', 'C', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    // Records are little-endian on disk.
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(bytes), std::end(bytes));
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw IngestError(path, "truncated record file");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(bytes), std::end(bytes));
    }
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

} // namespace

void write_records(const std::filesystem::path& path, const std::vector<CanvasSample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IngestError(path, "cannot open for writing");
    }
    out.write(kRecordsMagic, sizeof(kRecordsMagic));
    put<std::uint64_t>(out, samples.size());
    for (const auto& s : samples) {
        put<std::uint64_t>(out, s.index);
        for (const auto& d : s.digits) {
            put<std::int32_t>(out, d.class_id);
            put<std::int32_t>(out, d.top_left.y);
            put<std::int32_t>(out, d.top_left.x);
            put<std::int32_t>(out, d.size);
            put<std::uint32_t>(out, d.glyph_index);
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.noise.size()));
        for (const auto& n : s.noise) {
            put<std::int32_t>(out, n.top_left.y);
            put<std::int32_t>(out, n.top_left.x);
            put<std::uint8_t>(out, static_cast<std::uint8_t>(n.spec.count()));
            for (const auto& p : n.spec.control_points) {
                put<double>(out, p.x);
                put<double>(out, p.y);
            }
        }
        put<std::int32_t>(out, s.labels.maj);
        put<std::int32_t>(out, s.labels.max);
        put<std::int32_t>(out, s.labels.top);
        for (auto bit : s.labels.multi) {
            put<std::uint8_t>(out, bit);
        }
    }
    if (!out) {
        throw IngestError(path, "write failed");
    }
}

std::vector<CanvasSample> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError(path, "cannot open record file");
    }
    char magic[sizeof(kRecordsMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kRecordsMagic, sizeof(magic)) != 0) {
        throw IngestError(path, "not a record file");
    }
    const auto n = get<std::uint64_t>(in, path);
    std::vector<CanvasSample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        CanvasSample s;
        s.index = get<std::uint64_t>(in, path);
        for (auto& d : s.digits) {
            d.class_id = get<std::int32_t>(in, path);
            d.top_left.y = get<std::int32_t>(in, path);
            d.top_left.x = get<std::int32_t>(in, path);
            d.size = get<std::int32_t>(in, path);
            d.glyph_index = get<std::uint32_t>(in, path);
        }
        const auto noise_count = get<std::uint32_t>(in, path);
        s.noise.resize(noise_count);
        for (auto& nz : s.noise) {
            nz.top_left.y = get<std::int32_t>(in, path);
            nz.top_left.x = get<std::int32_t>(in, path);
            const auto count = get<std::uint8_t>(in, path);
            nz.spec.control_points.resize(count);
            for (auto& p : nz.spec.control_points) {
                p.x = get<double>(in, path);
                p.y = get<double>(in, path);
            }
        }
        s.labels.maj = get<std::int32_t>(in, path);
        s.labels.max = get<std::int32_t>(in, path);
        s.labels.top = get<std::int32_t>(in, path);
        for (auto& bit : s.labels.multi) {
            bit = get<std::uint8_t>(in, path);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string default_bank_split(Split split) {
    return split == Split::train ? "train" : "t10k";
}

nlohmann::json generate_dataset(const DatasetConfig& config, const GlyphBankRef& bank_ref,
                                const GlyphBank& bank, const std::filesystem::path& out_dir) {
    config.validate();
    std::vector<CanvasSample> samples;
    samples.reserve(static_cast<std::size_t>(config.n_samples));
    for (int i = 0; i < config.n_samples; ++i) {
        samples.push_back(generate_sample(config, bank, static_cast<std::uint64_t>(i)));
    }
    std::filesystem::create_directories(out_dir);
    const std::string records_file = to_string(config.split) + ".records";
    write_records(out_dir / records_file, samples);
    auto manifest = make_manifest(config, bank_ref, samples, records_file);
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
    return manifest;
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IngestError(manifest_path, "cannot open manifest");
    }
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(manifest_path, std::string("malformed manifest: ") + e.what());
    }
    if (m.value("format", "") != kManifestFormat) {
        throw IngestError(manifest_path, "unexpected manifest format");
    }
    LoadedDataset ds;
    ds.config = dataset_config_from_json(m.at("config"));
    ds.bank_ref.dir = m.at("glyph_bank").at("dir").get<std::string>();
    ds.bank_ref.split = m.at("glyph_bank").at("split").get<std::string>();
    ds.samples = read_records(manifest_path.parent_path() / m.at("records_file").get<std::string>());
    return ds;
}

} // namespace ips::bench
