#include "ips/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ips {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'S', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error(path.string() + ": truncated checkpoint");
    }
    return v;
}

std::uint8_t dtype_code(torch::ScalarType t) {
    switch (t) {
    case torch::kFloat: return 0;
    case torch::kDouble: return 1;
    case torch::kLong: return 2;
    default: throw std::invalid_argument("checkpoint: unsupported tensor dtype");
    }
}

torch::ScalarType dtype_from_code(std::uint8_t code) {
    switch (code) {
    case 0: return torch::kFloat;
    case 1: return torch::kDouble;
    case 2: return torch::kLong;
    default: throw std::invalid_argument("checkpoint: unknown dtype code");
    }
}

} // namespace

void write_tensor_archive(const std::filesystem::path& path, const NamedTensors& tensors, const nlohmann::json& meta) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot write checkpoint");
    }
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta_text = meta.dump();
    put<std::uint64_t>(out, meta_text.size());
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        const auto t = tensor.detach().cpu().contiguous();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(out, dtype_code(t.scalar_type()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dim()));
        for (auto d : t.sizes()) {
            put<std::int64_t>(out, d);
        }
        out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    if (!out) {
        throw std::runtime_error(path.string() + ": checkpoint write failed");
    }
}

NamedTensors read_tensor_archive(const std::filesystem::path& path, nlohmann::json* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open checkpoint");
    }
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path.string() + ": not an IPS checkpoint");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::string meta_text(get<std::uint64_t>(in, path), '\0');
    if (!in.read(meta_text.data(), static_cast<std::streamsize>(meta_text.size()))) {
        throw std::runtime_error(path.string() + ": truncated checkpoint metadata");
    }
    if (meta) {
        *meta = nlohmann::json::parse(meta_text);
    }
    NamedTensors tensors;
    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(get<std::uint32_t>(in, path), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        const auto dtype = dtype_from_code(get<std::uint8_t>(in, path));
        const auto ndim = get<std::uint8_t>(in, path);
        std::vector<std::int64_t> dims(ndim);
        for (auto& d : dims) {
            d = get<std::int64_t>(in, path);
        }
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()))) {
            throw std::runtime_error(path.string() + ": truncated tensor '" + name + "'");
        }
        tensors.emplace_back(std::move(name), std::move(t));
    }
    return tensors;
}

NamedTensors module_state(const torch::nn::Module& module) {
    NamedTensors out;
    for (const auto& item : module.named_parameters()) {
        out.emplace_back(item.key(), item.value());
    }
    for (const auto& item : module.named_buffers()) {
        out.emplace_back(item.key(), item.value());
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& module, const nlohmann::json& meta) {
    write_tensor_archive(path, module_state(module), meta);
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module) {
    nlohmann::json meta;
    const auto stored = read_tensor_archive(path, &meta);
    auto state = module_state(module);
    if (stored.size() != state.size()) {
        throw std::runtime_error(path.string() + ": checkpoint has " + std::to_string(stored.size()) +
                                 " tensors, module expects " + std::to_string(state.size()));
    }
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto& [name, target] = state[i];
        const auto it = std::find_if(stored.begin(), stored.end(), [&](const auto& kv) { return kv.first == name; });
        if (it == stored.end()) {
            throw std::runtime_error(path.string() + ": missing tensor '" + name + "'");
        }
        if (it->second.sizes() != target.sizes() || it->second.scalar_type() != target.scalar_type()) {
            throw std::runtime_error(path.string() + ": shape/dtype mismatch for '" + name + "'");
        }
        target.copy_(it->second);
    }
    return meta;
}

} // namespace ips
