#pragma once

// Checkpoint layout (all integers little-endian):
//
//   magic     8 bytes  "IPSCKPT\0"
//   version   u32      (1)
//   meta_len  u64, then meta_len bytes of UTF-8 JSON (config echo, rng state, ...)
//   count     u32
//   count x { name_len u32, name bytes, dtype u8 (0 f32, 1 f64, 2 i64),
//             ndim u8, dims i64[ndim], raw element bytes }
//
// Tensors are stored in the order of named_parameters() followed by
// named_buffers(). Loading is strict: names, dtypes and shapes must match.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace ips {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

void write_tensor_archive(const std::filesystem::path& path, const NamedTensors& tensors, const nlohmann::json& meta);
NamedTensors read_tensor_archive(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

NamedTensors module_state(const torch::nn::Module& module);

void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& module, const nlohmann::json& meta);
/// Copies stored tensors into the module; returns the metadata.
nlohmann::json load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module);

} // namespace ips
