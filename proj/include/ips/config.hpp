#pragma once

// Run configuration: one JSON document with `data`, `model` and `train`
// sections. Every field has a default; unknown keys are errors; the resolved
// document is what gets persisted next to a run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/benchgen.hpp"

namespace ips {

enum class DataKind { megapixel_mnist, sts };
enum class PixelNorm { none, imagenet };
enum class WarmupMode { linear_ramp, linear_decay };

struct DataConfig {
    DataKind kind = DataKind::megapixel_mnist;
    // megapixel_mnist
    bench::DatasetConfig train;  // split forced to train
    int n_validation = bench::kDefaultValidationSamples;
    std::filesystem::path mnist_dir;  // empty -> $IPS_DATA_ROOT/mnist
    // sts
    std::filesystem::path sts_manifest;
    double sts_fraction = 1.0;
    std::uint64_t sts_subset_seed = 0;

    bench::DatasetConfig validation() const;
};

struct ModelConfig {
    std::string encoder = "resnet18";
    bool pretrained = false;
    std::filesystem::path encoder_weights;
    int heads = 8;
    int memory_size = 100;     // M
    int iteration_size = 100;  // I
    int patch_size = 50;
    int stride = 50;
    PixelNorm pixel_norm = PixelNorm::none;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    std::optional<double> base_lr;  // nullopt -> 1e-3 from scratch, 3e-4 pretrained
    int warmup_epochs = 10;
    double final_lr_divisor = 1000.0;
    WarmupMode warmup_mode = WarmupMode::linear_ramp;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    bool deterministic = true;
    int eval_every = 1;

    void validate() const;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;

    void validate() const;
};

double default_base_lr(bool pretrained);
double resolved_base_lr(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Learning rate at a (fractional) epoch: linear warm-up from 0 to the base
/// rate over warmup_epochs, then cosine decay to base / final_lr_divisor at the
/// last epoch. The linear_decay mode instead falls linearly from 10x base to
/// base during warm-up.
double lr_at(double epoch, const TrainConfig& config, double base_lr);

/// P(x is the maximum of 3 distinct digits drawn uniformly) = C(x, 2) / C(10, 3).
double max_random_baseline(int x);

} // namespace ips
