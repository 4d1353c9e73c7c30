#include "ips/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "ips/dataset_io.hpp"

namespace ips {

using nlohmann::json;

bench::DatasetConfig DataConfig::validation() const {
    bench::DatasetConfig v = train;
    v.split = bench::Split::validation;
    v.n_samples = n_validation;
    return v;
}

double default_base_lr(bool pretrained) {
    return pretrained ? 3e-4 : 1e-3;
}

double resolved_base_lr(const RunConfig& config) {
    return config.train.base_lr.value_or(default_base_lr(config.model.pretrained));
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) {
        throw std::invalid_argument("train: epochs and batch_size must be >= 1");
    }
    if (warmup_epochs < 0 || epochs < warmup_epochs) {
        throw std::invalid_argument("train: need 0 <= warmup_epochs <= epochs");
    }
    if (!(final_lr_divisor > 1.0)) {
        throw std::invalid_argument("train: final_lr_divisor must exceed 1");
    }
    if (base_lr && !(*base_lr > 0.0)) {
        throw std::invalid_argument("train: base_lr must be positive");
    }
}

void RunConfig::validate() const {
    train.validate();
    if (data.kind == DataKind::megapixel_mnist) {
        data.train.validate();
        if (data.n_validation < 0) {
            throw std::invalid_argument("data: n_validation must be >= 0");
        }
        if (model.patch_size > data.train.canvas_size) {
            throw std::invalid_argument("model: patch_size exceeds canvas_size");
        }
    } else if (!(data.sts_fraction > 0.0 && data.sts_fraction <= 1.0)) {
        throw std::invalid_argument("data: sts_fraction must lie in (0, 1]");
    }
    if (model.memory_size < 1 || model.iteration_size < 1) {
        throw std::invalid_argument("model: memory_size and iteration_size must be >= 1");
    }
    if (model.patch_size < 1 || model.stride < 1) {
        throw std::invalid_argument("model: patch_size and stride must be >= 1");
    }
    if (model.heads < 1) {
        throw std::invalid_argument("model: heads must be >= 1");
    }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* section) {
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument(std::string(section) + ": unknown key '" + key + "'");
        }
    }
}

const char* name(DataKind k) { return k == DataKind::sts ? "sts" : "megapixel_mnist"; }
const char* name(PixelNorm n) { return n == PixelNorm::imagenet ? "imagenet" : "none"; }
const char* name(WarmupMode m) { return m == WarmupMode::linear_decay ? "linear_decay" : "linear_ramp"; }

} // namespace

json to_json(const RunConfig& c) {
    json data;
    data["kind"] = name(c.data.kind);
    if (c.data.kind == DataKind::megapixel_mnist) {
        data["dataset"] = bench::to_json(c.data.train);
        data["n_validation"] = c.data.n_validation;
        data["mnist_dir"] = c.data.mnist_dir.string();
    } else {
        data["sts_manifest"] = c.data.sts_manifest.string();
        data["sts_fraction"] = c.data.sts_fraction;
        data["sts_subset_seed"] = c.data.sts_subset_seed;
    }
    json model = {
        {"encoder", c.model.encoder},
        {"pretrained", c.model.pretrained},
        {"encoder_weights", c.model.encoder_weights.string()},
        {"heads", c.model.heads},
        {"memory_size", c.model.memory_size},
        {"iteration_size", c.model.iteration_size},
        {"patch_size", c.model.patch_size},
        {"stride", c.model.stride},
        {"pixel_norm", name(c.model.pixel_norm)},
    };
    json train = {
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"base_lr", resolved_base_lr(c)},
        {"warmup_epochs", c.train.warmup_epochs},
        {"final_lr_divisor", c.train.final_lr_divisor},
        {"warmup_mode", name(c.train.warmup_mode)},
        {"weight_decay", c.train.weight_decay},
        {"seed", c.train.seed},
        {"deterministic", c.train.deterministic},
        {"eval_every", c.train.eval_every},
    };
    return {{"data", data}, {"model", model}, {"train", train}};
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, {"data", "model", "train"}, "config");
    RunConfig c;

    const json data = j.value("data", json::object());
    reject_unknown(data, {"kind", "dataset", "n_validation", "mnist_dir", "sts_manifest", "sts_fraction",
                          "sts_subset_seed"},
                   "data");
    const std::string kind = data.value("kind", "megapixel_mnist");
    if (kind == "sts") {
        c.data.kind = DataKind::sts;
        c.model.pretrained = true;
        c.model.pixel_norm = PixelNorm::imagenet;
    } else if (kind != "megapixel_mnist") {
        throw std::invalid_argument("data: unknown kind '" + kind + "'");
    }
    if (data.contains("dataset")) {
        c.data.train = bench::dataset_config_from_json(data["dataset"]);
    }
    c.data.train.split = bench::Split::train;
    c.data.n_validation = data.value("n_validation", c.data.n_validation);
    c.data.mnist_dir = data.value("mnist_dir", std::string{});
    c.data.sts_manifest = data.value("sts_manifest", std::string{});
    c.data.sts_fraction = data.value("sts_fraction", c.data.sts_fraction);
    c.data.sts_subset_seed = data.value("sts_subset_seed", c.data.sts_subset_seed);

    const json model = j.value("model", json::object());
    reject_unknown(model, {"encoder", "pretrained", "encoder_weights", "heads", "memory_size", "iteration_size",
                           "patch_size", "stride", "pixel_norm"},
                   "model");
    c.model.encoder = model.value("encoder", c.model.encoder);
    c.model.pretrained = model.value("pretrained", c.model.pretrained);
    c.model.encoder_weights = model.value("encoder_weights", std::string{});
    c.model.heads = model.value("heads", c.model.heads);
    c.model.memory_size = model.value("memory_size", c.model.memory_size);
    c.model.iteration_size = model.value("iteration_size", c.model.iteration_size);
    c.model.patch_size = model.value("patch_size", c.model.patch_size);
    c.model.stride = model.value("stride", c.model.patch_size);
    if (model.contains("pixel_norm")) {
        const std::string norm = model["pixel_norm"];
        if (norm == "imagenet") c.model.pixel_norm = PixelNorm::imagenet;
        else if (norm == "none") c.model.pixel_norm = PixelNorm::none;
        else throw std::invalid_argument("model: unknown pixel_norm '" + norm + "'");
    }

    const json train = j.value("train", json::object());
    reject_unknown(train, {"epochs", "batch_size", "base_lr", "warmup_epochs", "final_lr_divisor", "warmup_mode",
                           "weight_decay", "seed", "deterministic", "eval_every"},
                   "train");
    c.train.epochs = train.value("epochs", c.train.epochs);
    c.train.batch_size = train.value("batch_size", c.train.batch_size);
    if (train.contains("base_lr") && !train["base_lr"].is_null()) {
        c.train.base_lr = train["base_lr"].get<double>();
    }
    c.train.warmup_epochs = train.value("warmup_epochs", c.train.warmup_epochs);
    c.train.final_lr_divisor = train.value("final_lr_divisor", c.train.final_lr_divisor);
    if (train.contains("warmup_mode")) {
        const std::string mode = train["warmup_mode"];
        if (mode == "linear_ramp") c.train.warmup_mode = WarmupMode::linear_ramp;
        else if (mode == "linear_decay") c.train.warmup_mode = WarmupMode::linear_decay;
        else throw std::invalid_argument("train: unknown warmup_mode '" + mode + "'");
    }
    c.train.weight_decay = train.value("weight_decay", c.train.weight_decay);
    c.train.seed = train.value("seed", c.train.seed);
    c.train.deterministic = train.value("deterministic", c.train.deterministic);
    c.train.eval_every = train.value("eval_every", c.train.eval_every);

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open config");
    }
    try {
        return run_config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

double lr_at(double epoch, const TrainConfig& config, double base_lr) {
    if (!(epoch >= 0.0 && epoch <= config.epochs)) {
        throw std::invalid_argument("lr_at: epoch outside [0, epochs]");
    }
    const double warmup = config.warmup_epochs;
    if (epoch < warmup) {
        const double frac = epoch / warmup;
        if (config.warmup_mode == WarmupMode::linear_decay) {
            return base_lr * (10.0 - 9.0 * frac);
        }
        return base_lr * frac;
    }
    const double floor_lr = base_lr / config.final_lr_divisor;
    const double span = config.epochs - warmup;
    if (span <= 0.0) {
        return floor_lr;
    }
    const double progress = (epoch - warmup) / span;
    return floor_lr + (base_lr - floor_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double max_random_baseline(int x) {
    if (x < 0 || x > 9) {
        throw std::invalid_argument("max_random_baseline: digit must lie in 0..9");
    }
    return (x * (x - 1) / 2) / 120.0;
}

} // namespace ips
