#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ips/benchgen.hpp"
#include "ips/config.hpp"
#include "ips/image.hpp"
#include "ips/model.hpp"
#include "ips/sts.hpp"

namespace ips {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per task: the class index for multiclass heads, the 0/1 presence vector for
/// multilabel heads.
using TargetRow = std::vector<std::vector<float>>;

class ExampleSource {
public:
    virtual ~ExampleSource() = default;
    virtual std::size_t size() const = 0;
    virtual Image image(std::size_t i) const = 0;
    virtual TargetRow targets(std::size_t i) const = 0;
    virtual const std::vector<TaskHeadSpec>& tasks() const = 0;
};

/// Canvases are rasterized on demand from placements generated up front.
class MegapixelSource : public ExampleSource {
public:
    MegapixelSource(bench::DatasetConfig config, std::shared_ptr<const bench::GlyphBank> bank);
    MegapixelSource(bench::DatasetConfig config, std::shared_ptr<const bench::GlyphBank> bank,
                    std::vector<bench::CanvasSample> samples);

    std::size_t size() const override { return samples_.size(); }
    Image image(std::size_t i) const override;
    TargetRow targets(std::size_t i) const override;
    const std::vector<TaskHeadSpec>& tasks() const override { return tasks_; }
    const bench::CanvasSample& sample(std::size_t i) const { return samples_.at(i); }

private:
    bench::DatasetConfig config_;
    std::shared_ptr<const bench::GlyphBank> bank_;
    std::vector<bench::CanvasSample> samples_;
    std::vector<TaskHeadSpec> tasks_;
};

class StsSource : public ExampleSource {
public:
    explicit StsSource(std::vector<sts::StsRecord> records);

    std::size_t size() const override { return records_.size(); }
    Image image(std::size_t i) const override;
    TargetRow targets(std::size_t i) const override;
    const std::vector<TaskHeadSpec>& tasks() const override { return tasks_; }

private:
    std::vector<sts::StsRecord> records_;
    std::vector<TaskHeadSpec> tasks_;
};

TargetRow targets_from_labels(const bench::TaskLabels& labels, const std::vector<bench::Task>& tasks);

/// Stacks rows into one tensor per task: [B] int64 or [B, outputs] float.
std::vector<torch::Tensor> stack_targets(const std::vector<TaskHeadSpec>& tasks, const std::vector<TargetRow>& rows);

/// Cross-entropy per multiclass task plus mean binary cross-entropy per
/// multilabel task, summed with unit weights. Logits are [B, outputs].
torch::Tensor multi_task_loss(const std::vector<TaskHeadSpec>& tasks, const std::vector<torch::Tensor>& logits,
                              const std::vector<torch::Tensor>& targets);

/// Correct predictions per task: argmax for multiclass, exact match of the
/// 0.5-thresholded presence vector for multilabel.
std::vector<std::int64_t> count_correct(const std::vector<TaskHeadSpec>& tasks,
                                        const std::vector<torch::Tensor>& logits,
                                        const std::vector<torch::Tensor>& targets);

struct EvalResult {
    std::vector<double> accuracy;  // percent, per task
    double loss = 0.0;
    std::size_t samples = 0;
};

EvalResult evaluate(IpsModel& model, const ExampleSource& source, int batch_size = 16);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::vector<double> train_accuracy;
    double val_loss = 0.0;
    std::vector<double> val_accuracy;  // empty when not evaluated this epoch
    double ms_per_batch = 0.0;
    std::int64_t peak_memory_bytes = 0;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    nlohmann::json summary;
};

struct Datasets {
    std::unique_ptr<ExampleSource> train;
    std::unique_ptr<ExampleSource> validation;
};

/// Builds both splits for a run configuration. MNIST comes from
/// data.mnist_dir, else $IPS_DATA_ROOT/mnist.
Datasets make_datasets(const RunConfig& config);

std::vector<TaskHeadSpec> task_heads(const RunConfig& config);

/// Model with encoder weights loaded when the config asks for pretrained ones.
IpsModel build_model(const RunConfig& config);

/// Reads a run checkpoint back into a model plus the config it was trained with.
std::pair<RunConfig, IpsModel> load_trained_model(const std::filesystem::path& checkpoint);

std::int64_t peak_memory_bytes();

std::vector<std::string> metrics_columns(const std::vector<TaskHeadSpec>& tasks);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains, writing into run_dir: config.json, metrics.csv (one row per epoch),
/// summary.json, checkpoint_last.ipsckpt and checkpoint_best.ipsckpt. Throws
/// TrainingError on a non-finite loss.
TrainResult train(const RunConfig& config, const std::filesystem::path& run_dir, const EpochCallback& on_epoch = {});

/// Same, with caller-supplied data (tests, custom sources).
TrainResult train(const RunConfig& config, const ExampleSource& train_set, const ExampleSource* validation_set,
                  const std::filesystem::path& run_dir, const EpochCallback& on_epoch = {});

} // namespace ips
