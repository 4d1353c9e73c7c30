#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "ips/config.hpp"
#include "ips/cross_attention.hpp"
#include "ips/encoder.hpp"
#include "ips/image.hpp"
#include "ips/patching.hpp"
#include "ips/selection.hpp"

namespace ips {

enum class TaskKind { multiclass, multilabel };

struct TaskHeadSpec {
    std::string name;
    TaskKind kind = TaskKind::multiclass;
    int outputs = 10;
};

std::vector<TaskHeadSpec> megapixel_task_heads(const std::vector<bench::Task>& tasks);
std::vector<TaskHeadSpec> sts_task_heads();

/// Image window(s) to an encoder batch [k, C, P, P], normalized per `norm`.
torch::Tensor patches_to_tensor(const Image& image, const PatchGrid& grid, const std::vector<std::int64_t>& indices,
                                PixelNorm norm);

/// Cross-attention pooling followed by one linear head per task.
class BagClassifierImpl : public torch::nn::Module {
public:
    BagClassifierImpl(int embed_dim, int heads, std::vector<TaskHeadSpec> tasks);

    /// x: selected embeddings [M, D]. Returns one [outputs] logit vector per task.
    std::vector<torch::Tensor> forward(const torch::Tensor& x);

    const std::vector<TaskHeadSpec>& tasks() const { return tasks_; }

    CrossAttnPool pool{nullptr};
    std::vector<torch::nn::Linear> heads;

private:
    std::vector<TaskHeadSpec> tasks_;
};
TORCH_MODULE(BagClassifier);

class IpsModelImpl : public torch::nn::Module {
public:
    IpsModelImpl(ModelConfig config, std::vector<TaskHeadSpec> tasks);

    const ModelConfig& config() const { return config_; }
    const std::vector<TaskHeadSpec>& tasks() const { return classifier->tasks(); }

    /// Streams the image's patches through the encoder (eval mode, no autograd)
    /// and returns the top-M buffer.
    SelectionBuffer select(const Image& image, ResidencyProbe* probe = nullptr);

    /// Selection, then gradient-mode encoding of the selected patches and
    /// pooling. Returns per-task logits stacked over the batch, [B, outputs].
    std::vector<torch::Tensor> forward(const std::vector<const Image*>& images, ResidencyProbe* probe = nullptr);
    std::vector<torch::Tensor> forward(const Image& image, ResidencyProbe* probe = nullptr);

    PatchEncoder encoder{nullptr};
    BagClassifier classifier{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(IpsModel);

} // namespace ips
