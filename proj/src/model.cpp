#include "ips/model.hpp"

#include <numeric>
#include <stdexcept>

namespace ips {

std::vector<TaskHeadSpec> megapixel_task_heads(const std::vector<bench::Task>& tasks) {
    std::vector<TaskHeadSpec> out;
    for (auto t : tasks) {
        out.push_back({bench::to_string(t), t == bench::Task::multi ? TaskKind::multilabel : TaskKind::multiclass,
                       bench::kNumClasses});
    }
    return out;
}

std::vector<TaskHeadSpec> sts_task_heads() {
    return {{"sign", TaskKind::multiclass, 4}};
}

torch::Tensor patches_to_tensor(const Image& image, const PatchGrid& grid, const std::vector<std::int64_t>& indices,
                                PixelNorm norm) {
    const int p = grid.patch_size;
    const int c = image.channels;
    auto out = torch::empty({static_cast<std::int64_t>(indices.size()), p, p, c}, torch::kFloat);
    float* dst = out.data_ptr<float>();
    const std::size_t row = static_cast<std::size_t>(p) * c;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto at = grid.top_left(indices[k]);
        for (int y = 0; y < p; ++y) {
            const float* src = &image.data[(static_cast<std::size_t>(at.y + y) * image.width + at.x) * c];
            std::copy(src, src + row, dst + (k * p + static_cast<std::size_t>(y)) * row);
        }
    }
    out = out.permute({0, 3, 1, 2});
    if (norm == PixelNorm::imagenet) {
        if (c == 1) {
            out = out.expand({out.size(0), 3, p, p});
        }
        const auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
        const auto std = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
        out = (out - mean) / std;
    }
    return out.contiguous();
}

BagClassifierImpl::BagClassifierImpl(int embed_dim, int heads_count, std::vector<TaskHeadSpec> tasks)
    : tasks_(std::move(tasks)) {
    if (tasks_.empty()) {
        throw std::invalid_argument("bag classifier: at least one task head required");
    }
    pool = register_module("pool", CrossAttnPool(embed_dim, heads_count));
    for (const auto& t : tasks_) {
        heads.push_back(register_module("head_" + t.name, torch::nn::Linear(embed_dim, t.outputs)));
    }
}

std::vector<torch::Tensor> BagClassifierImpl::forward(const torch::Tensor& x) {
    const auto bag = pool->forward(x);
    std::vector<torch::Tensor> out;
    out.reserve(heads.size());
    for (auto& head : heads) {
        out.push_back(head->forward(bag));
    }
    return out;
}

IpsModelImpl::IpsModelImpl(ModelConfig config, std::vector<TaskHeadSpec> tasks) : config_(std::move(config)) {
    EncoderSpec spec;
    spec.arch = config_.encoder;
    encoder = register_module("encoder", PatchEncoder(spec));
    classifier = register_module("classifier",
                                 BagClassifier(encoder->embedding_dim(), config_.heads, std::move(tasks)));
}

SelectionBuffer IpsModelImpl::select(const Image& image, ResidencyProbe* probe) {
    const PatchGrid grid = make_patch_grid(image.height, image.width, config_.patch_size, config_.stride);
    const bool was_training = encoder->is_training();
    encoder->eval();
    torch::NoGradGuard no_grad;

    std::int64_t cursor = 0;
    BatchSource source = [&](std::int64_t max_count, EmbeddingBatch& out) {
        if (cursor >= grid.size()) {
            return false;
        }
        const std::int64_t end = std::min(grid.size(), cursor + max_count);
        out.indices.resize(static_cast<std::size_t>(end - cursor));
        std::iota(out.indices.begin(), out.indices.end(), cursor);
        out.embeddings = encoder->forward(patches_to_tensor(image, grid, out.indices, config_.pixel_norm));
        cursor = end;
        return true;
    };
    Scorer scorer = [this](const torch::Tensor& x) { return classifier->pool->ranking_logits(x); };
    SelectionBuffer buffer = ips_select(source, config_.memory_size, config_.iteration_size, scorer, probe);
    encoder->train(was_training);
    return buffer;
}

std::vector<torch::Tensor> IpsModelImpl::forward(const std::vector<const Image*>& images, ResidencyProbe* probe) {
    if (images.empty()) {
        throw std::invalid_argument("forward: empty batch");
    }
    std::vector<torch::Tensor> patch_batches;
    std::vector<std::int64_t> counts;
    for (const Image* image : images) {
        const SelectionBuffer buffer = select(*image, probe);
        const PatchGrid grid = make_patch_grid(image->height, image->width, config_.patch_size, config_.stride);
        patch_batches.push_back(patches_to_tensor(*image, grid, buffer.indices(), config_.pixel_norm));
        counts.push_back(buffer.size());
        if (probe) {
            probe->observe(buffer.size());
        }
    }
    // All selected patches of the batch go through the encoder together.
    const auto embeddings = encoder->forward(torch::cat(patch_batches, 0));

    std::vector<std::vector<torch::Tensor>> per_task(tasks().size());
    std::int64_t offset = 0;
    for (auto count : counts) {
        auto logits = classifier->forward(embeddings.slice(0, offset, offset + count));
        for (std::size_t t = 0; t < logits.size(); ++t) {
            per_task[t].push_back(std::move(logits[t]));
        }
        offset += count;
    }
    std::vector<torch::Tensor> out;
    for (auto& rows : per_task) {
        out.push_back(torch::stack(rows, 0));
    }
    return out;
}

std::vector<torch::Tensor> IpsModelImpl::forward(const Image& image, ResidencyProbe* probe) {
    return forward(std::vector<const Image*>{&image}, probe);
}

} // namespace ips
