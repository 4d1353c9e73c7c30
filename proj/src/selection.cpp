#include "ips/selection.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ips {

SelectionBuffer::SelectionBuffer(std::int64_t capacity) : capacity_(capacity) {
    if (capacity < 1) {
        throw std::invalid_argument("selection buffer capacity must be >= 1");
    }
}

std::vector<std::int64_t> SelectionBuffer::indices() const {
    std::vector<std::int64_t> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.index);
    }
    return out;
}

void SelectionBuffer::update(const EmbeddingBatch& batch, const Scorer& scorer, ResidencyProbe* probe) {
    if (batch.indices.empty()) {
        return;
    }
    if (batch.embeddings.size(0) != static_cast<std::int64_t>(batch.indices.size())) {
        throw std::invalid_argument("selection: batch index/embedding count mismatch");
    }
    torch::NoGradGuard no_grad;
    const torch::Tensor pool = embeddings_.defined() ? torch::cat({embeddings_, batch.embeddings}, 0)
                                                     : batch.embeddings;
    if (probe) {
        probe->observe(pool.size(0));
    }
    const std::vector<double> scores = scorer(pool);
    if (static_cast<std::int64_t>(scores.size()) != pool.size(0)) {
        throw std::runtime_error("selection: scorer returned wrong number of scores");
    }

    std::vector<ScoredPatch> candidates;
    candidates.reserve(scores.size());
    for (std::size_t r = 0; r < entries_.size(); ++r) {
        candidates.push_back({entries_[r].index, scores[r]});
    }
    for (std::size_t r = 0; r < batch.indices.size(); ++r) {
        candidates.push_back({batch.indices[r], scores[entries_.size() + r]});
    }

    std::vector<std::int64_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    const auto keep = std::min<std::int64_t>(capacity_, static_cast<std::int64_t>(order.size()));
    std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](std::int64_t a, std::int64_t b) {
        return ranks_before(candidates[static_cast<std::size_t>(a)], candidates[static_cast<std::size_t>(b)]);
    });
    order.resize(static_cast<std::size_t>(keep));

    std::vector<ScoredPatch> kept;
    kept.reserve(order.size());
    for (auto r : order) {
        kept.push_back(candidates[static_cast<std::size_t>(r)]);
    }
    entries_ = std::move(kept);
    embeddings_ = pool.index_select(0, torch::tensor(order, torch::kLong));
}

SelectionBuffer ips_select(const BatchSource& source, std::int64_t memory_size, std::int64_t iteration_size,
                           const Scorer& scorer, ResidencyProbe* probe) {
    if (memory_size < 1 || iteration_size < 1) {
        throw std::invalid_argument("ips_select: memory and iteration sizes must be >= 1");
    }
    SelectionBuffer buffer(memory_size);
    EmbeddingBatch batch;
    if (!source(memory_size, batch) || batch.indices.empty()) {
        throw std::invalid_argument("ips_select: empty patch stream");
    }
    buffer.update(batch, scorer, probe);
    while (source(iteration_size, batch) && !batch.indices.empty()) {
        buffer.update(batch, scorer, probe);
    }
    return buffer;
}

BatchSource tensor_source(torch::Tensor embeddings) {
    auto cursor = std::make_shared<std::int64_t>(0);
    return [embeddings = std::move(embeddings), cursor](std::int64_t max_count, EmbeddingBatch& out) {
        const std::int64_t n = embeddings.size(0);
        if (*cursor >= n) {
            return false;
        }
        const std::int64_t end = std::min(n, *cursor + max_count);
        out.indices.resize(static_cast<std::size_t>(end - *cursor));
        std::iota(out.indices.begin(), out.indices.end(), *cursor);
        out.embeddings = embeddings.slice(0, *cursor, end);
        *cursor = end;
        return true;
    };
}

} // namespace ips
