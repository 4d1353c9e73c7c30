#pragma once

// Iterative patch selection: stream patch embeddings in batches of I and keep
// only the M highest-scoring ones resident.

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace ips {

struct ScoredPatch {
    std::int64_t index = 0;
    double score = 0.0;
};

/// Selection order: higher score first, then lower patch index.
inline bool ranks_before(const ScoredPatch& a, const ScoredPatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
}

/// Counts patch embeddings held at once (buffer plus incoming batch).
struct ResidencyProbe {
    std::int64_t peak = 0;
    std::int64_t updates = 0;

    void observe(std::int64_t resident) {
        peak = std::max(peak, resident);
        ++updates;
    }
};

/// Scores for each row of an [m, D] embedding matrix. Must score each row
/// independently of the other rows for selection to be order-invariant.
using Scorer = std::function<std::vector<double>(const torch::Tensor&)>;

struct EmbeddingBatch {
    std::vector<std::int64_t> indices;
    torch::Tensor embeddings;  // [indices.size(), D]
};

/// Produces the next batch of at most `max_count` patches; returns false when
/// the stream is exhausted.
using BatchSource = std::function<bool(std::int64_t max_count, EmbeddingBatch& out)>;

class SelectionBuffer {
public:
    explicit SelectionBuffer(std::int64_t capacity);

    std::int64_t capacity() const { return capacity_; }
    std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
    bool empty() const { return entries_.empty(); }

    /// Entries in selection order.
    const std::vector<ScoredPatch>& entries() const { return entries_; }
    /// Row r belongs to entries()[r].
    const torch::Tensor& embeddings() const { return embeddings_; }
    std::vector<std::int64_t> indices() const;

    /// Scores buffer and batch together and keeps the top `capacity`.
    void update(const EmbeddingBatch& batch, const Scorer& scorer, ResidencyProbe* probe = nullptr);

private:
    std::int64_t capacity_;
    std::vector<ScoredPatch> entries_;
    torch::Tensor embeddings_;
};

/// Fills the buffer with the first min(M, N) patches, then folds in batches of
/// at most I. Throws std::invalid_argument for M < 1, I < 1 or an empty stream.
SelectionBuffer ips_select(const BatchSource& source, std::int64_t memory_size, std::int64_t iteration_size,
                           const Scorer& scorer, ResidencyProbe* probe = nullptr);

/// Source over a fixed [N, D] matrix, indices 0..N-1 in row order.
BatchSource tensor_source(torch::Tensor embeddings);

} // namespace ips
