#pragma once

#include <vector>

#include <torch/torch.h>

namespace ips {

/// Multi-head cross-attention of one learnable query over a set of patch
/// embeddings. Inputs are layer-normalized; head h attends with
/// softmax_m(q_h . k_{h,m} / sqrt(D_h)), and the pooled bag embedding is
///
///     z = concat_h  sum_m a_{h,m} (LN(x_m) W^v_h)          (length D_v)
///
/// which reduces to z = sum_m a_m x*_m W^v for a single head.
class CrossAttnPoolImpl : public torch::nn::Module {
public:
    CrossAttnPoolImpl(int embed_dim, int heads, int value_dim = -1);

    int embed_dim() const { return embed_dim_; }
    int heads() const { return heads_; }
    int head_dim() const { return embed_dim_ / heads_; }
    int value_dim() const { return value_dim_; }

    /// Pre-softmax logits, [H, m].
    torch::Tensor head_logits(const torch::Tensor& x);
    /// Per-head attention weights, [H, m]; each row sums to 1.
    torch::Tensor attention(const torch::Tensor& x);
    /// Head-averaged attention, [m], computed without autograd.
    torch::Tensor attention_scores(const torch::Tensor& x);
    /// Values LN(x) W^v, [m, D_v].
    torch::Tensor values(const torch::Tensor& x);
    /// Bag embedding z, [D_v]; differentiable.
    torch::Tensor aggregate(const torch::Tensor& x);
    /// Output projection D_v -> D applied to z.
    torch::Tensor project(const torch::Tensor& z);
    torch::Tensor forward(const torch::Tensor& x) { return project(aggregate(x)); }

    /// Head-averaged pre-softmax logit per row, in double precision. Each row
    /// is scored independently of the others, so a patch receives the same
    /// value whatever set it is scored with; this is the ranking key used by
    /// patch selection.
    std::vector<double> ranking_logits(const torch::Tensor& x);

    torch::Tensor query;
    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    int embed_dim_;
    int heads_;
    int value_dim_;
};
TORCH_MODULE(CrossAttnPool);

} // namespace ips
