#include "ips/cross_attention.hpp"

#include <cmath>
#include <stdexcept>

namespace ips {

namespace nn = torch::nn;

CrossAttnPoolImpl::CrossAttnPoolImpl(int embed_dim, int heads, int value_dim)
    : embed_dim_(embed_dim), heads_(heads), value_dim_(value_dim < 0 ? embed_dim : value_dim) {
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("cross-attention: embed_dim must be a positive multiple of heads");
    }
    if (value_dim_ % heads != 0) {
        throw std::invalid_argument("cross-attention: value_dim must be a multiple of heads");
    }
    query = register_parameter("query", torch::randn({1, embed_dim}) * 0.02);
    norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({embed_dim})));
    q_proj = register_module("q_proj", nn::Linear(nn::LinearOptions(embed_dim, embed_dim).bias(false)));
    k_proj = register_module("k_proj", nn::Linear(nn::LinearOptions(embed_dim, embed_dim).bias(false)));
    v_proj = register_module("v_proj", nn::Linear(nn::LinearOptions(embed_dim, value_dim_).bias(false)));
    out_proj = register_module("out_proj", nn::Linear(nn::LinearOptions(value_dim_, embed_dim).bias(false)));
}

torch::Tensor CrossAttnPoolImpl::head_logits(const torch::Tensor& x) {
    if (x.dim() != 2 || x.size(1) != embed_dim_ || x.size(0) < 1) {
        throw std::invalid_argument("cross-attention: expected [m >= 1, D] embeddings");
    }
    const int64_t m = x.size(0);
    const auto q = q_proj(query).view({heads_, head_dim(), 1});                   // [H, dh, 1]
    const auto k = k_proj(norm(x)).view({m, heads_, head_dim()}).transpose(0, 1);  // [H, m, dh]
    return torch::bmm(k, q).squeeze(-1) / std::sqrt(static_cast<double>(head_dim()));
}

torch::Tensor CrossAttnPoolImpl::attention(const torch::Tensor& x) {
    return torch::softmax(head_logits(x), /*dim=*/1);
}

torch::Tensor CrossAttnPoolImpl::attention_scores(const torch::Tensor& x) {
    torch::NoGradGuard no_grad;
    return attention(x).mean(0);
}

torch::Tensor CrossAttnPoolImpl::values(const torch::Tensor& x) {
    return v_proj(norm(x));
}

torch::Tensor CrossAttnPoolImpl::aggregate(const torch::Tensor& x) {
    const int64_t m = x.size(0);
    const int64_t dv = value_dim_ / heads_;
    const auto a = attention(x).unsqueeze(1);                                // [H, 1, m]
    const auto v = values(x).view({m, heads_, dv}).transpose(0, 1);          // [H, m, dv]
    return torch::bmm(a, v).reshape({value_dim_});
}

torch::Tensor CrossAttnPoolImpl::project(const torch::Tensor& z) {
    return out_proj(z);
}

std::vector<double> CrossAttnPoolImpl::ranking_logits(const torch::Tensor& x) {
    torch::NoGradGuard no_grad;
    if (x.dim() != 2 || x.size(1) != embed_dim_) {
        throw std::invalid_argument("cross-attention: expected [m, D] embeddings");
    }
    const int64_t d = embed_dim_;
    const auto wq = q_proj->weight.detach().to(torch::kDouble).contiguous();
    const auto wk = k_proj->weight.detach().to(torch::kDouble).contiguous();
    const auto qv = query.detach().to(torch::kDouble).contiguous();
    const double* wq_p = wq.data_ptr<double>();
    const double* wk_p = wk.data_ptr<double>();
    const double* q_p = qv.data_ptr<double>();

    // Mean over heads of q_h . k_h / sqrt(dh) collapses to LN(x) . u with
    // u_i = sum_j Wk[j, i] q_j / (H sqrt(dh)).
    std::vector<double> projected_query(static_cast<std::size_t>(d), 0.0);
    for (int64_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < d; ++i) acc += wq_p[j * d + i] * q_p[i];
        projected_query[static_cast<std::size_t>(j)] = acc;
    }
    const double scale = 1.0 / (heads_ * std::sqrt(static_cast<double>(head_dim())));
    std::vector<double> u(static_cast<std::size_t>(d), 0.0);
    for (int64_t j = 0; j < d; ++j) {
        const double qj = projected_query[static_cast<std::size_t>(j)] * scale;
        for (int64_t i = 0; i < d; ++i) u[static_cast<std::size_t>(i)] += wk_p[j * d + i] * qj;
    }

    const auto gamma = norm->weight.detach().to(torch::kDouble).contiguous();
    const auto beta = norm->bias.detach().to(torch::kDouble).contiguous();
    const double eps = norm->options.eps();
    const double* g_p = gamma.data_ptr<double>();
    const double* b_p = beta.data_ptr<double>();
    const auto xs = x.detach().to(torch::kDouble).contiguous();
    const double* x_p = xs.data_ptr<double>();

    std::vector<double> out(static_cast<std::size_t>(x.size(0)));
    for (int64_t r = 0; r < x.size(0); ++r) {
        const double* row = x_p + r * d;
        double mean = 0.0;
        for (int64_t i = 0; i < d; ++i) mean += row[i];
        mean /= d;
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= d;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        double logit = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            logit += ((row[i] - mean) * inv_std * g_p[i] + b_p[i]) * u[static_cast<std::size_t>(i)];
        }
        out[static_cast<std::size_t>(r)] = logit;
    }
    return out;
}

} // namespace ips
