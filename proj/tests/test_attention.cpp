#include <doctest.h>

#include <cmath>

#include "ips/model.hpp"
#include "ips/training.hpp"

using namespace ips;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const torch::Tensor& t) {
    const auto c = t.to(torch::kDouble).contiguous();
    Mat out(static_cast<std::size_t>(c.size(0)), std::vector<double>(static_cast<std::size_t>(c.size(1))));
    for (std::int64_t i = 0; i < c.size(0); ++i)
        for (std::int64_t j = 0; j < c.size(1); ++j) out[i][j] = c[i][j].item<double>();
    return out;
}

// y = W v for a [out, in] weight.
std::vector<double> matvec(const Mat& w, const std::vector<double>& v) {
    std::vector<double> y(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) y[i] += w[i][j] * v[j];
    return y;
}

std::vector<double> layer_norm(const std::vector<double>& x, const Mat& gb, double eps) {
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v / x.size();
    for (double v : x) var += (v - mean) * (v - mean) / x.size();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * gb[0][i] + gb[1][i];
    return y;
}

struct DenseRef {
    Mat attn;               // [H][m]
    std::vector<double> z;  // [D]
};

// Straight loop evaluation of multi-head cross-attention pooling.
DenseRef dense_reference(CrossAttnPoolImpl& pool, const torch::Tensor& x) {
    const int d = pool.embed_dim(), h = pool.heads(), dh = pool.head_dim();
    const auto rows = to_mat(x);
    const Mat gb = to_mat(torch::stack({pool.norm->weight, pool.norm->bias}).detach());
    const auto q = matvec(to_mat(pool.q_proj->weight.detach()), to_mat(pool.query.detach())[0]);
    const Mat wk = to_mat(pool.k_proj->weight.detach()), wv = to_mat(pool.v_proj->weight.detach());
    std::vector<std::vector<double>> k, v;
    for (const auto& r : rows) {
        const auto n = layer_norm(r, gb, pool.norm->options.eps());
        k.push_back(matvec(wk, n));
        v.push_back(matvec(wv, n));
    }
    DenseRef ref{Mat(h, std::vector<double>(rows.size())), std::vector<double>(d, 0.0)};
    for (int hh = 0; hh < h; ++hh) {
        std::vector<double> logit(rows.size());
        double peak = -1e300;
        for (std::size_t m = 0; m < rows.size(); ++m) {
            double s = 0.0;
            for (int c = 0; c < dh; ++c) s += q[hh * dh + c] * k[m][hh * dh + c];
            logit[m] = s / std::sqrt(static_cast<double>(dh));
            peak = std::max(peak, logit[m]);
        }
        double total = 0.0;
        for (std::size_t m = 0; m < rows.size(); ++m) total += std::exp(logit[m] - peak);
        for (std::size_t m = 0; m < rows.size(); ++m) {
            ref.attn[hh][m] = std::exp(logit[m] - peak) / total;
            for (int c = 0; c < dh; ++c) ref.z[hh * dh + c] += ref.attn[hh][m] * v[m][hh * dh + c];
        }
    }
    return ref;
}

} // namespace

TEST_CASE("cross-attention matches a dense reference") {
    torch::manual_seed(3);
    for (int heads : {1, 2, 4}) {
        CrossAttnPool pool(8, heads);
        pool->to(torch::kDouble);
        // Non-trivial LN affine so it is exercised.
        torch::NoGradGuard g;
        pool->norm->weight.uniform_(0.5, 1.5);
        pool->norm->bias.uniform_(-0.2, 0.2);
        pool->query.normal_(0.0, 1.0);
        const auto x = torch::randn({5, 8}, torch::kDouble);
        const auto ref = dense_reference(*pool, x);
        const auto a = to_mat(pool->attention(x));
        const auto z = pool->aggregate(x);
        for (int hh = 0; hh < heads; ++hh)
            for (int m = 0; m < 5; ++m) CHECK(a[hh][m] == doctest::Approx(ref.attn[hh][m]).epsilon(1e-10));
        for (int c = 0; c < 8; ++c) CHECK(z[c].item<double>() == doctest::Approx(ref.z[c]).epsilon(1e-10));

        // Ranking logits are the head mean of the pre-softmax logits.
        const auto mean_logit = pool->head_logits(x).mean(0);
        const auto rank = pool->ranking_logits(x);
        for (int m = 0; m < 5; ++m) CHECK(rank[m] == doctest::Approx(mean_logit[m].item<double>()).epsilon(1e-10));
        // ...and independent of the other rows.
        const auto alone = pool->ranking_logits(x.slice(0, 2, 3));
        CHECK(alone[0] == doctest::Approx(rank[2]).epsilon(1e-12));
    }
}

TEST_CASE("attention weight edge cases") {
    torch::manual_seed(4);
    CrossAttnPool pool(8, 2);
    pool->to(torch::kDouble);
    torch::NoGradGuard g;
    const auto one = torch::randn({1, 8}, torch::kDouble);
    CHECK(pool->attention_scores(one)[0].item<double>() == doctest::Approx(1.0));
    // With a single patch the bag embedding is its value vector.
    CHECK(torch::allclose(pool->aggregate(one), pool->v_proj(pool->norm(one)).view({8})));

    const auto same = one.repeat({6, 1});
    const auto s = pool->attention_scores(same);
    for (int m = 0; m < 6; ++m) CHECK(s[m].item<double>() == doctest::Approx(1.0 / 6.0));
    CHECK(s.sum().item<double>() == doctest::Approx(1.0));

    CHECK_THROWS_AS(CrossAttnPool(9, 2), std::invalid_argument);
    CHECK_THROWS_AS(pool->head_logits(torch::zeros({3, 7}, torch::kDouble)), std::invalid_argument);
}

TEST_CASE("aggregation and heads pass central finite differences") {
    torch::manual_seed(11);
    const auto tasks = megapixel_task_heads({bench::Task::maj, bench::Task::multi});
    for (int draw = 0; draw < 3; ++draw) {
        BagClassifier clf(8, 2, tasks);
        clf->to(torch::kDouble);
        const auto x = torch::randn({4, 8}, torch::kDouble);
        std::vector<torch::Tensor> targets{torch::tensor({3}, torch::kLong),
                                           (torch::rand({1, 10}, torch::kDouble) > 0.5).to(torch::kDouble)};
        auto loss_of = [&] {
            auto logits = clf->forward(x);
            for (auto& l : logits) l = l.unsqueeze(0);
            return multi_task_loss(tasks, logits, targets);
        };
        clf->zero_grad();
        loss_of().backward();
        torch::NoGradGuard g;
        for (auto& p : clf->named_parameters()) {
            auto flat = p.value().view({-1});
            const auto grad = p.value().grad().view({-1});
            for (std::int64_t i = 0; i < flat.numel(); ++i) {
                const double orig = flat[i].item<double>();
                const double h = 1e-6;
                flat[i] = orig + h;
                const double up = loss_of().item<double>();
                flat[i] = orig - h;
                const double down = loss_of().item<double>();
                flat[i] = orig;
                const double fd = (up - down) / (2 * h);
                const double an = grad[i].item<double>();
                CAPTURE(p.key());
                CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd) + std::abs(an)));
            }
        }
    }
}
