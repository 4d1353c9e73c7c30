#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ips/selection.hpp"

using namespace ips;

namespace {

// Score = first column, so the oracle can rank without the scorer.
std::vector<double> first_column(const torch::Tensor& x) {
    const auto c = x.select(1, 0).to(torch::kDouble).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

std::vector<std::int64_t> brute_top(const torch::Tensor& x, std::int64_t m) {
    const auto s = first_column(x);
    std::vector<std::int64_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    idx.resize(std::min<std::size_t>(idx.size(), m));
    return idx;
}

} // namespace

TEST_CASE("selection equals global top-M with ties") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = torch::randn({300, 4}, torch::kDouble);
        // Coarse quantization forces many equal scores.
        x.select(1, 0).copy_(torch::round(x.select(1, 0) * 2.0));
        for (std::int64_t m : {1, 10, 50}) {
            for (std::int64_t i : {1, 7, 100, 1000}) {
                ResidencyProbe probe;
                const auto buf = ips_select(tensor_source(x), m, i, first_column, &probe);
                CAPTURE(m);
                CAPTURE(i);
                CHECK(buf.indices() == brute_top(x, m));
                CHECK(probe.peak <= m + i);
                CHECK(buf.embeddings().size(0) == m);
                CHECK(torch::equal(buf.embeddings(), x.index_select(0, torch::tensor(buf.indices()))));
            }
        }
    }
}

TEST_CASE("selection edge cases") {
    const auto x = torch::arange(5, torch::kDouble).view({5, 1});
    const auto all = ips_select(tensor_source(x), 10, 3, first_column);
    CHECK(all.indices() == std::vector<std::int64_t>{4, 3, 2, 1, 0});

    const auto flat = torch::zeros({6, 2}, torch::kDouble);
    CHECK(ips_select(tensor_source(flat), 3, 2, first_column).indices() == std::vector<std::int64_t>{0, 1, 2});

    CHECK_THROWS_AS(ips_select(tensor_source(x), 0, 3, first_column), std::invalid_argument);
    CHECK_THROWS_AS(ips_select(tensor_source(x), 2, 0, first_column), std::invalid_argument);
    CHECK_THROWS_AS(ips_select(tensor_source(torch::zeros({0, 2})), 2, 2, first_column), std::invalid_argument);

    auto bad = [](const torch::Tensor&) { return std::vector<double>{1.0}; };
    CHECK_THROWS(ips_select(tensor_source(x), 2, 2, bad));
}
