#include <doctest.h>

#include <cmath>

#include "ips/config.hpp"

using namespace ips;
using nlohmann::json;

namespace {

double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    c.epochs = 100;
    c.warmup_epochs = 10;
    CHECK(lr_at(10.0, c, default_base_lr(false)) == doctest::Approx(0.001));
    CHECK(lr_at(10.0, c, default_base_lr(true)) == doctest::Approx(0.0003));
    CHECK(std::abs(lr_at(100.0, c, 1e-3) - 1e-6) < 1e-12);
    CHECK(lr_at(0.0, c, 1e-3) == 0.0);
    CHECK(lr_at(5.0, c, 1e-3) == doctest::Approx(5e-4));

    // Continuous at the warm-up boundary and non-increasing after it.
    CHECK(lr_at(10.0 - 1e-9, c, 1e-3) == doctest::Approx(lr_at(10.0, c, 1e-3)).epsilon(1e-6));
    double prev = lr_at(10.0, c, 1e-3);
    for (double e = 10.0; e <= 100.0; e += 0.25) {
        const double lr = lr_at(e, c, 1e-3);
        CHECK(lr <= prev);
        prev = lr;
    }
    CHECK_THROWS(lr_at(-0.1, c, 1e-3));
    CHECK_THROWS(lr_at(100.1, c, 1e-3));

    c.warmup_mode = WarmupMode::linear_decay;
    CHECK(lr_at(0.0, c, 1e-3) == doctest::Approx(1e-2));
    CHECK(lr_at(10.0, c, 1e-3) == doctest::Approx(1e-3));
    CHECK(lr_at(9.999999, c, 1e-3) == doctest::Approx(1e-3).epsilon(1e-5));
}

TEST_CASE("max-task random baseline") {
    const double listed[10] = {0.00, 0.00, 0.01, 0.03, 0.05, 0.08, 0.13, 0.18, 0.23, 0.30};
    double total = 0.0;
    for (int x = 0; x <= 9; ++x) {
        // Exhaustive oracle over all unordered triples of distinct digits.
        int wins = 0, triples = 0;
        for (int a = 0; a < 10; ++a)
            for (int b = a + 1; b < 10; ++b)
                for (int d = b + 1; d < 10; ++d) {
                    ++triples;
                    wins += d == x;
                }
        CHECK(triples == 120);
        CHECK(max_random_baseline(x) == doctest::Approx(wins / 120.0));
        CHECK(max_random_baseline(x) == doctest::Approx(binom(x, 2) / binom(10, 3)));
        CHECK(std::round(max_random_baseline(x) * 100.0) / 100.0 == doctest::Approx(listed[x]));
        total += max_random_baseline(x);
    }
    CHECK(total == doctest::Approx(1.0));
    CHECK(max_random_baseline(9) == doctest::Approx(0.30));
    CHECK_THROWS(max_random_baseline(10));
}

TEST_CASE("run config defaults and JSON round trip") {
    const auto c = run_config_from_json(json::object());
    CHECK(c.train.epochs == 100);
    CHECK(c.train.batch_size == 16);
    CHECK(c.model.memory_size == 100);
    CHECK(c.model.iteration_size == 100);
    CHECK(c.model.patch_size == 50);
    CHECK(c.model.stride == 50);
    CHECK(c.model.encoder == "resnet18");
    CHECK(resolved_base_lr(c) == doctest::Approx(1e-3));

    const auto sts = run_config_from_json({{"data", {{"kind", "sts"}}}});
    CHECK(sts.model.pretrained);
    CHECK(sts.model.pixel_norm == PixelNorm::imagenet);
    CHECK(resolved_base_lr(sts) == doctest::Approx(3e-4));

    const auto patch = run_config_from_json({{"model", {{"patch_size", 25}}}});
    CHECK(patch.model.stride == 25);

    const auto j = to_json(c);
    CHECK(to_json(run_config_from_json(j)) == j);

    CHECK_THROWS_AS(run_config_from_json({{"model", {{"colour", 1}}}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json({{"train", {{"epochs", 5}, {"warmup_epochs", 10}}}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json({{"train", {{"final_lr_divisor", 1.0}}}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json({{"data", {{"dataset", {{"digit_size", 4000}}}}}}), std::invalid_argument);
}
