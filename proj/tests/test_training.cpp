#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "ips/attnmap.hpp"
#include "ips/checkpoint.hpp"
#include "ips/experiments.hpp"
#include "ips/training.hpp"
#include "support.hpp"

using namespace ips;
using nlohmann::json;

namespace {

RunConfig tiny_config() {
    RunConfig c;
    c.data.train.canvas_size = 100;
    c.data.train.digit_size = 14;
    c.data.train.n_samples = 8;
    c.data.train.noise_count = 2;
    c.data.n_validation = 4;
    c.model.encoder = "resnet18-slim";
    c.model.heads = 2;
    c.model.memory_size = 3;
    c.model.iteration_size = 4;
    c.model.patch_size = 25;
    c.model.stride = 25;
    c.train.epochs = 2;
    c.train.warmup_epochs = 1;
    c.train.batch_size = 4;
    return c;
}

std::shared_ptr<const bench::GlyphBank> bank() {
    static auto b = std::make_shared<const bench::GlyphBank>(test::synthetic_bank());
    return b;
}

MegapixelSource tiny_source(const RunConfig& c) {
    return MegapixelSource(c.data.train, bank());
}

class NanSource : public ExampleSource {
public:
    explicit NanSource(const ExampleSource& inner) : inner_(inner) {}
    std::size_t size() const override { return inner_.size(); }
    Image image(std::size_t i) const override {
        Image im = inner_.image(i);
        im.data[0] = std::numeric_limits<float>::quiet_NaN();
        return im;
    }
    TargetRow targets(std::size_t i) const override { return inner_.targets(i); }
    const std::vector<TaskHeadSpec>& tasks() const override { return inner_.tasks(); }

private:
    const ExampleSource& inner_;
};

// Relabels each sample from its placements instead of the stored labels.
class RelabeledSource : public MegapixelSource {
public:
    using MegapixelSource::MegapixelSource;
    TargetRow targets(std::size_t i) const override {
        return targets_from_labels(bench::compute_labels(sample(i).digits),
                                   {bench::Task::maj, bench::Task::max, bench::Task::top, bench::Task::multi});
    }
};

} // namespace

TEST_CASE("multi-task loss values") {
    const auto tasks = megapixel_task_heads({bench::Task::maj, bench::Task::multi});
    const auto uniform = std::vector<torch::Tensor>{torch::zeros({2, 10}), torch::zeros({2, 10})};
    const auto targets = std::vector<torch::Tensor>{torch::tensor({3, 7}), torch::zeros({2, 10})};
    CHECK(multi_task_loss(tasks, uniform, targets).item<double>() ==
          doctest::Approx(std::log(10.0) + std::log(2.0)).epsilon(1e-6));

    // Logits revealing the ground truth do strictly better.
    auto reveal = std::vector<torch::Tensor>{torch::zeros({2, 10}), torch::full({2, 10}, -8.0)};
    reveal[0][0][3] = 8.0;
    reveal[0][1][7] = 8.0;
    CHECK(multi_task_loss(tasks, reveal, targets).item<double>() < 0.01);
    CHECK(count_correct(tasks, reveal, targets) == std::vector<std::int64_t>{2, 2});
    CHECK(count_correct(tasks, uniform, targets)[1] == 2);

    CHECK_THROWS_AS(multi_task_loss(tasks, {uniform[0]}, targets), std::invalid_argument);
}

TEST_CASE("targets follow the task kinds") {
    bench::TaskLabels labels;
    labels.maj = 4;
    labels.max = 9;
    labels.top = 1;
    labels.multi[4] = labels.multi[9] = labels.multi[1] = 1;
    const auto tasks = std::vector<bench::Task>{bench::Task::maj, bench::Task::max, bench::Task::top, bench::Task::multi};
    const auto row = targets_from_labels(labels, tasks);
    const auto stacked = stack_targets(megapixel_task_heads(tasks), {row, row});
    CHECK(stacked[0][1].item<std::int64_t>() == 4);
    CHECK(stacked[1][0].item<std::int64_t>() == 9);
    CHECK(stacked[2][0].item<std::int64_t>() == 1);
    CHECK(stacked[3].sum().item<double>() == doctest::Approx(6.0));
}

TEST_CASE("model forward shapes, selection bound and determinism") {
    torch::manual_seed(0);
    const auto c = tiny_config();
    IpsModel model = build_model(c);
    const auto src = tiny_source(c);
    const Image im = src.image(0);

    ResidencyProbe probe;
    const auto out = model->forward(im, &probe);
    REQUIRE(out.size() == 4);
    CHECK(out[0].sizes() == torch::IntArrayRef{1, 10});
    CHECK(probe.peak <= c.model.memory_size + c.model.iteration_size);
    for (const auto& t : out) CHECK(torch::isfinite(t).all().item<bool>());

    const auto sel = model->select(im);
    CHECK(sel.size() == c.model.memory_size);
    CHECK(model->encoder->embedding_dim() == 128);
    CHECK(model->encoder->forward(torch::zeros({2, 1, 25, 25})).sizes() == torch::IntArrayRef{2, 128});

    model->eval();
    torch::NoGradGuard g;
    const Image im1 = src.image(1);
    const auto a = model->forward({&im, &im1});
    const auto b = model->forward({&im, &im1});
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(torch::equal(a[t], b[t]));
    // Batching does not change per-image results in eval mode.
    CHECK(torch::allclose(a[0][1], model->forward(im1)[0][0], 1e-5, 1e-6));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const auto dir = test::temp_dir("ckpt");
    torch::manual_seed(1);
    const auto c = tiny_config();
    IpsModel a = build_model(c);
    save_checkpoint(dir / "m.ipsckpt", *a, {{"config", to_json(c)}, {"note", "x"}});
    torch::manual_seed(2);
    IpsModel b = build_model(c);
    const auto meta = load_checkpoint(dir / "m.ipsckpt", *b);
    CHECK(meta.at("note") == "x");
    const auto sa = module_state(*a), sb = module_state(*b);
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].first == sb[i].first);
        CHECK(torch::equal(sa[i].second, sb[i].second));
    }
    auto [cfg, loaded] = load_trained_model(dir / "m.ipsckpt");
    CHECK(to_json(cfg) == to_json(c));

    auto other = c;
    other.model.heads = 4;
    IpsModel mismatched = build_model(other);
    CHECK_NOTHROW(load_checkpoint(dir / "m.ipsckpt", *mismatched));  // same shapes
    other.model.encoder = "resnet18";
    IpsModel wrong = build_model(other);
    CHECK_THROWS(load_checkpoint(dir / "m.ipsckpt", *wrong));

    std::ofstream(dir / "junk.ipsckpt") << "not a checkpoint";
    CHECK_THROWS(load_checkpoint(dir / "junk.ipsckpt", *b));
    std::filesystem::remove_all(dir);
}

TEST_CASE("training smoke run") {
    const auto dir = test::temp_dir("train");
    const auto c = tiny_config();
    const auto train_set = tiny_source(c);
    const MegapixelSource val_set(c.data.validation(), bank());

    std::vector<int> seen;
    const auto r1 = train(c, train_set, &val_set, dir / "a", [&](const EpochMetrics& m) { seen.push_back(m.epoch); });
    CHECK(seen == std::vector<int>{1, 2});
    CHECK(r1.summary.at("status") == "complete");
    for (const char* f : {"config.json", "metrics.csv", "summary.json", "checkpoint_last.ipsckpt",
                          "checkpoint_best.ipsckpt"}) {
        CHECK(std::filesystem::exists(dir / "a" / f));
    }
    const auto table = exp::read_metrics_csv(dir / "a" / "metrics.csv");
    CHECK(table.columns == metrics_columns(train_set.tasks()));
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[1][0] == 2.0);
    CHECK(exp::run_complete(dir / "a"));
    json meta;
    read_tensor_archive(dir / "a" / "checkpoint_last.ipsckpt", &meta);
    CHECK(meta.at("rng").at("epochs_completed") == 2);
    CHECK(meta.at("rng").at("seed") == c.train.seed);

    // Same seed, same first-epoch loss.
    const auto r2 = train(c, train_set, &val_set, dir / "b");
    CHECK(r2.epochs[0].train_loss == r1.epochs[0].train_loss);

    const NanSource broken(train_set);
    CHECK_THROWS_AS(train(c, broken, nullptr, dir / "nan"), TrainingError);
    CHECK_FALSE(exp::run_complete(dir / "nan"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation agrees with recomputed labels") {
    torch::manual_seed(5);
    const auto c = tiny_config();
    IpsModel model = build_model(c);
    const auto stored = tiny_source(c);
    const RelabeledSource relabeled(c.data.train, bank());
    const auto a = evaluate(model, stored, 3);
    const auto b = evaluate(model, relabeled, 3);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    CHECK(a.samples == 8);
}

TEST_CASE("attention maps") {
    const auto dir = test::temp_dir("attn");
    torch::manual_seed(6);
    const auto c = tiny_config();
    IpsModel model = build_model(c);
    const Image im = tiny_source(c).image(0);
    const auto map = build_map(model, im, "canvas0");
    REQUIRE(!map.entries.empty());
    CHECK(map.entries.size() <= static_cast<std::size_t>(c.model.memory_size));
    double peak = 0.0;
    for (const auto& e : map.entries) {
        CHECK(e.normalized >= 0.0);
        CHECK(e.normalized <= 1.0);
        peak = std::max(peak, e.normalized);
    }
    CHECK(peak == 1.0);

    CHECK(visible_entries(map, 1.1).empty());
    CHECK(visible_entries(map, 0.0).size() == map.entries.size());
    const Image none = render_map(map, im, 1.1);
    REQUIRE(none.channels == 3);
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) CHECK(none.data[(y * im.width + x) * 3 + 1] == im.at(y, x));
    const Image cropped = render_map(map, im, 0.1, CropWindow{10, 20, 30, 40});
    CHECK(cropped.height == 30);
    CHECK(cropped.width == 40);

    export_map(dir / "map.png", map, im);
    std::ifstream in(dir / "map.json");
    const auto sidecar = json::parse(in);
    CHECK(attention_map_from_json(sidecar) == map);

    // Positive rescaling of raw scores leaves the display unchanged.
    const auto grid = make_patch_grid(im.height, im.width, c.model.patch_size, c.model.stride);
    std::vector<std::int64_t> idx;
    std::vector<double> raw, scaled;
    for (const auto& e : map.entries) {
        idx.push_back(e.index);
        raw.push_back(e.raw);
        scaled.push_back(e.raw * 37.5);
    }
    const auto m1 = map_from_scores(grid, idx, raw, c.model.memory_size);
    const auto m2 = map_from_scores(grid, idx, scaled, c.model.memory_size);
    CHECK(render_map(m1, im).data == render_map(m2, im).data);

    CHECK_THROWS(map_from_scores(grid, idx, std::vector<double>(idx.size(), -1.0), c.model.memory_size));
    CHECK_THROWS(map_from_scores(grid, idx, raw, 1));
    std::filesystem::remove_all(dir);
}
