#include "ips/training.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ips/checkpoint.hpp"
#include "ips/rng.hpp"

namespace ips {

using nlohmann::json;

TargetRow targets_from_labels(const bench::TaskLabels& labels, const std::vector<bench::Task>& tasks) {
    TargetRow row;
    for (auto t : tasks) {
        switch (t) {
        case bench::Task::maj: row.push_back({static_cast<float>(labels.maj)}); break;
        case bench::Task::max: row.push_back({static_cast<float>(labels.max)}); break;
        case bench::Task::top: row.push_back({static_cast<float>(labels.top)}); break;
        case bench::Task::multi: row.emplace_back(labels.multi.begin(), labels.multi.end()); break;
        }
    }
    return row;
}

MegapixelSource::MegapixelSource(bench::DatasetConfig config, std::shared_ptr<const bench::GlyphBank> bank)
    : config_(std::move(config)), bank_(std::move(bank)), tasks_(megapixel_task_heads(config_.tasks)) {
    config_.validate();
    samples_.reserve(static_cast<std::size_t>(config_.n_samples));
    for (int i = 0; i < config_.n_samples; ++i) {
        samples_.push_back(bench::generate_sample(config_, *bank_, static_cast<std::uint64_t>(i)));
    }
}

MegapixelSource::MegapixelSource(bench::DatasetConfig config, std::shared_ptr<const bench::GlyphBank> bank,
                                 std::vector<bench::CanvasSample> samples)
    : config_(std::move(config)), bank_(std::move(bank)), samples_(std::move(samples)),
      tasks_(megapixel_task_heads(config_.tasks)) {}

Image MegapixelSource::image(std::size_t i) const {
    return bench::rasterize_canvas(samples_.at(i), config_, *bank_);
}

TargetRow MegapixelSource::targets(std::size_t i) const {
    return targets_from_labels(samples_.at(i).labels, config_.tasks);
}

StsSource::StsSource(std::vector<sts::StsRecord> records) : records_(std::move(records)), tasks_(sts_task_heads()) {}

Image StsSource::image(std::size_t i) const {
    return read_rgb(records_.at(i).image);
}

TargetRow StsSource::targets(std::size_t i) const {
    return {{static_cast<float>(static_cast<int>(records_.at(i).label))}};
}

std::vector<torch::Tensor> stack_targets(const std::vector<TaskHeadSpec>& tasks, const std::vector<TargetRow>& rows) {
    std::vector<torch::Tensor> out;
    const auto b = static_cast<std::int64_t>(rows.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].kind == TaskKind::multiclass) {
            auto y = torch::empty({b}, torch::kLong);
            for (std::int64_t i = 0; i < b; ++i) {
                y[i] = static_cast<std::int64_t>(rows[static_cast<std::size_t>(i)][t].at(0));
            }
            out.push_back(y);
        } else {
            auto y = torch::empty({b, tasks[t].outputs}, torch::kFloat);
            auto acc = y.accessor<float, 2>();
            for (std::int64_t i = 0; i < b; ++i) {
                const auto& v = rows[static_cast<std::size_t>(i)][t];
                if (static_cast<int>(v.size()) != tasks[t].outputs) {
                    throw std::invalid_argument("stack_targets: multilabel row has wrong length");
                }
                for (int k = 0; k < tasks[t].outputs; ++k) {
                    acc[i][k] = v[static_cast<std::size_t>(k)];
                }
            }
            out.push_back(y);
        }
    }
    return out;
}

torch::Tensor multi_task_loss(const std::vector<TaskHeadSpec>& tasks, const std::vector<torch::Tensor>& logits,
                              const std::vector<torch::Tensor>& targets) {
    if (logits.size() != tasks.size() || targets.size() != tasks.size()) {
        throw std::invalid_argument("multi_task_loss: one logit and target tensor per task expected");
    }
    torch::Tensor total;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto term = tasks[t].kind == TaskKind::multiclass
                              ? torch::nn::functional::cross_entropy(logits[t], targets[t])
                              : torch::nn::functional::binary_cross_entropy_with_logits(
                                    logits[t], targets[t].to(logits[t].dtype()));
        total = total.defined() ? total + term : term;
    }
    return total;
}

std::vector<std::int64_t> count_correct(const std::vector<TaskHeadSpec>& tasks,
                                        const std::vector<torch::Tensor>& logits,
                                        const std::vector<torch::Tensor>& targets) {
    torch::NoGradGuard no_grad;
    std::vector<std::int64_t> out;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        torch::Tensor hit;
        if (tasks[t].kind == TaskKind::multiclass) {
            hit = logits[t].argmax(1).eq(targets[t]);
        } else {
            const auto predicted = torch::sigmoid(logits[t]).gt(0.5);
            hit = predicted.eq(targets[t].gt(0.5)).all(1);
        }
        out.push_back(hit.sum().item<std::int64_t>());
    }
    return out;
}

namespace {

struct BatchOutcome {
    torch::Tensor loss;
    std::vector<std::int64_t> correct;
};

BatchOutcome run_batch(IpsModel& model, const ExampleSource& source, const std::vector<std::size_t>& ids) {
    std::vector<Image> images;
    std::vector<TargetRow> rows;
    images.reserve(ids.size());
    for (auto i : ids) {
        images.push_back(source.image(i));
        rows.push_back(source.targets(i));
    }
    std::vector<const Image*> ptrs;
    for (const auto& im : images) {
        ptrs.push_back(&im);
    }
    const auto logits = model->forward(ptrs);
    const auto targets = stack_targets(source.tasks(), rows);
    return {multi_task_loss(source.tasks(), logits, targets), count_correct(source.tasks(), logits, targets)};
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::filesystem::path resolve_mnist_dir(const DataConfig& data) {
    if (!data.mnist_dir.empty()) {
        return data.mnist_dir;
    }
    if (const char* root = std::getenv("IPS_DATA_ROOT")) {
        return std::filesystem::path(root) / "mnist";
    }
    throw std::invalid_argument("data.mnist_dir is empty and IPS_DATA_ROOT is not set");
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot write");
    }
    out << j.dump(2) << '\n';
}

} // namespace

EvalResult evaluate(IpsModel& model, const ExampleSource& source, int batch_size) {
    const bool was_training = model->is_training();
    model->eval();
    torch::NoGradGuard no_grad;
    EvalResult result;
    std::vector<std::int64_t> correct(source.tasks().size(), 0);
    double loss_sum = 0.0;
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), 0);
    for (const auto& ids : make_batches(order, batch_size)) {
        const auto out = run_batch(model, source, ids);
        loss_sum += out.loss.item<double>() * static_cast<double>(ids.size());
        for (std::size_t t = 0; t < correct.size(); ++t) {
            correct[t] += out.correct[t];
        }
    }
    model->train(was_training);
    result.samples = source.size();
    const double n = std::max<double>(1.0, static_cast<double>(source.size()));
    for (auto c : correct) {
        result.accuracy.push_back(100.0 * static_cast<double>(c) / n);
    }
    result.loss = loss_sum / n;
    return result;
}

std::vector<TaskHeadSpec> task_heads(const RunConfig& config) {
    return config.data.kind == DataKind::sts ? sts_task_heads() : megapixel_task_heads(config.data.train.tasks);
}

Datasets make_datasets(const RunConfig& config) {
    Datasets out;
    if (config.data.kind == DataKind::megapixel_mnist) {
        const auto dir = resolve_mnist_dir(config.data);
        auto train_bank = std::make_shared<const bench::GlyphBank>(bench::load_mnist(dir, "train"));
        auto val_bank = std::make_shared<const bench::GlyphBank>(bench::load_mnist(dir, "t10k"));
        auto train_cfg = config.data.train;
        train_cfg.split = bench::Split::train;
        out.train = std::make_unique<MegapixelSource>(train_cfg, train_bank);
        if (config.data.n_validation > 0) {
            out.validation = std::make_unique<MegapixelSource>(config.data.validation(), val_bank);
        }
        return out;
    }
    std::ifstream in(config.data.sts_manifest);
    if (!in) {
        throw std::runtime_error(config.data.sts_manifest.string() + ": cannot open STS manifest");
    }
    const json manifest = json::parse(in);
    auto train_split = sts::split_from_manifest(manifest, "train");
    sts::SubsetSpec subset;
    subset.fraction = config.data.sts_fraction;
    subset.seed = config.data.sts_subset_seed;
    out.train = std::make_unique<StsSource>(sts::stratified_subset(train_split.records, subset));
    out.validation = std::make_unique<StsSource>(sts::split_from_manifest(manifest, "validation").records);
    return out;
}

IpsModel build_model(const RunConfig& config) {
    IpsModel model(config.model, task_heads(config));
    if (!config.model.encoder_weights.empty()) {
        load_checkpoint(config.model.encoder_weights, *model->encoder);
    } else if (config.model.pretrained) {
        throw std::invalid_argument("model.pretrained requires model.encoder_weights (see scripts/export_resnet18_weights.py)");
    }
    return model;
}

std::pair<RunConfig, IpsModel> load_trained_model(const std::filesystem::path& checkpoint) {
    json meta;
    read_tensor_archive(checkpoint, &meta);
    if (!meta.contains("config")) {
        throw std::runtime_error(checkpoint.string() + ": checkpoint carries no run config");
    }
    RunConfig config = run_config_from_json(meta.at("config"));
    IpsModel model(config.model, task_heads(config));
    load_checkpoint(checkpoint, *model);
    model->eval();
    return {config, model};
}

std::int64_t peak_memory_bytes() {
    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    return static_cast<std::int64_t>(usage.ru_maxrss) * 1024;
}

std::vector<std::string> metrics_columns(const std::vector<TaskHeadSpec>& tasks) {
    std::vector<std::string> cols{"epoch", "lr", "train_loss"};
    for (const auto& t : tasks) cols.push_back("train_acc_" + t.name);
    cols.push_back("val_loss");
    for (const auto& t : tasks) cols.push_back("val_acc_" + t.name);
    cols.push_back("ms_per_batch");
    cols.push_back("peak_memory_bytes");
    return cols;
}

TrainResult train(const RunConfig& config, const std::filesystem::path& run_dir, const EpochCallback& on_epoch) {
    config.validate();
    const auto data = make_datasets(config);
    return train(config, *data.train, data.validation.get(), run_dir, on_epoch);
}

TrainResult train(const RunConfig& config, const ExampleSource& train_set, const ExampleSource* validation_set,
                  const std::filesystem::path& run_dir, const EpochCallback& on_epoch) {
    config.validate();
    if (train_set.size() == 0) {
        throw std::invalid_argument("train: empty training set");
    }
    const auto& tasks = train_set.tasks();
    const json config_echo = to_json(config);
    std::filesystem::create_directories(run_dir);
    write_json(run_dir / "config.json", config_echo);
    std::filesystem::remove(run_dir / "summary.json");

    torch::manual_seed(config.train.seed);
    at::globalContext().setDeterministicAlgorithms(config.train.deterministic, false);

    IpsModel model = build_model(config);
    model->train();
    const double base_lr = resolved_base_lr(config);
    torch::optim::AdamW optimizer(model->parameters(),
                                  torch::optim::AdamWOptions(base_lr).weight_decay(config.train.weight_decay));

    std::ofstream csv(run_dir / "metrics.csv", std::ios::trunc);
    csv << "# config=" << config_echo.dump() << '\n';
    const auto columns = metrics_columns(tasks);
    for (std::size_t i = 0; i < columns.size(); ++i) {
        csv << (i ? "," : "") << columns[i];
    }
    csv << '\n' << std::flush;

    // Epoch e shuffles with substream (seed, kShuffleStream, e).
    auto ckpt_meta = [&](int epochs_done) {
        return json{{"config", config_echo},
                    {"rng", {{"seed", config.train.seed},
                             {"shuffle_stream", kShuffleStream},
                             {"epochs_completed", epochs_done}}}};
    };
    TrainResult result;
    double best_val = -1.0;
    int best_epoch = 0;
    const auto started = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
        const auto batches = make_batches(shuffled(train_set.size(), config.train.seed, epoch), config.train.batch_size);
        EpochMetrics m;
        m.epoch = epoch + 1;
        std::vector<std::int64_t> correct(tasks.size(), 0);
        double loss_sum = 0.0;
        double batch_ms = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const double progress = epoch + static_cast<double>(step + 1) / static_cast<double>(batches.size());
            m.lr = lr_at(progress, config.train, base_lr);
            for (auto& group : optimizer.param_groups()) {
                static_cast<torch::optim::AdamWOptions&>(group.options()).lr(m.lr);
            }
            const auto t0 = std::chrono::steady_clock::now();
            optimizer.zero_grad();
            auto out = run_batch(model, train_set, batches[step]);
            const double loss = out.loss.item<double>();
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss " << loss << " at epoch " << epoch + 1 << ", step " << step + 1
                    << ", lr " << m.lr << ", samples";
                for (auto i : batches[step]) msg << ' ' << i;
                throw TrainingError(msg.str());
            }
            out.loss.backward();
            optimizer.step();
            batch_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            loss_sum += loss * static_cast<double>(batches[step].size());
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                correct[t] += out.correct[t];
            }
        }
        const double n = static_cast<double>(train_set.size());
        m.train_loss = loss_sum / n;
        for (auto c : correct) {
            m.train_accuracy.push_back(100.0 * static_cast<double>(c) / n);
        }
        m.ms_per_batch = batch_ms / static_cast<double>(batches.size());

        const bool last = epoch + 1 == config.train.epochs;
        if (validation_set && validation_set->size() > 0 && ((epoch + 1) % config.train.eval_every == 0 || last)) {
            const auto ev = evaluate(model, *validation_set, config.train.batch_size);
            m.val_loss = ev.loss;
            m.val_accuracy = ev.accuracy;
            if (ev.accuracy.front() > best_val) {
                best_val = ev.accuracy.front();
                best_epoch = m.epoch;
                save_checkpoint(run_dir / "checkpoint_best.ipsckpt", *model, ckpt_meta(m.epoch));
            }
        }
        m.peak_memory_bytes = peak_memory_bytes();

        csv << m.epoch << ',' << format_double(m.lr) << ',' << format_double(m.train_loss);
        for (double a : m.train_accuracy) csv << ',' << format_double(a);
        csv << ',' << (m.val_accuracy.empty() ? "" : format_double(m.val_loss));
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            csv << ',' << (m.val_accuracy.empty() ? "" : format_double(m.val_accuracy[t]));
        }
        csv << ',' << format_double(m.ms_per_batch) << ',' << m.peak_memory_bytes << '\n' << std::flush;

        result.epochs.push_back(m);
        if (on_epoch) {
            on_epoch(m);
        }
    }
    save_checkpoint(run_dir / "checkpoint_last.ipsckpt", *model, ckpt_meta(config.train.epochs));

    const auto& final = result.epochs.back();
    json final_metrics{{"epoch", final.epoch}, {"train_loss", final.train_loss}, {"lr", final.lr},
                       {"ms_per_batch", final.ms_per_batch}, {"peak_memory_bytes", final.peak_memory_bytes}};
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        final_metrics["train_acc_" + tasks[t].name] = final.train_accuracy[t];
        if (!final.val_accuracy.empty()) {
            final_metrics["val_acc_" + tasks[t].name] = final.val_accuracy[t];
        }
    }
    if (!final.val_accuracy.empty()) {
        final_metrics["val_loss"] = final.val_loss;
    }
    result.summary = {
        {"status", "complete"},
        {"config", config_echo},
        {"base_lr", base_lr},
        {"train_samples", train_set.size()},
        {"validation_samples", validation_set ? validation_set->size() : 0},
        {"final", final_metrics},
        {"best_epoch", best_epoch},
        {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
    };
    write_json(run_dir / "summary.json", result.summary);
    return result;
}

} // namespace ips
