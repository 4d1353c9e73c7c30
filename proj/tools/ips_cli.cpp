#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ips/attnmap.hpp"
#include "ips/benchgen.hpp"
#include "ips/config.hpp"
#include "ips/dataset_io.hpp"
#include "ips/experiments.hpp"
#include "ips/noisegen.hpp"
#include "ips/sts.hpp"
#include "ips/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open");
    }
    return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot write");
    }
    out << text;
}

// "--set /train/epochs=5": the value is parsed as JSON, else taken as a string.
void apply_overrides(json& doc, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || s.empty() || s[0] != '/') {
            throw std::invalid_argument("--set expects /json/pointer=value, got '" + s + "'");
        }
        const std::string text = s.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded()) {
            value = text;
        }
        doc[json::json_pointer(s.substr(0, eq))] = value;
    }
}

void check_device() {
    const char* device = std::getenv("IPS_DEVICE");
    if (device && std::string(device) != "cpu") {
        throw std::invalid_argument(std::string("IPS_DEVICE=") + device + ": only cpu is supported by this build");
    }
}

fs::path default_mnist_dir() {
    if (const char* root = std::getenv("IPS_DATA_ROOT")) {
        return fs::path(root) / "mnist";
    }
    return {};
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

std::optional<ips::CropWindow> parse_crop(const std::string& text) {
    if (text.empty()) {
        return std::nullopt;
    }
    ips::CropWindow w;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream is(text);
    if (!(is >> w.y >> c1 >> w.x >> c2 >> w.height >> c3 >> w.width) || c1 != ',' || c2 != ',' || c3 != ',') {
        throw std::invalid_argument("--crop expects y,x,height,width");
    }
    return w;
}

void print_eval(const std::vector<ips::TaskHeadSpec>& tasks, const ips::EvalResult& r) {
    json out{{"samples", r.samples}, {"loss", r.loss}};
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        out["acc_" + tasks[t].name] = r.accuracy[t];
    }
    std::cout << out.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative patch selection on megapixel images"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a Megapixel-MNIST split");
    fs::path gen_config, gen_out, gen_mnist = default_mnist_dir();
    std::string gen_split = "train";
    std::vector<std::string> gen_sets;
    int gen_render = 0;
    gen->add_option("-c,--config", gen_config, "Dataset config JSON")->required();
    gen->add_option("-o,--out", gen_out, "Output directory")->required();
    gen->add_option("--mnist-dir", gen_mnist, "MNIST IDX directory");
    gen->add_option("--split", gen_split, "train or validation");
    gen->add_option("--set", gen_sets, "Override /pointer=value");
    gen->add_option("--render", gen_render, "Also write the first N canvases as PNG");

    // train
    auto* tr = app.add_subcommand("train", "Train one configuration");
    fs::path tr_config, tr_out;
    std::vector<std::string> tr_sets;
    tr->add_option("-c,--config", tr_config, "Run config JSON")->required();
    tr->add_option("-o,--out", tr_out, "Run directory")->required();
    tr->add_option("--set", tr_sets, "Override /pointer=value");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    fs::path ev_ckpt, ev_config;
    std::string ev_split = "validation";
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
    ev->add_option("-c,--config", ev_config, "Run config whose data section replaces the checkpoint's");
    ev->add_option("--split", ev_split, "train or validation");

    // attnmap
    auto* am = app.add_subcommand("attnmap", "Render the attention map of one image");
    fs::path am_ckpt, am_out, am_image;
    std::string am_split = "validation", am_crop;
    std::size_t am_index = 0;
    double am_threshold = ips::kDefaultMapThreshold;
    am->add_option("--checkpoint", am_ckpt, "Checkpoint file")->required();
    am->add_option("-o,--out", am_out, "Output PNG (a .json sidecar is written next to it)")->required();
    am->add_option("--image", am_image, "Image file instead of a dataset sample");
    am->add_option("--index", am_index, "Sample index in the split");
    am->add_option("--split", am_split, "train or validation");
    am->add_option("--threshold", am_threshold, "Draw patches with normalized attention above this");
    am->add_option("--crop", am_crop, "Crop window y,x,height,width");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run every configuration of an experiment spec");
    fs::path sw_spec, sw_out;
    std::vector<std::string> sw_sets;
    bool sw_dummy = false, sw_list = false;
    sw->add_option("-s,--spec", sw_spec, "Experiment spec JSON")->required();
    sw->add_option("-o,--out", sw_out, "Sweep root directory");
    sw->add_option("--set", sw_sets, "Override /pointer=value in the base config");
    sw->add_flag("--dummy", sw_dummy, "Write constant metrics instead of training");
    sw->add_flag("--list", sw_list, "Print run ids and exit");

    // report
    auto* rep = app.add_subcommand("report", "Aggregate a sweep into mean and std tables");
    fs::path rep_spec, rep_out;
    rep->add_option("-s,--spec", rep_spec, "Experiment spec JSON (defaults to <out>/experiment.json)");
    rep->add_option("-o,--out", rep_out, "Sweep root directory")->required();

    // glyphs
    auto* gl = app.add_subcommand("glyphs", "Export a bank of noise glyphs");
    fs::path gl_out;
    int gl_count = 100, gl_size = ips::bench::kMnistSide;
    double gl_thickness = ips::noise::kDefaultThickness;
    std::uint64_t gl_seed = 0;
    gl->add_option("-o,--out", gl_out, "Output directory")->required();
    gl->add_option("--count", gl_count, "Number of glyphs");
    gl->add_option("--thickness", gl_thickness, "Stroke thickness");
    gl->add_option("--size", gl_size, "Glyph side in pixels");
    gl->add_option("--seed", gl_seed, "Seed");

    // sts-ingest
    auto* si = app.add_subcommand("sts-ingest", "Build a manifest of the traffic-sign speed-limit subset");
    fs::path si_root, si_out;
    si->add_option("--root", si_root, "Dataset root")->required();
    si->add_option("-o,--out", si_out, "Manifest JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            json doc = read_json(gen_config);
            apply_overrides(doc, gen_sets);
            auto config = ips::bench::dataset_config_from_json(doc);
            config.split = ips::bench::split_from_string(gen_split);
            config.validate();
            if (gen_mnist.empty()) {
                throw std::invalid_argument("--mnist-dir not given and IPS_DATA_ROOT is not set");
            }
            const ips::bench::GlyphBankRef ref{gen_mnist, ips::bench::default_bank_split(config.split)};
            const auto bank = ips::bench::load_mnist(ref.dir, ref.split);
            const auto manifest = ips::bench::generate_dataset(config, ref, bank, gen_out);
            for (int i = 0; i < std::min(gen_render, config.n_samples); ++i) {
                const auto sample = ips::bench::generate_sample(config, bank, static_cast<std::uint64_t>(i));
                ips::write_png(gen_out / "canvases" / (std::to_string(i) + ".png"),
                               ips::bench::rasterize_canvas(sample, config, bank));
            }
            std::cout << manifest.at("resolved").dump() << '\n';
            return 0;
        }
        if (*tr) {
            check_device();
            json doc = read_json(tr_config);
            apply_overrides(doc, tr_sets);
            const auto config = ips::run_config_from_json(doc);
            const auto columns = ips::metrics_columns(ips::task_heads(config));
            ips::train(config, tr_out, [&](const ips::EpochMetrics& m) {
                std::cout << "epoch " << m.epoch << " loss " << m.train_loss << " lr " << m.lr;
                for (std::size_t t = 0; t < m.train_accuracy.size(); ++t) {
                    std::cout << ' ' << columns[3 + t] << ' ' << m.train_accuracy[t];
                }
                if (!m.val_accuracy.empty()) {
                    std::cout << " val_acc " << m.val_accuracy.front();
                }
                std::cout << " ms/batch " << m.ms_per_batch << std::endl;
            });
            return 0;
        }
        if (*ev) {
            check_device();
            auto [config, model] = ips::load_trained_model(ev_ckpt);
            if (!ev_config.empty()) {
                config.data = ips::load_run_config(ev_config).data;
            }
            const auto data = ips::make_datasets(config);
            const auto* source = ev_split == "train" ? data.train.get() : data.validation.get();
            if (!source) {
                throw std::invalid_argument("split '" + ev_split + "' is empty for this config");
            }
            print_eval(source->tasks(), ips::evaluate(model, *source, config.train.batch_size));
            return 0;
        }
        if (*am) {
            check_device();
            auto [config, model] = ips::load_trained_model(am_ckpt);
            ips::Image image;
            std::string name;
            if (!am_image.empty()) {
                image = ips::read_rgb(am_image);
                name = am_image.string();
            } else {
                const auto data = ips::make_datasets(config);
                const auto* source = am_split == "train" ? data.train.get() : data.validation.get();
                if (!source || am_index >= source->size()) {
                    throw std::invalid_argument("sample index out of range");
                }
                image = source->image(am_index);
                name = am_split + "/" + std::to_string(am_index);
            }
            const auto map = ips::build_map(model, image, name);
            ips::export_map(am_out, map, image, am_threshold, parse_crop(am_crop));
            std::cout << ips::visible_entries(map, am_threshold).size() << " of " << map.entries.size()
                      << " patches drawn\n";
            return 0;
        }
        if (*sw) {
            json doc = read_json(sw_spec);
            if (!sw_sets.empty()) {
                json base = doc.value("base", json::object());
                apply_overrides(base, sw_sets);
                doc["base"] = base;
            }
            const auto spec = ips::exp::experiment_from_json(doc);
            if (sw_list) {
                for (const auto& run : ips::exp::expand(spec)) std::cout << run.id << '\n';
                return 0;
            }
            if (sw_out.empty()) {
                throw std::invalid_argument("--out is required unless --list is given");
            }
            const std::string self = fs::read_symlink("/proc/self/exe").string();
            ips::exp::RunLauncher launch = [&](const ips::exp::RunSpec& run, const fs::path& dir) {
                if (sw_dummy) {
                    return ips::exp::dummy_run(run, dir);
                }
                const std::string cmd = shell_quote(self) + " train --config " + shell_quote((dir / "config.json").string()) +
                                        " --out " + shell_quote(dir.string()) + " > " +
                                        shell_quote((dir / "train.log").string()) + " 2>&1";
                return std::system(cmd.c_str());
            };
            const auto report = ips::exp::run_sweep(spec, sw_out, launch, &std::cout);
            std::cout << report.completed.size() << " completed, " << report.skipped.size() << " skipped, "
                      << report.failed.size() << " failed\n";
            const auto agg = ips::exp::aggregate(spec, sw_out);
            write_text(sw_out / "aggregate.md", ips::exp::to_markdown(agg));
            write_text(sw_out / "aggregate.csv", ips::exp::to_csv(agg));
            return report.failed.empty() ? 0 : 1;
        }
        if (*rep) {
            const auto spec = ips::exp::load_experiment(rep_spec.empty() ? rep_out / "experiment.json" : rep_spec);
            const auto agg = ips::exp::aggregate(spec, rep_out);
            const auto md = ips::exp::to_markdown(agg);
            write_text(rep_out / "aggregate.md", md);
            write_text(rep_out / "aggregate.csv", ips::exp::to_csv(agg));
            for (const auto& w : agg.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << md;
            return 0;
        }
        if (*gl) {
            ips::noise::export_glyph_bank(gl_out, gl_count, gl_thickness, gl_size, gl_seed);
            std::cout << gl_count << " glyphs written to " << gl_out.string() << '\n';
            return 0;
        }
        if (*si) {
            const auto dataset = ips::sts::ingest_sts(si_root);
            write_text(si_out, ips::sts::to_manifest(dataset).dump(2) + "\n");
            std::cout << "train " << dataset.train.records.size() << " (excluded " << dataset.train.excluded.size()
                      << "), validation " << dataset.validation.records.size() << " (excluded "
                      << dataset.validation.excluded.size() << ")\n";
            for (const auto& w : dataset.train.warnings) std::cerr << "warning: " << w << '\n';
            for (const auto& w : dataset.validation.warnings) std::cerr << "warning: " << w << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
