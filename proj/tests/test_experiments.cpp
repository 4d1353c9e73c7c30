#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ips/benchgen.hpp"
#include "ips/config.hpp"
#include "ips/experiments.hpp"
#include "support.hpp"

using namespace ips;
using nlohmann::json;

#ifndef IPS_SOURCE_DIR
#error "IPS_SOURCE_DIR must point at the repository root"
#endif

namespace {

const std::filesystem::path kRoot = IPS_SOURCE_DIR;

std::vector<std::string> golden(const std::string& name) {
    std::ifstream in(kRoot / "tests" / "golden" / (name + ".txt"));
    REQUIRE(in.good());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

exp::ExperimentSpec shipped(const std::string& name) {
    return exp::load_experiment(kRoot / "experiments" / (name + ".json"));
}

std::vector<std::string> ids(const std::vector<exp::RunSpec>& runs) {
    std::vector<std::string> out;
    for (const auto& r : runs) out.push_back(r.id);
    return out;
}

} // namespace

TEST_CASE("shipped specs expand to the golden run lists") {
    for (const char* name : {"o2i_grid", "noise_thickness", "noise_amount", "mnist_patch_size", "digit_resolution",
                             "sts_fraction", "sts_patch_size"}) {
        CAPTURE(name);
        CHECK(ids(exp::expand(shipped(name))) == golden(name));
    }
}

TEST_CASE("runs differ from the base only in swept fields and seed") {
    for (const char* name : {"o2i_grid", "noise_thickness", "noise_amount", "mnist_patch_size", "sts_fraction",
                             "sts_patch_size"}) {
        CAPTURE(name);
        const auto spec = shipped(name);
        const json base = to_json(run_config_from_json(spec.base));
        std::set<std::string> allowed(spec.seed_pointers.begin(), spec.seed_pointers.end());
        for (const auto& a : spec.axes) allowed.insert(a.pointer);
        // Stride defaults to the patch size, so it moves with it.
        if (allowed.contains("/model/patch_size")) allowed.insert("/model/stride");
        for (const auto& run : exp::expand(spec)) {
            for (const auto& op : json::diff(base, run.config)) {
                CAPTURE(run.id);
                CHECK(allowed.contains(op.at("path").get<std::string>()));
            }
        }
    }
}

TEST_CASE("O2I grid resolves the paper's ratios and noise counts") {
    const auto runs = exp::expand(shipped("o2i_grid"));
    std::map<int, std::pair<double, int>> seen;
    for (const auto& run : runs) {
        const auto c = run_config_from_json(run.config);
        seen[c.data.train.digit_size] = {bench::o2i_ratio(c.data.train.digit_size, c.data.train.canvas_size),
                                         c.data.train.resolved_noise_count()};
        CHECK(c.data.train.canvas_size == 3000);
    }
    REQUIRE(seen.size() == 4);
    // Reported to the paper's precision, within one unit of the last digit.
    CHECK(std::abs(seen[28].first - 0.01) <= 0.01);
    CHECK(std::abs(seen[56].first - 0.034) <= 0.001);
    CHECK(std::abs(seen[84].first - 0.078) <= 0.001);
    CHECK(std::abs(seen[112].first - 0.13) <= 0.01);
    CHECK(seen[28].second == 800);
    CHECK(seen[56].second == 600);
    CHECK(seen[84].second == 400);
    CHECK(seen[112].second == 200);
}

TEST_CASE("spec validation") {
    json spec{{"name", "x"}, {"axes", {{{"name", "bad"}, {"pointer", "/model/nope"}, {"values", {1}}}}}};
    CHECK_THROWS_AS(exp::expand(exp::experiment_from_json(spec)), std::invalid_argument);
    spec["axes"][0]["pointer"] = "/model/patch_size";
    spec["axes"][0]["values"] = {50, 6000};
    CHECK_THROWS_AS(exp::expand(exp::experiment_from_json(spec)), std::invalid_argument);
    spec["seeds"] = json::array();
    CHECK_THROWS_AS(exp::experiment_from_json(spec), std::invalid_argument);
    CHECK_THROWS_AS(exp::experiment_from_json({{"name", "x"}, {"extra", 1}}), std::invalid_argument);
}

TEST_CASE("dummy sweep, resume and aggregation") {
    const auto dir = test::temp_dir("sweep");
    auto spec = shipped("noise_thickness");
    spec.base["train"]["epochs"] = 3;
    spec.base["train"]["warmup_epochs"] = 1;

    const auto first = exp::run_sweep(spec, dir, exp::dummy_run);
    CHECK(first.completed.size() == 21);
    CHECK(first.failed.empty());
    int run_dirs = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        run_dirs += e.is_regular_file() && e.path().filename() == "summary.json";
    }
    CHECK(run_dirs == 21);

    const auto agg = exp::aggregate(spec, dir);
    REQUIRE(agg.rows.size() == 7);
    CHECK(agg.warnings.empty());
    for (const auto& row : agg.rows) {
        CHECK(row.runs == 3);
        CHECK(row.mean.at("val_acc_maj") == doctest::Approx(50.0));
        CHECK(row.stddev.at("val_acc_maj") == 0.0);
    }
    const auto md = exp::to_markdown(agg);
    CHECK(md.find("| 1.4 | 3 |") != std::string::npos);

    // Second pass resumes past everything.
    const auto second = exp::run_sweep(spec, dir, [](const exp::RunSpec&, const std::filesystem::path&) {
        FAIL("completed run relaunched");
        return 1;
    });
    CHECK(second.skipped.size() == 21);

    // A corrupted run is skipped with a warning.
    std::ofstream(dir / "noise_thickness=2.0" / "seed=1" / "metrics.csv") << "epoch,val_acc_maj\n1,abc\n";
    const auto damaged = exp::aggregate(spec, dir);
    REQUIRE(damaged.warnings.size() == 1);
    CHECK(damaged.warnings[0].find("noise_thickness=2.0/seed=1") == 0);
    for (const auto& row : damaged.rows) {
        CHECK(row.runs == (exp::format_value(row.axis_values[0].second) == "2.0" ? 2u : 3u));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("aggregates are recomputable from the per-run CSVs") {
    const auto dir = test::temp_dir("sweep_stats");
    json spec_json{{"name", "stats"},
                   {"base", {{"train", {{"epochs", 2}, {"warmup_epochs", 1}}}}},
                   {"axes", {{{"name", "patch_size"}, {"pointer", "/model/patch_size"}, {"values", {25, 50}}}}},
                   {"seeds", {0, 1, 2, 3}}};
    const auto spec = exp::experiment_from_json(spec_json);
    auto launcher = [](const exp::RunSpec& run, const std::filesystem::path& run_dir) {
        const double v = 10.0 * static_cast<double>(run.seed * run.seed) + run.config["model"]["patch_size"].get<int>();
        std::ofstream csv(run_dir / "metrics.csv");
        csv << "# config=" << run.config.dump() << "\nepoch,val_acc_maj,val_loss\n1,0,9\n2," << v << ",\n";
        std::ofstream(run_dir / "summary.json") << json{{"status", "complete"}}.dump();
        return 0;
    };
    exp::run_sweep(spec, dir, launcher);
    const auto agg = exp::aggregate(spec, dir);
    REQUIRE(agg.rows.size() == 2);
    for (const auto& row : agg.rows) {
        const double p = row.axis_values[0].second.get<double>();
        std::vector<double> xs;
        for (int s = 0; s < 4; ++s) xs.push_back(10.0 * s * s + p);
        double mean = 0.0;
        for (double x : xs) mean += x / 4.0;
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean) / 3.0;
        CHECK(row.mean.at("val_acc_maj") == doctest::Approx(mean));
        CHECK(row.stddev.at("val_acc_maj") == doctest::Approx(std::sqrt(var)));
        CHECK_FALSE(row.mean.contains("val_loss"));
    }
    std::istringstream csv(exp::to_csv(agg));
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("patch_size,runs,val_acc_maj_mean,val_acc_maj_std", 0) == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("metrics CSV parsing") {
    const auto dir = test::temp_dir("csv");
    std::ofstream(dir / "m.csv") << "# comment\nepoch,a,b\n1,0.5,\n2,1e-3,4\n";
    const auto t = exp::read_metrics_csv(dir / "m.csv");
    CHECK(t.columns == std::vector<std::string>{"epoch", "a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(std::isnan(t.rows[0][2]));
    CHECK(t.rows[1][1] == doctest::Approx(1e-3));
    std::ofstream(dir / "bad.csv") << "epoch,a\n1,2,3\n";
    CHECK_THROWS(exp::read_metrics_csv(dir / "bad.csv"));
    std::filesystem::remove_all(dir);
}
