#include "ips/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ips/config.hpp"

namespace ips::exp {

using nlohmann::json;

ExperimentSpec experiment_from_json(const json& j) {
    for (const auto& [key, _] : j.items()) {
        static const std::set<std::string> known{"name", "description", "base", "axes", "seeds", "seed_pointer"};
        if (!known.contains(key)) {
            throw std::invalid_argument("experiment: unknown key '" + key + "'");
        }
    }
    ExperimentSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.description = j.value("description", std::string{});
    spec.base = j.value("base", json::object());
    for (const auto& a : j.value("axes", json::array())) {
        Axis axis{a.at("name").get<std::string>(), a.at("pointer").get<std::string>(), {}};
        for (const auto& v : a.at("values")) {
            axis.values.push_back(v);
        }
        if (axis.values.empty()) {
            throw std::invalid_argument("experiment: axis '" + axis.name + "' has no values");
        }
        spec.axes.push_back(std::move(axis));
    }
    if (j.contains("seeds")) {
        spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
    if (spec.seeds.empty()) {
        throw std::invalid_argument("experiment: seed list is empty");
    }
    if (j.contains("seed_pointer")) {
        const auto& sp = j["seed_pointer"];
        spec.seed_pointers = sp.is_array() ? sp.get<std::vector<std::string>>()
                                           : std::vector<std::string>{sp.get<std::string>()};
    }
    return spec;
}

json to_json(const ExperimentSpec& spec) {
    json axes = json::array();
    for (const auto& a : spec.axes) {
        axes.push_back({{"name", a.name}, {"pointer", a.pointer}, {"values", a.values}});
    }
    return {{"name", spec.name},         {"description", spec.description}, {"base", spec.base},
            {"axes", axes},              {"seeds", spec.seeds},             {"seed_pointer", spec.seed_pointers}};
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open experiment spec");
    }
    try {
        return experiment_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

std::string format_value(const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string run_id(const std::vector<std::pair<std::string, json>>& axis_values, std::uint64_t seed) {
    std::string id;
    for (const auto& [name, value] : axis_values) {
        id += name + "=" + format_value(value) + "/";
    }
    return id + "seed=" + std::to_string(seed);
}

std::vector<RunSpec> expand(const ExperimentSpec& spec) {
    const json resolved_base = ips::to_json(run_config_from_json(spec.base));
    for (const auto& axis : spec.axes) {
        if (!resolved_base.contains(json::json_pointer(axis.pointer))) {
            throw std::invalid_argument("experiment: axis pointer '" + axis.pointer + "' names no config field");
        }
    }
    for (const auto& pointer : spec.seed_pointers) {
        if (!resolved_base.contains(json::json_pointer(pointer))) {
            throw std::invalid_argument("experiment: seed pointer '" + pointer + "' names no config field");
        }
    }

    std::vector<RunSpec> runs;
    std::vector<std::size_t> pick(spec.axes.size(), 0);
    while (true) {
        for (auto seed : spec.seeds) {
            RunSpec run;
            // Values go into the partial base so fields that default from
            // others (stride from patch size, noise count from digit size)
            // keep following them.
            json doc = spec.base;
            for (std::size_t a = 0; a < spec.axes.size(); ++a) {
                const auto& value = spec.axes[a].values[pick[a]];
                doc[json::json_pointer(spec.axes[a].pointer)] = value;
                run.axis_values.emplace_back(spec.axes[a].name, value);
            }
            for (const auto& pointer : spec.seed_pointers) {
                doc[json::json_pointer(pointer)] = seed;
            }
            run.seed = seed;
            run.id = run_id(run.axis_values, seed);
            try {
                run.config = ips::to_json(run_config_from_json(doc));
            } catch (const std::exception& e) {
                throw std::invalid_argument("experiment run '" + run.id + "': " + e.what());
            }
            runs.push_back(std::move(run));
        }
        std::size_t a = spec.axes.size();
        while (a > 0) {
            --a;
            if (++pick[a] < spec.axes[a].values.size()) {
                break;
            }
            pick[a] = 0;
            if (a == 0) {
                return runs;
            }
        }
        if (spec.axes.empty()) {
            return runs;
        }
    }
}

bool run_complete(const std::filesystem::path& run_dir) {
    std::ifstream in(run_dir / "summary.json");
    if (!in) {
        return false;
    }
    const json summary = json::parse(in, nullptr, false);
    return !summary.is_discarded() && summary.is_object() && summary.value("status", "") == "complete";
}

SweepReport run_sweep(const ExperimentSpec& spec, const std::filesystem::path& out_dir, const RunLauncher& launch,
                      std::ostream* log) {
    SweepReport report;
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "experiment.json");
        out << to_json(spec).dump(2) << '\n';
    }
    for (const auto& run : expand(spec)) {
        const auto dir = out_dir / run.id;
        if (run_complete(dir)) {
            report.skipped.push_back(run.id);
            if (log) *log << "skip " << run.id << " (complete)\n";
            continue;
        }
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "config.json");
            out << run.config.dump(2) << '\n';
        }
        if (log) *log << "run  " << run.id << '\n' << std::flush;
        const int status = launch(run, dir);
        if (status == 0 && run_complete(dir)) {
            report.completed.push_back(run.id);
        } else {
            report.failed.push_back(run.id);
            if (log) *log << "fail " << run.id << " (exit " << status << ")\n";
        }
    }
    return report;
}

int dummy_run(const RunSpec& run, const std::filesystem::path& run_dir) {
    const RunConfig config = run_config_from_json(run.config);
    std::vector<std::string> tasks;
    if (config.data.kind == DataKind::sts) {
        tasks.push_back("sign");
    } else {
        for (auto t : config.data.train.tasks) tasks.push_back(bench::to_string(t));
    }
    std::filesystem::create_directories(run_dir);
    std::ofstream csv(run_dir / "metrics.csv");
    csv << "# config=" << run.config.dump() << '\n' << "epoch,lr,train_loss";
    for (const auto& t : tasks) csv << ",train_acc_" << t;
    csv << ",val_loss";
    for (const auto& t : tasks) csv << ",val_acc_" << t;
    csv << ",ms_per_batch,peak_memory_bytes\n";
    for (int epoch = 1; epoch <= config.train.epochs; ++epoch) {
        csv << epoch << ",0.001,0.5";
        for (std::size_t i = 0; i < tasks.size(); ++i) csv << ",50";
        csv << ",0.5";
        for (std::size_t i = 0; i < tasks.size(); ++i) csv << ",50";
        csv << ",1,0\n";
    }
    std::ofstream summary(run_dir / "summary.json");
    summary << json{{"status", "complete"}, {"config", run.config}, {"dummy", true}}.dump(2) << '\n';
    return 0;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open");
    }
    MetricsTable table;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (header) {
            table.columns = cells;
            header = false;
            continue;
        }
        if (cells.size() != table.columns.size()) {
            throw std::runtime_error(path.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(table.columns.size()));
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            if (c.empty()) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            std::size_t used = 0;
            const double v = std::stod(c, &used);
            if (used != c.size()) {
                throw std::runtime_error(path.string() + ": non-numeric cell '" + c + "'");
            }
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (table.columns.empty()) {
        throw std::runtime_error(path.string() + ": no header");
    }
    return table;
}

Aggregate aggregate(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
    Aggregate agg;
    agg.name = spec.name;
    const auto runs = expand(spec);
    std::map<std::string, std::size_t> group_of;
    std::vector<std::map<std::string, std::vector<double>>> samples;

    for (const auto& run : runs) {
        std::string key;
        for (const auto& [name, value] : run.axis_values) key += name + "=" + format_value(value) + ";";
        if (!group_of.contains(key)) {
            group_of[key] = agg.rows.size();
            agg.rows.push_back({run.axis_values, 0, {}, {}});
            samples.emplace_back();
        }
        const auto dir = out_dir / run.id;
        if (!run_complete(dir)) {
            agg.warnings.push_back(run.id + ": missing or incomplete run, skipped");
            continue;
        }
        MetricsTable table;
        try {
            table = read_metrics_csv(dir / "metrics.csv");
            if (table.rows.empty()) throw std::runtime_error("no epochs recorded");
        } catch (const std::exception& e) {
            agg.warnings.push_back(run.id + ": corrupt metrics (" + std::string(e.what()) + "), skipped");
            continue;
        }
        const auto g = group_of[key];
        ++agg.rows[g].runs;
        const auto& last = table.rows.back();
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto& col = table.columns[c];
            if (col == "epoch") continue;
            if (std::find(agg.metrics.begin(), agg.metrics.end(), col) == agg.metrics.end()) {
                agg.metrics.push_back(col);
            }
            if (!std::isnan(last[c])) samples[g][col].push_back(last[c]);
        }
    }
    for (std::size_t g = 0; g < agg.rows.size(); ++g) {
        for (const auto& [col, values] : samples[g]) {
            const double n = static_cast<double>(values.size());
            const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            agg.rows[g].mean[col] = mean;
            agg.rows[g].stddev[col] = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        }
    }
    return agg;
}

namespace {

std::vector<std::string> reported_metrics(const Aggregate& agg) {
    std::vector<std::string> out;
    for (const auto& m : agg.metrics) {
        if (m.rfind("val_acc_", 0) == 0 || m == "val_loss" || m.rfind("train_acc_", 0) == 0 || m == "ms_per_batch" ||
            m == "peak_memory_bytes") {
            out.push_back(m);
        }
    }
    return out;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

std::string to_markdown(const Aggregate& agg) {
    const auto metrics = reported_metrics(agg);
    std::ostringstream os;
    os << "## " << agg.name << "\n\n|";
    if (!agg.rows.empty()) {
        for (const auto& [name, _] : agg.rows.front().axis_values) os << ' ' << name << " |";
    }
    os << " runs |";
    for (const auto& m : metrics) os << ' ' << m << " |";
    os << "\n|";
    const std::size_t n_axes = agg.rows.empty() ? 0 : agg.rows.front().axis_values.size();
    for (std::size_t i = 0; i < n_axes + 1 + metrics.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& row : agg.rows) {
        os << '|';
        for (const auto& [_, value] : row.axis_values) os << ' ' << format_value(value) << " |";
        os << ' ' << row.runs << " |";
        for (const auto& m : metrics) {
            if (!row.mean.contains(m)) {
                os << " - |";
                continue;
            }
            const int digits = m == "peak_memory_bytes" ? 0 : (m.find("loss") != std::string::npos ? 3 : 1);
            os << ' ' << fixed(row.mean.at(m), digits) << " ± " << fixed(row.stddev.at(m), digits) << " |";
        }
        os << '\n';
    }
    for (const auto& w : agg.warnings) os << "\nwarning: " << w;
    if (!agg.warnings.empty()) os << '\n';
    return os.str();
}

std::string to_csv(const Aggregate& agg) {
    std::ostringstream os;
    os << std::setprecision(10);
    const std::size_t n_axes = agg.rows.empty() ? 0 : agg.rows.front().axis_values.size();
    if (n_axes) {
        for (const auto& [name, _] : agg.rows.front().axis_values) os << name << ',';
    }
    os << "runs";
    for (const auto& m : agg.metrics) os << ',' << m << "_mean," << m << "_std";
    os << '\n';
    for (const auto& row : agg.rows) {
        for (const auto& [_, value] : row.axis_values) os << format_value(value) << ',';
        os << row.runs;
        for (const auto& m : agg.metrics) {
            if (row.mean.contains(m)) os << ',' << row.mean.at(m) << ',' << row.stddev.at(m);
            else os << ",,";
        }
        os << '\n';
    }
    return os.str();
}

} // namespace ips::exp
