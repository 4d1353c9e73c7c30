#pragma once

// Experiment grids: a base run config, one or more swept axes (each a JSON
// pointer into the run config plus its values) and a seed list. Expansion is
// the cartesian product axes x seeds, in declaration order.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ips::exp {

inline constexpr const char* kDefaultSeedPointer = "/train/seed";

struct Axis {
    std::string name;
    std::string pointer;
    std::vector<nlohmann::json> values;
};

struct ExperimentSpec {
    std::string name;
    std::string description;
    nlohmann::json base;  // partial run config; defaults fill the rest
    std::vector<Axis> axes;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::string> seed_pointers{kDefaultSeedPointer};  // each receives the run seed
};

ExperimentSpec experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec load_experiment(const std::filesystem::path& path);

struct RunSpec {
    std::string id;
    std::vector<std::pair<std::string, nlohmann::json>> axis_values;
    std::uint64_t seed = 0;
    nlohmann::json config;  // fully resolved
};

/// Every run config is validated; pointers must name existing fields.
std::vector<RunSpec> expand(const ExperimentSpec& spec);

/// Run id such as "noise_thickness=1.4/seed=0".
std::string run_id(const std::vector<std::pair<std::string, nlohmann::json>>& axis_values, std::uint64_t seed);

std::string format_value(const nlohmann::json& v);

/// Launches one run; returns its exit status.
using RunLauncher = std::function<int(const RunSpec& run, const std::filesystem::path& run_dir)>;

struct SweepReport {
    std::vector<std::string> completed;
    std::vector<std::string> skipped;  // already complete, resumed past
    std::vector<std::string> failed;
};

/// Runs each expanded configuration into <out_dir>/<run id>. A run whose
/// summary.json reports status "complete" is skipped.
SweepReport run_sweep(const ExperimentSpec& spec, const std::filesystem::path& out_dir, const RunLauncher& launch,
                      std::ostream* log = nullptr);

bool run_complete(const std::filesystem::path& run_dir);

/// Writes a metrics.csv and summary.json with constant values, standing in for
/// training when only the sweep structure is under test.
int dummy_run(const RunSpec& run, const std::filesystem::path& run_dir);

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // NaN for blank cells
};

/// Parses a metrics.csv; comment lines start with '#'. Throws on malformed input.
MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct AggregateRow {
    std::vector<std::pair<std::string, nlohmann::json>> axis_values;
    std::size_t runs = 0;
    std::map<std::string, double> mean;
    std::map<std::string, double> stddev;  // sample std (n - 1); 0 for one run
};

struct Aggregate {
    std::string name;
    std::vector<std::string> metrics;
    std::vector<AggregateRow> rows;
    std::vector<std::string> warnings;
};

/// Mean and standard deviation over seeds of each metric's final-epoch value,
/// one row per combination of axis values. Missing or corrupt run directories
/// are skipped with a warning.
Aggregate aggregate(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

std::string to_markdown(const Aggregate& agg);
std::string to_csv(const Aggregate& agg);

} // namespace ips::exp
