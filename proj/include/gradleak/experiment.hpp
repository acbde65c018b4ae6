#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "gradleak/attack.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/patterns.hpp"

namespace gradleak {

struct DataSourceConfig {
    enum class Source { builtin, directory };
    Source source = Source::builtin;
    PatternKind kind = PatternKind::mixed;
    int64_t size = 8;
    int64_t per_class = 4;
    std::filesystem::path directory;  // directory mode
};

struct ExperimentConfig {
    ModelSpec model;
    DataSourceConfig data;
    int64_t batch_size = 1;

    // grid axes; each cell is (distance, init, epochs)
    std::vector<DistanceKind> distances;
    std::vector<WeightInit> inits;
    std::vector<int64_t> epochs;

    double train_lr = 0.01;
    AttackConfig attack;  // distance kind and seed are filled per cell
    int64_t repeat = 1;
    uint64_t master_seed = 0;
    std::filesystem::path out_dir = "out";
    int threads = 1;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunOutcome {
    std::string run_id;   // "<cell>/r<k>"
    std::string cell_id;
    DistanceKind distance = DistanceKind::sapag;
    std::string init_scheme;
    int64_t epochs = 0;
    MetricReport metrics;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

struct ExperimentResult {
    std::vector<RunOutcome> runs;  // grid-major, repeat-minor order
    int exit_code = 0;             // 0 ok, 2 if any run aborted
};

/// Runs the full grid, writing per-run artifacts under
/// out/<cell>/<repeat>/ and the aggregate summary.csv / metrics.csv.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

nlohmann::json attack_config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j);

}  // namespace gradleak
