#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "openenv/data.hpp"
#include "openenv/metrics.hpp"
#include "openenv/models.hpp"
#include "openenv/report.hpp"
#include "openenv/shift.hpp"

namespace openenv {

struct RunConfig {
    // One table, or three (train, id_test, ood_test). A bare name is looked up as <name>.csv
    // in OPENENV_DATA_PATH and then the bundled data directory.
    std::vector<std::string> dataset;
    SchemaHints hints;
    // knn | logreg | mlp | external:<prediction-dir>
    std::vector<std::string> models{"knn"};
    // enc | df | inf | cdd | vlo
    std::vector<std::string> tasks{"enc"};
    bool export_dataset = false;
    std::uint64_t seed = 0;
    std::vector<double> levels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<std::size_t> n_new{1, 5, 10};
    std::size_t cap = 50000;
    std::vector<Objective> objectives{Objective::accuracy, Objective::balanced_accuracy, Objective::f1,
                                      Objective::roc_auc};
    std::filesystem::path output_dir = "results";
    double test_fraction = 0.2;
    double known_holdout_fraction = 0.2;

    std::size_t knn_k = 5;
    MlpConfig mlp;
    LogRegConfig logreg;
    NoveltyConfig novelty;
    OtddConfig otdd;
    DisdeConfig disde;

    // Throws ConfigError for unknown tasks/models, empty lists, out-of-range knobs.
    void validate() const;
};

// JSON with one key per RunConfig field. The run manifest embeds the same
// object under "config", and either form is accepted back.
std::string run_config_json(const RunConfig& cfg);
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Path for a dataset argument: existing files as given, otherwise a registered name.
std::filesystem::path resolve_dataset(const std::string& name_or_path);

// One scored (scenario, model, metric) triple.
struct ResultRecord {
    std::string task;
    std::string scenario;
    std::string model;
    std::string metric;
    double value = 0.0;
    // Ordered key/value provenance (seed, source, shift details, prediction origin).
    std::vector<std::pair<std::string, std::string>> provenance;

    // "scenario|model|metric", the trace stored in report cells.
    std::string key() const;
};

struct RunResult {
    std::vector<ReportTable> tables;
    std::vector<ResultRecord> records;
    // Model fits per "task/model".
    std::map<std::string, std::size_t> training_invocations;
};

// Executes every configured task for every model. Writes scenario exports when
// cfg.export_dataset is set and nothing else.
RunResult run_pipeline(const RunConfig& cfg);

/// run_pipeline plus the output files in cfg.output_dir: report.txt (plain
/// tables), report.json (structured tables), results.jsonl (one record per
/// line) and run_manifest.json (resolved config and run log).
RunResult run(const RunConfig& cfg);

// File stem under an external prediction directory for a scenario, e.g. "df_0.4".
std::string prediction_file_stem(std::string_view scenario);

}  // namespace openenv
