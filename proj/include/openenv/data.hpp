#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace openenv {

enum class ColumnKind { numeric, categorical };
enum class TaskType { binary, multiclass, regression };
enum class SplitTag { train, id_test, ood_test };

std::string to_string(TaskType task);
std::string to_string(SplitTag tag);
TaskType parse_task(std::string_view text);
SplitTag parse_split(std::string_view text);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    // Categorical columns: levels[code] is the original string value.
    std::vector<std::string> levels;

    bool operator==(const ColumnSpec&) const = default;
};

struct DatasetSchema {
    std::vector<ColumnSpec> features;
    // For classification tasks target.levels holds the class names, indexed by class code.
    ColumnSpec target;
    TaskType task = TaskType::regression;
    std::optional<std::string> id_column;
    std::optional<std::string> split_column;

    bool is_classification() const { return task != TaskType::regression; }
    std::size_t num_classes() const { return target.levels.size(); }
    std::size_t num_features() const { return features.size(); }

    std::optional<std::size_t> find_feature(std::string_view name) const;
    // Throws DataError naming the column when absent.
    std::size_t feature_index(std::string_view name) const;
    std::vector<std::string> feature_names() const;

    // Throws DataError on duplicate names, target listed as feature, or task/target mismatch.
    void validate() const;

    bool operator==(const DatasetSchema&) const = default;
};

// Feature names and kinds agree, in order. Level dictionaries are not compared.
bool same_features(const DatasetSchema& a, const DatasetSchema& b);

/// A tabular dataset.
///
/// Numeric features are stored as reals and categorical features as their
/// integer codes; missing cells are NaN. Classification targets are class
/// codes (indices into schema.target.levels), regression targets are values.
/// Rows keep input order unless an operation documents otherwise.
struct Dataset {
    DatasetSchema schema;
    Eigen::MatrixXd features;
    std::vector<double> targets;
    std::vector<std::string> sample_ids;
    // Either empty (no split column) or one tag per row.
    std::vector<SplitTag> splits;

    std::size_t size() const { return targets.size(); }
    bool empty() const { return targets.empty(); }
    bool has_splits() const { return !splits.empty(); }

    // Class codes; throws ConfigError for regression datasets.
    std::vector<int> labels() const;
    // Rows in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
    // Rows whose split tag equals `tag`, in input order.
    Dataset split_part(SplitTag tag) const;
    // Throws DataError when row/target/id counts disagree or codes fall outside their dictionaries.
    void check() const;
};

struct SchemaHints {
    std::optional<std::string> target;
    std::optional<TaskType> task;
    std::optional<std::string> id_column;
    std::optional<std::string> split_column;
    std::vector<std::string> categorical;
    char delimiter = ',';
};

// Key-value file: one `key = value` per line, `#` comments. Keys: target, task,
// id_column, split_column, categorical (comma list), delimiter.
SchemaHints read_hints(const std::filesystem::path& path);
void write_hints(const SchemaHints& hints, const std::filesystem::path& path);
// Hints that make load_table reproduce `schema` exactly.
SchemaHints hints_for(const DatasetSchema& schema);

// Empty strings, "NA" and "?" are missing.
bool is_missing_token(std::string_view token);

/// Loads a delimited text table with a mandatory header row.
///
/// A column is categorical when hinted or when any non-missing value fails
/// numeric parsing. Without hints the last column is the target and the task
/// is inferred: at most 2 distinct values is binary, at most 10 integer-coded
/// (or non-numeric) values is multiclass, anything else is regression.
Dataset load_table(const std::filesystem::path& path, const SchemaHints& hints = {});

// Loads three files sharing one header as a single dataset tagged train/id_test/ood_test,
// so categorical codes are consistent across the parts.
Dataset load_split_tables(const std::filesystem::path& train, const std::filesystem::path& id_test,
                          const std::filesystem::path& ood_test, SchemaHints hints = {});

// Writes features, target, then id and split columns when the schema names them.
// Numeric values use round-trip precision.
void write_table(const Dataset& ds, const std::filesystem::path& path, char delimiter = ',');

struct ColumnStats {
    double mean = 0.0;
    double stddev = 1.0;
    bool constant = false;
    int mode = 0;  // categorical columns only
};

// Per-column train statistics: population mean/stddev for numeric columns,
// mode code for categorical ones.
struct Standardizer {
    DatasetSchema schema;
    std::vector<ColumnStats> columns;
};

Standardizer fit_standardizer(const Dataset& train);
// Numeric columns become (x - mean) / stddev; categorical columns are unchanged.
Dataset apply_standardizer(const Standardizer& s, const Dataset& ds);

struct ImputeModel {
    Standardizer stats;
};

ImputeModel fit_imputer(const Dataset& train);
// Overwrites every row of the named columns with the train mean (numeric) or mode (categorical).
Dataset impute(const ImputeModel& model, const Dataset& ds, std::span<const std::string> missing_columns);
// Replaces only missing (NaN) cells, using the same statistics.
Dataset fill_missing(const ImputeModel& model, const Dataset& ds);

enum class StrataMode { class_and_split, class_only, split_only };

// Stratum index per row; the second member is the number of strata.
std::pair<std::vector<std::size_t>, std::size_t> strata_of(const Dataset& ds, StrataMode mode);

// Largest-remainder apportionment of `total` over groups proportional to `sizes`.
// Ties in the fractional part go to the earlier group. Never exceeds a group's size.
std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t total);

// Seeded stratified sample without replacement of exactly `cap` rows (input order kept).
// Returns `ds` unchanged when ds.size() <= cap.
Dataset stratified_subsample(const Dataset& ds, std::size_t cap, std::uint64_t seed,
                             StrataMode mode = StrataMode::class_and_split);

// Disjoint, exhaustive (train, test) partition; each part keeps input order.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double test_fraction, std::uint64_t seed,
                                          bool stratify);

}  // namespace openenv
