#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "openenv/data.hpp"

namespace openenv {

// ---------------------------------------------------------------------------
// Emerging new classes

/// One leave-one-class-out run.
///
/// `train` holds every class except `held_out_class`. `detection_test` is a
/// binary dataset (target "novel": 1 = held-out class, 0 = known class) with
/// exactly `n_novel` rows of each label; its known rows come from a stratified
/// holdout of the remaining classes that never enters `train`.
struct EncRun {
    int held_out_class = 0;
    Dataset train;
    Dataset detection_test;
    // Class code of each detection_test row in the source dataset.
    std::vector<int> original_class;
    std::size_t n_novel = 0;
    std::uint64_t seed = 0;
};

struct EncConfig {
    // Share of each remaining class reserved as the known-sample pool.
    double known_holdout_fraction = 0.2;
};

// One run per class, in class-code order. Requires a multiclass dataset with at least 3 classes.
std::vector<EncRun> enc_generate(const Dataset& ds, std::uint64_t seed, const EncConfig& cfg = {});

// ---------------------------------------------------------------------------
// Decremental / incremental features

enum class ShiftMode { decremental, incremental };

struct FeatureShiftSpec {
    double level = 0.0;
    // Decremental: imputed columns, in schema order.
    std::vector<std::string> removed;
    // Incremental: appended columns.
    std::vector<std::string> added;
    ShiftMode mode = ShiftMode::decremental;
    std::size_t n_new = 0;
    std::uint64_t seed = 0;
};

// ceil(level * m), robust to representation error in `level`.
std::size_t shifted_column_count(double level, std::size_t num_features);

/// Replaces ceil(level * m) randomly chosen feature columns of `test` with
/// train statistics, keeping the schema intact so a full-schema model can
/// still predict. For a fixed seed the chosen sets are nested across levels.
std::pair<Dataset, FeatureShiftSpec> decremental_shift(const Dataset& train, const Dataset& test, double level,
                                                       std::uint64_t seed);

// Appends `n_new` standard-normal numeric columns (new_feature_1, ...); existing columns are untouched.
Dataset incremental_shift(const Dataset& test, std::size_t n_new, std::uint64_t seed);

// Restricts `test` to the training feature columns, in training order.
Dataset align_features(const DatasetSchema& train_schema, const Dataset& test);

// ---------------------------------------------------------------------------
// Changing data distributions

struct CddScenario {
    Dataset train;
    Dataset id_test;
    Dataset ood_test;
    std::string provenance;
};

/// Caps the pooled size at `cap` with per-split quotas proportional to the
/// split sizes (largest remainder), stratified by class inside each split.
CddScenario cdd_prepare(const Dataset& train, const Dataset& id_test, const Dataset& ood_test, std::size_t cap,
                        std::uint64_t seed);

// Same, for one dataset carrying a split column.
CddScenario cdd_prepare(const Dataset& tagged, std::size_t cap, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Export and replay

/// Everything needed to rebuild a scenario from its source files.
///
/// df and inf first split the source with split_holdout(test_fraction, seed,
/// stratified for classification); the shift then uses derive_seed(seed, 1)
/// (df) or derive_seed(seed, 2) (inf).
struct ScenarioRecipe {
    std::string kind;  // enc | df | inf | cdd
    std::vector<std::string> sources;
    SchemaHints hints;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    double level = 0.0;
    std::size_t n_new = 0;
    std::string held_out_class;
    std::size_t cap = 50000;
    double known_holdout_fraction = 0.2;
};

std::uint64_t decremental_seed(std::uint64_t seed);
std::uint64_t incremental_seed(std::uint64_t seed);

// Loads the recipe's source(s); three sources are read as train/id_test/ood_test.
Dataset load_recipe_source(const ScenarioRecipe& recipe);
// (train, test) split used by the df and inf recipes.
std::pair<Dataset, Dataset> recipe_split(const ScenarioRecipe& recipe, const Dataset& source);

// Each overload writes one CSV per dataset part plus manifest.json into `dir`.
void export_scenario(const EncRun& run, const ScenarioRecipe& recipe, const std::filesystem::path& dir);
void export_scenario(const Dataset& train, const Dataset& shifted_test, const FeatureShiftSpec& spec,
                     const ScenarioRecipe& recipe, const std::filesystem::path& dir);
void export_scenario(const CddScenario& scenario, const ScenarioRecipe& recipe, const std::filesystem::path& dir);

// Runs the recipe end to end and exports the result.
void materialize(const ScenarioRecipe& recipe, const std::filesystem::path& dir);
ScenarioRecipe read_manifest(const std::filesystem::path& manifest);
// materialize(read_manifest(manifest), dir).
void replay_manifest(const std::filesystem::path& manifest, const std::filesystem::path& dir);

}  // namespace openenv
