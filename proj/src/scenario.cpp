#include "openenv/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "csv.hpp"
#include "openenv/error.hpp"
#include "openenv/random.hpp"

namespace openenv {

using nlohmann::json;

namespace {

std::string class_name(const DatasetSchema& schema, int code) {
    return schema.target.levels.at(static_cast<std::size_t>(code));
}

DatasetSchema novelty_schema(const DatasetSchema& source) {
    DatasetSchema s = source;
    s.target.name = "novel";
    s.target.kind = ColumnKind::categorical;
    s.target.levels = {"0", "1"};
    s.task = TaskType::binary;
    for (const auto& c : s.features) {
        if (c.name == s.target.name) s.target.name = "novel_";
    }
    return s;
}

}  // namespace

std::vector<EncRun> enc_generate(const Dataset& ds, std::uint64_t seed, const EncConfig& cfg) {
    if (ds.schema.task != TaskType::multiclass) {
        throw ConfigError("emerging-new-class runs need a multiclass dataset, got " + to_string(ds.schema.task));
    }
    const auto k = ds.schema.num_classes();
    if (k < 3) throw ConfigError("emerging-new-class runs need at least 3 classes");
    if (!(cfg.known_holdout_fraction > 0.0 && cfg.known_holdout_fraction < 1.0)) {
        throw ConfigError("known holdout fraction must lie in (0, 1)");
    }
    const auto labels = ds.labels();
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    for (std::size_t c = 0; c < k; ++c) {
        if (by_class[c].size() < 2) {
            throw DataError("class '" + ds.schema.target.levels[c] + "' has " + std::to_string(by_class[c].size()) +
                            " samples; at least 2 are needed for training and detection membership");
        }
    }

    std::vector<EncRun> runs;
    runs.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        EncRun run;
        run.held_out_class = static_cast<int>(c);
        run.seed = derive_seed(seed, c);
        Rng rng(run.seed);

        // Stratified known-sample pool from the remaining classes.
        std::vector<std::size_t> sizes;
        std::vector<std::size_t> others;
        for (std::size_t d = 0; d < k; ++d) {
            if (d == c) continue;
            others.push_back(d);
            sizes.push_back(by_class[d].size());
        }
        const std::size_t rest = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
        const auto pool_total = static_cast<std::size_t>(
            std::llround(cfg.known_holdout_fraction * static_cast<double>(rest)));
        const auto quota = apportion(sizes, pool_total);
        std::vector<std::size_t> train_rows, pool;
        for (std::size_t g = 0; g < others.size(); ++g) {
            auto shuffled = sample_without_replacement(by_class[others[g]], by_class[others[g]].size(), rng);
            if (quota[g] >= shuffled.size()) {
                throw DataError("class '" + ds.schema.target.levels[others[g]] +
                                "' has too few samples to appear in both the training set and the known pool");
            }
            pool.insert(pool.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(quota[g]));
            train_rows.insert(train_rows.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(quota[g]),
                              shuffled.end());
        }
        if (pool.empty()) {
            throw DataError("no known samples available for the run holding out class '" +
                            ds.schema.target.levels[c] + "'");
        }
        std::sort(pool.begin(), pool.end());
        std::sort(train_rows.begin(), train_rows.end());

        run.n_novel = std::min(by_class[c].size(), pool.size());
        auto novel = sample_without_replacement(by_class[c], run.n_novel, rng);
        auto known = sample_without_replacement(pool, run.n_novel, rng);
        std::vector<std::size_t> test_rows = novel;
        test_rows.insert(test_rows.end(), known.begin(), known.end());
        std::sort(test_rows.begin(), test_rows.end());

        run.train = ds.subset(train_rows);
        Dataset test = ds.subset(test_rows);
        run.original_class.reserve(test_rows.size());
        for (auto r : test_rows) run.original_class.push_back(labels[r]);
        test.schema = novelty_schema(ds.schema);
        for (std::size_t i = 0; i < test.size(); ++i) {
            test.targets[i] = run.original_class[i] == run.held_out_class ? 1.0 : 0.0;
        }
        run.detection_test = std::move(test);
        runs.push_back(std::move(run));
    }
    return runs;
}

std::size_t shifted_column_count(double level, std::size_t num_features) {
    if (!(level >= 0.0 && level <= 1.0)) {
        throw ConfigError("shift level must lie in [0, 1], got " + std::to_string(level));
    }
    const double raw = level * static_cast<double>(num_features);
    const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::min(count, num_features);
}

std::pair<Dataset, FeatureShiftSpec> decremental_shift(const Dataset& train, const Dataset& test, double level,
                                                       std::uint64_t seed) {
    if (!same_features(train.schema, test.schema)) {
        throw DataError("schema mismatch between train and test feature columns");
    }
    FeatureShiftSpec spec;
    spec.level = level;
    spec.mode = ShiftMode::decremental;
    spec.seed = seed;
    const auto m = train.schema.num_features();
    const auto count = shifted_column_count(level, m);
    if (count == 0) return {test, spec};

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());
    for (auto j : order) spec.removed.push_back(train.schema.features[j].name);

    auto shifted = impute(fit_imputer(train), test, spec.removed);
    return {std::move(shifted), std::move(spec)};
}

Dataset incremental_shift(const Dataset& test, std::size_t n_new, std::uint64_t seed) {
    if (n_new == 0) throw ConfigError("incremental shift needs at least one new feature");
    std::vector<std::string> taken = test.schema.feature_names();
    taken.push_back(test.schema.target.name);
    if (test.schema.id_column) taken.push_back(*test.schema.id_column);
    if (test.schema.split_column) taken.push_back(*test.schema.split_column);

    Dataset out = test;
    const auto old_m = test.features.cols();
    out.features.conservativeResize(Eigen::NoChange, old_m + static_cast<Eigen::Index>(n_new));
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t a = 0; a < n_new; ++a) {
        const std::string base = "new_feature_" + std::to_string(a + 1);
        std::string name = base;
        for (int suffix = 1; std::find(taken.begin(), taken.end(), name) != taken.end(); ++suffix) {
            name = base + "_" + std::to_string(suffix);
        }
        taken.push_back(name);
        out.schema.features.push_back(ColumnSpec{name, ColumnKind::numeric, {}});
        auto col = out.features.col(old_m + static_cast<Eigen::Index>(a));
        for (Eigen::Index i = 0; i < col.size(); ++i) col[i] = normal(rng);
    }
    return out;
}

Dataset align_features(const DatasetSchema& train_schema, const Dataset& test) {
    Dataset out;
    out.schema = test.schema;
    out.schema.features.clear();
    out.features.resize(test.features.rows(), static_cast<Eigen::Index>(train_schema.num_features()));
    for (std::size_t j = 0; j < train_schema.num_features(); ++j) {
        const auto& name = train_schema.features[j].name;
        const auto src = test.schema.find_feature(name);
        if (!src) throw DataError("training feature column missing from test set: " + name);
        out.schema.features.push_back(test.schema.features[*src]);
        out.features.col(static_cast<Eigen::Index>(j)) = test.features.col(static_cast<Eigen::Index>(*src));
    }
    out.targets = test.targets;
    out.sample_ids = test.sample_ids;
    out.splits = test.splits;
    return out;
}

CddScenario cdd_prepare(const Dataset& train, const Dataset& id_test, const Dataset& ood_test, std::size_t cap,
                        std::uint64_t seed) {
    if (!same_features(train.schema, id_test.schema) || !same_features(train.schema, ood_test.schema)) {
        throw DataError("schema mismatch across train / id_test / ood_test");
    }
    if (train.empty() || id_test.empty() || ood_test.empty()) throw DataError("empty split in distribution scenario");
    const std::size_t sizes[] = {train.size(), id_test.size(), ood_test.size()};
    const auto quota = apportion(sizes, std::min(cap, sizes[0] + sizes[1] + sizes[2]));

    const Dataset* parts[] = {&train, &id_test, &ood_test};
    const SplitTag tags[] = {SplitTag::train, SplitTag::id_test, SplitTag::ood_test};
    Dataset out[3];
    for (int p = 0; p < 3; ++p) {
        if (quota[p] == 0) throw DataError("cap leaves split " + to_string(tags[p]) + " empty");
        out[p] = stratified_subsample(*parts[p], quota[p], derive_seed(seed, static_cast<std::uint64_t>(p)),
                                      StrataMode::class_only);
        out[p].splits.assign(out[p].size(), tags[p]);
    }
    CddScenario s{std::move(out[0]), std::move(out[1]), std::move(out[2]), {}};
    s.provenance = "cap=" + std::to_string(cap) + " seed=" + std::to_string(seed) + " sizes=" +
                   std::to_string(s.train.size()) + "/" + std::to_string(s.id_test.size()) + "/" +
                   std::to_string(s.ood_test.size()) + " from " + std::to_string(sizes[0]) + "/" +
                   std::to_string(sizes[1]) + "/" + std::to_string(sizes[2]);
    return s;
}

CddScenario cdd_prepare(const Dataset& tagged, std::size_t cap, std::uint64_t seed) {
    if (!tagged.has_splits()) throw ConfigError("distribution scenario needs a split column or three files");
    return cdd_prepare(tagged.split_part(SplitTag::train), tagged.split_part(SplitTag::id_test),
                       tagged.split_part(SplitTag::ood_test), cap, seed);
}

// ---------------------------------------------------------------------------

std::uint64_t decremental_seed(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t incremental_seed(std::uint64_t seed) { return derive_seed(seed, 2); }

namespace {

json hints_json(const SchemaHints& h) {
    json j = json::object();
    if (h.target) j["target"] = *h.target;
    if (h.task) j["task"] = to_string(*h.task);
    if (h.id_column) j["id_column"] = *h.id_column;
    if (h.split_column) j["split_column"] = *h.split_column;
    j["categorical"] = h.categorical;
    j["delimiter"] = std::string(1, h.delimiter);
    return j;
}

SchemaHints hints_from_json(const json& j) {
    SchemaHints h;
    if (j.contains("target")) h.target = j.at("target").get<std::string>();
    if (j.contains("task")) h.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("id_column")) h.id_column = j.at("id_column").get<std::string>();
    if (j.contains("split_column")) h.split_column = j.at("split_column").get<std::string>();
    if (j.contains("categorical")) h.categorical = j.at("categorical").get<std::vector<std::string>>();
    if (j.contains("delimiter")) {
        const auto d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ConfigError("manifest delimiter must be one character");
        h.delimiter = d[0];
    }
    return h;
}

json recipe_json(const ScenarioRecipe& r, const std::string& kind) {
    return json{{"kind", kind},
                {"sources", r.sources},
                {"hints", hints_json(r.hints)},
                {"seed", r.seed},
                {"test_fraction", r.test_fraction},
                {"level", r.level},
                {"n_new", r.n_new},
                {"held_out_class", r.held_out_class},
                {"cap", r.cap},
                {"known_holdout_fraction", r.known_holdout_fraction}};
}

void write_parts(const std::vector<std::pair<std::string, const Dataset*>>& parts, json manifest,
                 const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json files = json::array();
    json sizes = json::object();
    for (const auto& [name, ds] : parts) {
        const auto file = name + ".csv";
        write_table(*ds, dir / file);
        files.push_back(json{{"part", name}, {"file", file}, {"hints", hints_json(hints_for(ds->schema))}});
        sizes[name] = ds->size();
    }
    manifest["files"] = files;
    manifest["split_sizes"] = sizes;
    auto out = csv::open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + (dir / "manifest.json").string());
}

json schema_json(const DatasetSchema& schema) {
    return json{{"features", schema.feature_names()},
                {"target", schema.target.name},
                {"task", to_string(schema.task)},
                {"class_names", schema.target.levels}};
}

}  // namespace

Dataset load_recipe_source(const ScenarioRecipe& recipe) {
    if (recipe.sources.size() == 1) return load_table(recipe.sources[0], recipe.hints);
    if (recipe.sources.size() == 3) {
        return load_split_tables(recipe.sources[0], recipe.sources[1], recipe.sources[2], recipe.hints);
    }
    throw ConfigError("a scenario needs one source file or three (train, id_test, ood_test)");
}

std::pair<Dataset, Dataset> recipe_split(const ScenarioRecipe& recipe, const Dataset& source) {
    return split_holdout(source, recipe.test_fraction, recipe.seed, source.schema.is_classification());
}

void export_scenario(const EncRun& run, const ScenarioRecipe& recipe, const std::filesystem::path& dir) {
    auto manifest = recipe_json(recipe, "enc");
    manifest["held_out_class"] = class_name(run.train.schema, run.held_out_class);
    manifest["run_seed"] = run.seed;
    manifest["n_novel"] = run.n_novel;
    manifest["schema"] = schema_json(run.train.schema);
    write_parts({{"train", &run.train}, {"detection_test", &run.detection_test}}, std::move(manifest), dir);
}

void export_scenario(const Dataset& train, const Dataset& shifted_test, const FeatureShiftSpec& spec,
                     const ScenarioRecipe& recipe, const std::filesystem::path& dir) {
    const bool decremental = spec.mode == ShiftMode::decremental;
    auto manifest = recipe_json(recipe, decremental ? "df" : "inf");
    manifest["shift_seed"] = spec.seed;
    if (decremental) {
        manifest["level"] = spec.level;
        manifest["removed"] = spec.removed;
    } else {
        manifest["n_new"] = spec.n_new;
        manifest["added"] = spec.added;
    }
    manifest["schema"] = schema_json(train.schema);
    write_parts({{"train", &train}, {"test", &shifted_test}}, std::move(manifest), dir);
}

void export_scenario(const CddScenario& scenario, const ScenarioRecipe& recipe, const std::filesystem::path& dir) {
    auto manifest = recipe_json(recipe, "cdd");
    manifest["provenance"] = scenario.provenance;
    manifest["schema"] = schema_json(scenario.train.schema);
    write_parts({{"train", &scenario.train}, {"id_test", &scenario.id_test}, {"ood_test", &scenario.ood_test}},
                std::move(manifest), dir);
}

void materialize(const ScenarioRecipe& recipe, const std::filesystem::path& dir) {
    const auto source = load_recipe_source(recipe);
    if (recipe.kind == "enc") {
        const auto runs = enc_generate(source, recipe.seed, EncConfig{recipe.known_holdout_fraction});
        for (const auto& run : runs) {
            if (class_name(source.schema, run.held_out_class) == recipe.held_out_class) {
                export_scenario(run, recipe, dir);
                return;
            }
        }
        throw ConfigError("held-out class '" + recipe.held_out_class + "' not present in " + recipe.sources[0]);
    }
    if (recipe.kind == "df") {
        const auto [train, test] = recipe_split(recipe, source);
        const auto [shifted, spec] = decremental_shift(train, test, recipe.level, decremental_seed(recipe.seed));
        export_scenario(train, shifted, spec, recipe, dir);
        return;
    }
    if (recipe.kind == "inf") {
        const auto [train, test] = recipe_split(recipe, source);
        FeatureShiftSpec spec;
        spec.mode = ShiftMode::incremental;
        spec.n_new = recipe.n_new;
        spec.seed = incremental_seed(recipe.seed);
        const auto shifted = incremental_shift(test, recipe.n_new, spec.seed);
        for (auto j = test.schema.num_features(); j < shifted.schema.num_features(); ++j) {
            spec.added.push_back(shifted.schema.features[j].name);
        }
        export_scenario(train, shifted, spec, recipe, dir);
        return;
    }
    if (recipe.kind == "cdd") {
        export_scenario(cdd_prepare(source, recipe.cap, recipe.seed), recipe, dir);
        return;
    }
    throw ConfigError("unknown scenario kind '" + recipe.kind + "'");
}

ScenarioRecipe read_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw ConfigError("cannot open manifest: " + manifest.string());
    json j;
    try {
        in >> j;
        ScenarioRecipe r;
        r.kind = j.at("kind").get<std::string>();
        r.sources = j.at("sources").get<std::vector<std::string>>();
        r.hints = hints_from_json(j.at("hints"));
        r.seed = j.at("seed").get<std::uint64_t>();
        r.test_fraction = j.at("test_fraction").get<double>();
        r.level = j.at("level").get<double>();
        r.n_new = j.at("n_new").get<std::size_t>();
        r.held_out_class = j.at("held_out_class").get<std::string>();
        r.cap = j.at("cap").get<std::size_t>();
        r.known_holdout_fraction = j.at("known_holdout_fraction").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw ConfigError("malformed manifest " + manifest.string() + ": " + e.what());
    }
}

void replay_manifest(const std::filesystem::path& manifest, const std::filesystem::path& dir) {
    materialize(read_manifest(manifest), dir);
}

}  // namespace openenv
