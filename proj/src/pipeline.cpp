#include "openenv/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "csv.hpp"
#include "openenv/error.hpp"
#include "openenv/scenario.hpp"

#ifndef OPENENV_DATA_DIR
#define OPENENV_DATA_DIR ""
#endif

namespace openenv {

namespace {

using json = nlohmann::ordered_json;

const std::vector<std::string> kTasks{"enc", "df", "inf", "cdd", "vlo"};

struct ModelSpec {
    std::string name;
    std::string kind;  // knn | logreg | mlp | external
    std::filesystem::path dir;
};

ModelSpec parse_model(const std::string& text) {
    if (text == "knn" || text == "logreg" || text == "mlp") return {text, text, {}};
    constexpr std::string_view prefix = "external:";
    if (text.starts_with(prefix) && text.size() > prefix.size()) {
        return {text, "external", std::filesystem::path(text.substr(prefix.size()))};
    }
    throw ConfigError("unknown model '" + text + "' (expected knn, logreg, mlp or external:<dir>)");
}

std::string level_label(double level) { return csv::format_number(level * 100.0) + "%"; }

// ---------------------------------------------------------------------------

class FittedModel {
public:
    static FittedModel fit(const ModelSpec& spec, const Dataset& train, const RunConfig& cfg) {
        FittedModel m;
        m.spec_ = spec;
        m.task_ = train.schema.task;
        m.class_levels_ = train.schema.target.levels;
        if (train.schema.is_classification()) {
            std::set<int> present;
            for (int y : train.labels()) present.insert(y);
            m.class_order_.assign(present.begin(), present.end());
        }
        if (spec.kind == "external") return m;

        m.imputer_ = fit_imputer(train);
        const auto filled = fill_missing(m.imputer_, train);
        m.standardizer_ = fit_standardizer(filled);
        const auto ready = apply_standardizer(m.standardizer_, filled);
        if (spec.kind == "knn") {
            if (cfg.knn_k > ready.size()) {
                throw ConfigError("knn_k = " + std::to_string(cfg.knn_k) + " exceeds the " +
                                  std::to_string(ready.size()) + " training rows");
            }
            m.model_ = knn_fit(ready, cfg.knn_k);
        } else if (spec.kind == "logreg") {
            if (train.schema.task != TaskType::binary) {
                throw ConfigError("logreg supports binary targets only; this scenario is " +
                                  to_string(train.schema.task));
            }
            auto lc = cfg.logreg;
            lc.seed = cfg.seed;
            m.model_ = logreg_fit(ready, lc);
        } else {
            auto mc = cfg.mlp;
            mc.seed = cfg.seed;
            m.model_ = mlp_fit(ready, mc);
        }
        return m;
    }

    bool external() const { return spec_.kind == "external"; }

    std::filesystem::path prediction_path(const std::string& scenario) const {
        return spec_.dir / (prediction_file_stem(scenario) + ".csv");
    }

    std::string origin(const std::string& scenario) const {
        return external() ? prediction_path(scenario).string() : "builtin:" + spec_.kind;
    }

    PredictionSet predict(const Dataset& test, const std::string& scenario) const {
        if (external()) {
            const auto path = prediction_path(scenario);
            if (!std::filesystem::exists(path)) {
                throw DataError("missing external predictions for scenario " + scenario + ": " + path.string());
            }
            PredictionManifest manifest;
            manifest.sample_ids = test.sample_ids;
            manifest.class_order = class_order_;
            for (int c : class_order_) manifest.class_names.push_back(class_levels_.at(static_cast<std::size_t>(c)));
            return load_predictions(path, manifest);
        }
        const auto ready = apply_standardizer(standardizer_, fill_missing(imputer_, test));
        if (const auto* knn = std::get_if<KnnModel>(&model_)) return knn_predict_proba(*knn, ready);
        if (const auto* lr = std::get_if<LogRegModel>(&model_)) return logreg_predict_proba(*lr, ready);
        return mlp_predict_proba(std::get<MlpModel>(model_), ready);
    }

private:
    ModelSpec spec_;
    TaskType task_ = TaskType::multiclass;
    std::vector<std::string> class_levels_;
    std::vector<int> class_order_;
    ImputeModel imputer_;
    Standardizer standardizer_;
    std::variant<std::monostate, KnnModel, LogRegModel, MlpModel> model_;
};

// ---------------------------------------------------------------------------

struct Context {
    const RunConfig& cfg;
    std::vector<std::string> sources;  // resolved paths
    std::string dataset_label;
    Dataset source;
    std::vector<ModelSpec> models;
    RunResult& out;
    std::vector<TaskScores> ranks;

    FittedModel fit(const ModelSpec& spec, const Dataset& train, const std::string& task) {
        auto m = FittedModel::fit(spec, train, cfg);
        if (!m.external()) ++out.training_invocations[task + "/" + spec.name];
        return m;
    }

    std::string record(const std::string& task, const std::string& scenario, const std::string& model,
                       const std::string& metric, double value,
                       std::vector<std::pair<std::string, std::string>> extra = {}) {
        ResultRecord r{task, scenario, model, metric, value, {}};
        r.provenance.emplace_back("dataset", dataset_label);
        r.provenance.emplace_back("seed", std::to_string(cfg.seed));
        for (auto& kv : extra) r.provenance.push_back(std::move(kv));
        auto key = r.key();
        out.records.push_back(std::move(r));
        return key;
    }

    ScenarioRecipe recipe(const std::string& kind) const {
        ScenarioRecipe r;
        r.kind = kind;
        r.sources = sources;
        r.hints = cfg.hints;
        r.seed = cfg.seed;
        r.test_fraction = cfg.test_fraction;
        r.cap = cfg.cap;
        r.known_holdout_fraction = cfg.known_holdout_fraction;
        return r;
    }

    std::filesystem::path export_dir(const std::string& sub) const { return cfg.output_dir / "scenarios" / sub; }

    std::vector<std::string> model_names() const {
        std::vector<std::string> names;
        for (const auto& m : models) names.push_back(m.name);
        return names;
    }

    std::string footnote() const {
        return "dataset=" + dataset_label + " seed=" + std::to_string(cfg.seed);
    }
};

std::string class_label(const DatasetSchema& schema, int code) {
    return schema.target.levels.at(static_cast<std::size_t>(code));
}

std::vector<Objective> objectives_for(const RunConfig& cfg, TaskType task) {
    std::vector<Objective> out;
    for (auto o : cfg.objectives) {
        if (applies_to(o, task)) out.push_back(o);
    }
    if (out.empty() && task == TaskType::regression) out.push_back(Objective::rmse);
    if (out.empty()) throw ConfigError("no configured objective applies to " + to_string(task) + " tasks");
    return out;
}

std::pair<Dataset, Dataset> holdout(const Context& ctx) {
    return split_holdout(ctx.source, ctx.cfg.test_fraction, ctx.cfg.seed, ctx.source.schema.is_classification());
}

ReportTable model_table(std::string caption, std::string corner, std::vector<std::string> rows,
                        std::vector<std::string> cols) {
    ReportTable t;
    t.caption = std::move(caption);
    t.corner = std::move(corner);
    t.row_labels = std::move(rows);
    t.column_labels = std::move(cols);
    t.cells.assign(t.row_labels.size(), std::vector<std::optional<ReportCell>>(t.column_labels.size()));
    return t;
}

// ---------------------------------------------------------------------------

void run_enc(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto runs = enc_generate(ctx.source, cfg.seed, EncConfig{cfg.known_holdout_fraction});

    std::vector<std::string> rows;
    for (const auto& r : runs) rows.push_back(class_label(ctx.source.schema, r.held_out_class));
    rows.push_back("Average");
    const std::vector<std::string> cols{"ROC-AUC", "AUPR", "interval ROC-AUC", "U[0.40,0.60]", "U[0.45,0.55]",
                                        "U[0.49,0.51]"};
    const std::vector<std::string> metric_names{"roc_auc", "aupr", "interval_roc_auc", "uncertainty_0.40_0.60",
                                                "uncertainty_0.45_0.55", "uncertainty_0.49_0.51"};

    if (cfg.export_dataset) {
        for (const auto& run : runs) {
            auto r = ctx.recipe("enc");
            r.held_out_class = class_label(ctx.source.schema, run.held_out_class);
            export_scenario(run, r, ctx.export_dir("enc/" + r.held_out_class));
        }
    }

    TaskScores scores{"enc", ctx.model_names(), {"mean ROC-AUC", "mean AUPR"}, {true, true}, {}};
    for (const auto& spec : ctx.models) {
        std::vector<PredictionSet> preds;
        std::vector<std::string> origins;
        for (const auto& run : runs) {
            const auto scenario = "enc/" + class_label(ctx.source.schema, run.held_out_class);
            const auto model = ctx.fit(spec, run.train, "enc");
            preds.push_back(model.predict(run.detection_test, scenario));
            origins.push_back(model.origin(scenario));
        }
        const auto report = enc_evaluate(runs, preds, cfg.novelty);

        auto table = model_table("ENC: leave-one-class-out novelty detection, model " + spec.name,
                                 "held-out class", rows, cols);
        auto fill_row = [&](std::size_t r, const EncRunMetrics& m, const std::string& scenario,
                            std::vector<std::pair<std::string, std::string>> prov) {
            const double vals[] = {m.roc_auc, m.aupr, m.interval_roc_auc,
                                   m.uncertainty[0], m.uncertainty[1], m.uncertainty[2]};
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const auto key = ctx.record("enc", scenario, spec.name, metric_names[c], vals[c], prov);
                table.cells[r][c] = ReportCell::metric(vals[c], key);
            }
        };
        for (std::size_t i = 0; i < runs.size(); ++i) {
            fill_row(i, report.runs[i], "enc/" + rows[i],
                     {{"held_out_class", rows[i]},
                      {"run_seed", std::to_string(runs[i].seed)},
                      {"n_novel", std::to_string(runs[i].n_novel)},
                      {"train_rows", std::to_string(runs[i].train.size())},
                      {"predictions", origins[i]}});
        }
        fill_row(runs.size(), report.mean, "enc/average", {{"runs", std::to_string(runs.size())}});

        table.footnotes.push_back(ctx.footnote() + " known_holdout_fraction=" +
                                  csv::format_number(cfg.known_holdout_fraction));
        table.footnotes.push_back("novelty score = 1 - max probability; interval rule [" +
                                  csv::format_number(cfg.novelty.theta_min) + ", " +
                                  csv::format_number(cfg.novelty.theta_max) +
                                  "]; U[a,b] = share of novel samples with max probability in [a,b]");
        ctx.out.tables.push_back(std::move(table));
        scores.values.push_back({report.mean.roc_auc, report.mean.aupr});
    }
    ctx.ranks.push_back(std::move(scores));
}

// df and inf share the split, the single fit per model and the table layout.
struct ShiftedTest {
    std::string row;       // table row label
    std::string scenario;  // record scenario
    Dataset test;          // what the model sees
    std::vector<std::pair<std::string, std::string>> provenance;
};

void run_feature_shift(Context& ctx, const std::string& task, const Dataset& train, const Dataset& base_test,
                       const std::vector<ShiftedTest>& tests, const std::string& description) {
    const auto objectives = objectives_for(ctx.cfg, train.schema.task);
    const auto models = ctx.model_names();
    std::vector<std::string> rows;
    for (const auto& t : tests) rows.push_back(t.row);

    // values[objective][model][row]
    std::vector<std::vector<std::vector<double>>> values(
        objectives.size(), std::vector<std::vector<double>>(models.size(), std::vector<double>(tests.size())));
    std::vector<std::vector<double>> baseline(objectives.size(), std::vector<double>(models.size()));
    std::vector<ReportTable> abs_tables, rel_tables;
    for (const auto o : objectives) {
        const auto name = to_string(o);
        abs_tables.push_back(model_table(task + ": " + name + " " + description + " (absolute gap)", "shift",
                                         rows, models));
        rel_tables.push_back(model_table(task + ": " + name + " relative gap (shifted - base) / base", "shift",
                                         rows, models));
    }

    for (std::size_t m = 0; m < ctx.models.size(); ++m) {
        const auto& spec = ctx.models[m];
        const auto model = ctx.fit(spec, train, task);
        const std::string base_scenario = task + "/base";
        const auto base_preds = model.predict(base_test, base_scenario);
        for (std::size_t o = 0; o < objectives.size(); ++o) {
            baseline[o][m] = evaluate(objectives[o], base_test, base_preds);
            ctx.record(task, base_scenario, spec.name, to_string(objectives[o]), baseline[o][m],
                       {{"predictions", model.origin(base_scenario)}});
        }
        for (std::size_t r = 0; r < tests.size(); ++r) {
            const auto& t = tests[r];
            const auto preds = model.predict(t.test, t.scenario);
            for (std::size_t o = 0; o < objectives.size(); ++o) {
                const auto name = to_string(objectives[o]);
                const double v = evaluate(objectives[o], t.test, preds);
                const double gap = performance_gap(baseline[o][m], v, GapMode::absolute);
                const double rel = baseline[o][m] != 0.0 ? performance_gap(baseline[o][m], v, GapMode::relative)
                                                          : std::nan("");
                auto prov = t.provenance;
                prov.emplace_back("predictions", model.origin(t.scenario));
                const auto key = ctx.record(task, t.scenario, spec.name, name, v, prov);
                ctx.record(task, t.scenario, spec.name, name + ".gap_absolute", gap, prov);
                const auto rel_key = ctx.record(task, t.scenario, spec.name, name + ".gap_relative", rel, prov);
                values[o][m][r] = v;
                abs_tables[o].cells[r][m] = ReportCell::with_gap(v, gap, key);
                rel_tables[o].cells[r][m] = ReportCell::ratio(rel, rel_key);
            }
        }
    }

    TaskScores scores{task, models, {}, {}, std::vector<std::vector<double>>(models.size())};
    for (std::size_t o = 0; o < objectives.size(); ++o) {
        abs_tables[o].footnotes.push_back(ctx.footnote() + " train_rows=" + std::to_string(train.size()) +
                                          " test_rows=" + std::to_string(base_test.size()) +
                                          " test_fraction=" + csv::format_number(ctx.cfg.test_fraction));
        abs_tables[o].footnotes.push_back("gap = shifted - base, base = score on the unshifted test split");
        ctx.out.tables.push_back(std::move(abs_tables[o]));
        ctx.out.tables.push_back(std::move(rel_tables[o]));
        for (std::size_t r = 0; r < tests.size(); ++r) {
            scores.cells.push_back(to_string(objectives[o]) + "@" + rows[r]);
            scores.higher_is_better.push_back(higher_is_better(objectives[o]));
            for (std::size_t m = 0; m < models.size(); ++m) scores.values[m].push_back(values[o][m][r]);
        }
    }
    ctx.ranks.push_back(std::move(scores));
}

void run_df(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto [train, test] = holdout(ctx);
    std::vector<ShiftedTest> tests;
    for (double level : cfg.levels) {
        auto [shifted, spec] = decremental_shift(train, test, level, decremental_seed(cfg.seed));
        std::string removed;
        for (const auto& c : spec.removed) removed += (removed.empty() ? "" : ";") + c;
        const auto scenario = "df/" + csv::format_number(level);
        if (cfg.export_dataset) {
            auto r = ctx.recipe("df");
            r.level = level;
            export_scenario(train, shifted, spec, r, ctx.export_dir("df/level_" + csv::format_number(level)));
        }
        tests.push_back({level_label(level), scenario, std::move(shifted),
                         {{"level", csv::format_number(level)},
                          {"shift_seed", std::to_string(spec.seed)},
                          {"removed", removed}}});
    }
    run_feature_shift(ctx, "df", train, test, tests, "under decremental features");
}

void run_inf(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto [train, test] = holdout(ctx);
    std::vector<std::size_t> counts{0};
    for (auto n : cfg.n_new) {
        if (std::find(counts.begin(), counts.end(), n) == counts.end()) counts.push_back(n);
    }
    std::vector<ShiftedTest> tests;
    for (auto n : counts) {
        const auto scenario = "inf/" + std::to_string(n);
        Dataset widened = test;
        FeatureShiftSpec spec;
        spec.mode = ShiftMode::incremental;
        spec.n_new = n;
        spec.seed = incremental_seed(cfg.seed);
        if (n > 0) {
            widened = incremental_shift(test, n, spec.seed);
            for (auto j = test.schema.num_features(); j < widened.schema.num_features(); ++j) {
                spec.added.push_back(widened.schema.features[j].name);
            }
            if (cfg.export_dataset) {
                auto r = ctx.recipe("inf");
                r.n_new = n;
                export_scenario(train, widened, spec, r, ctx.export_dir("inf/n_new_" + std::to_string(n)));
            }
        }
        std::string added;
        for (const auto& c : spec.added) added += (added.empty() ? "" : ";") + c;
        tests.push_back({"n_new=" + std::to_string(n), scenario, align_features(train.schema, widened),
                         {{"n_new", std::to_string(n)},
                          {"shift_seed", std::to_string(spec.seed)},
                          {"added", added},
                          {"aligned", "true"}}});
    }
    run_feature_shift(ctx, "inf", train, test, tests, "under incremental features after alignment");
}

CddScenario standardized(const CddScenario& s) {
    const auto imputer = fit_imputer(s.train);
    const auto train = fill_missing(imputer, s.train);
    const auto st = fit_standardizer(train);
    return {apply_standardizer(st, train), apply_standardizer(st, fill_missing(imputer, s.id_test)),
            apply_standardizer(st, fill_missing(imputer, s.ood_test)), s.provenance};
}

void run_cdd(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (!ctx.source.has_splits()) {
        throw ConfigError("task cdd needs a split column (hint split_column) or three dataset files");
    }
    const auto scenario = cdd_prepare(ctx.source, cfg.cap, cfg.seed);
    if (cfg.export_dataset) export_scenario(scenario, ctx.recipe("cdd"), ctx.export_dir("cdd"));
    const auto objectives = objectives_for(cfg, scenario.train.schema.task);
    const auto models = ctx.model_names();

    std::vector<std::string> cols;
    for (auto o : objectives) {
        cols.push_back(to_string(o) + " ID");
        cols.push_back(to_string(o) + " OOD");
    }
    auto perf = model_table("CDD: in-distribution vs out-of-distribution performance (OOD gap in parentheses)",
                            "model", models, cols);
    perf.footnotes.push_back("dataset=" + ctx.dataset_label + " " + scenario.provenance);

    const bool classification = scenario.train.schema.is_classification();
    const bool binary = scenario.train.schema.task == TaskType::binary;
    std::optional<ReportTable> profile_table;
    CddScenario std_scenario;
    Eigen::MatrixXd emb_train, emb_ood;
    std::optional<OtddResult> ot;
    ShiftProfileConfig pcfg;
    if (classification) {
        std_scenario = standardized(scenario);
        pcfg.otdd = cfg.otdd;
        pcfg.otdd.seed = cfg.seed;
        pcfg.disde = cfg.disde;
        pcfg.disde.seed = cfg.seed;
        auto mc = cfg.mlp;
        mc.seed = cfg.seed;
        const auto embedder = mlp_fit(std_scenario.train, mc);
        ++ctx.out.training_invocations["cdd/embedding:mlp"];
        emb_train = mlp_activations(embedder, std_scenario.train.features);
        emb_ood = mlp_activations(embedder, std_scenario.ood_test.features);
        ot = otdd_report(std_scenario.train, std_scenario.ood_test, pcfg.otdd);
        profile_table = model_table("CDD: shift profile and loss-gap decomposition (zero-one loss, ID -> OOD)",
                                    "model", models,
                                    {"delta_x", "delta_y|x", "delta_y", "term I", "term II", "term III",
                                     "total gap", "overlap", "pattern"});
    }

    TaskScores scores{"cdd", models, {}, {}, std::vector<std::vector<double>>(models.size())};
    for (auto o : objectives) {
        scores.cells.push_back(to_string(o) + " OOD");
        scores.higher_is_better.push_back(higher_is_better(o));
    }
    for (std::size_t m = 0; m < ctx.models.size(); ++m) {
        const auto& spec = ctx.models[m];
        const auto model = ctx.fit(spec, scenario.train, "cdd");
        const auto p_id = model.predict(scenario.id_test, "cdd/id_test");
        const auto p_ood = model.predict(scenario.ood_test, "cdd/ood_test");
        for (std::size_t o = 0; o < objectives.size(); ++o) {
            const auto name = to_string(objectives[o]);
            const double v_id = evaluate(objectives[o], scenario.id_test, p_id);
            const double v_ood = evaluate(objectives[o], scenario.ood_test, p_ood);
            const auto k_id = ctx.record("cdd", "cdd/id_test", spec.name, name, v_id,
                                         {{"predictions", model.origin("cdd/id_test")}});
            const auto k_ood = ctx.record("cdd", "cdd/ood_test", spec.name, name, v_ood,
                                          {{"predictions", model.origin("cdd/ood_test")}});
            perf.cells[m][2 * o] = ReportCell::metric(v_id, k_id);
            perf.cells[m][2 * o + 1] = ReportCell::with_gap(v_ood, v_ood - v_id, k_ood);
            scores.values[m].push_back(v_ood);
        }
        if (!profile_table) continue;

        const auto losses_id = per_sample_loss(p_id, std_scenario.id_test, pcfg.loss);
        const auto losses_ood = per_sample_loss(p_ood, std_scenario.ood_test, pcfg.loss);
        ShiftProfile prof;
        if (binary) {
            prof = shift_profile(std_scenario, emb_train, emb_ood, p_id, p_ood, pcfg);
        } else {
            prof.delta_x = ot->distance;
            prof.delta_y_given_x = fdd(emb_train, emb_ood);
            prof.disde = disde(losses_id, std_scenario.id_test.features, losses_ood,
                               std_scenario.ood_test.features, pcfg.disde);
            prof.pattern = shift_pattern(prof.disde);
        }
        const std::vector<std::pair<std::string, std::string>> prov{
            {"predictions", model.origin("cdd/id_test") + ";" + model.origin("cdd/ood_test")},
            {"embedding", "builtin:mlp hidden layer"},
            {"otdd_epsilon", csv::format_number(ot->epsilon)},
            {"otdd_iterations", std::to_string(ot->iterations)},
            {"eta", csv::format_number(prof.disde.eta)},
            {"k", std::to_string(prof.disde.k_neighbors)}};
        auto& row = profile_table->cells[m];
        auto put = [&](std::size_t c, const std::string& metric, double v, bool gap_like) {
            const auto key = ctx.record("cdd", "cdd/profile", spec.name, metric, v, prov);
            row[c] = gap_like ? ReportCell::ratio(v, key) : ReportCell::metric(v, key);
        };
        put(0, "delta_x", prof.delta_x, false);
        put(1, "delta_y_given_x", prof.delta_y_given_x, false);
        if (binary) put(2, "delta_y", prof.delta_y, true);
        put(3, "disde_term_1", prof.disde.term_1, true);
        put(4, "disde_term_2", prof.disde.term_2, true);
        put(5, "disde_term_3", prof.disde.term_3, true);
        put(6, "disde_total_gap", prof.disde.total_gap, true);
        put(7, "overlap_fraction", prof.disde.overlap_fraction, false);
        row[8] = ReportCell::label(prof.pattern);
    }

    ctx.out.tables.push_back(std::move(perf));
    if (profile_table) {
        profile_table->footnotes.push_back("dataset=" + ctx.dataset_label + " " + scenario.provenance);
        profile_table->footnotes.push_back(
            "delta_x = OTDD(train, ood_test) with Gaussian class-conditionals, epsilon=" +
            csv::format_number(ot->epsilon) + ", rows " + std::to_string(ot->rows_a) + "/" +
            std::to_string(ot->rows_b));
        profile_table->footnotes.push_back("delta_y|x = Frechet distance of MLP hidden activations, train vs ood_test");
        if (!binary) profile_table->footnotes.push_back("delta_y is defined for binary targets only");
        profile_table->footnotes.push_back("terms: I + II + III = total gap = mean OOD loss - mean ID loss; eta=" +
                                           csv::format_number(pcfg.disde.eta) +
                                           " k=" + std::to_string(pcfg.disde.k));
        ctx.out.tables.push_back(std::move(*profile_table));
    }
    ctx.ranks.push_back(std::move(scores));
}

void run_vlo(Context& ctx) {
    const auto& cfg = ctx.cfg;
    Dataset train, test;
    std::string origin;
    if (ctx.source.has_splits()) {
        train = ctx.source.split_part(SplitTag::train);
        test = ctx.source.split_part(SplitTag::id_test);
        origin = "train / id_test splits";
    } else {
        std::tie(train, test) = holdout(ctx);
        origin = "holdout test_fraction=" + csv::format_number(cfg.test_fraction);
    }
    const auto objectives = objectives_for(cfg, train.schema.task);
    const auto models = ctx.model_names();
    std::vector<std::string> cols;
    for (auto o : objectives) cols.push_back(to_string(o));
    const bool ranked = models.size() >= 2;
    if (ranked) cols.push_back("mean rank");
    auto table = model_table("VLO: i.i.d. performance under each learning objective", "model", models, cols);

    Eigen::MatrixXd values(static_cast<Eigen::Index>(models.size()), static_cast<Eigen::Index>(objectives.size()));
    for (std::size_t m = 0; m < ctx.models.size(); ++m) {
        const auto& spec = ctx.models[m];
        const auto model = ctx.fit(spec, train, "vlo");
        const auto preds = model.predict(test, "vlo/id_test");
        for (std::size_t o = 0; o < objectives.size(); ++o) {
            const double v = evaluate(objectives[o], test, preds);
            values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(o)) = v;
            const auto key = ctx.record("vlo", "vlo/id_test", spec.name, to_string(objectives[o]), v,
                                        {{"predictions", model.origin("vlo/id_test")}});
            table.cells[m][o] = ReportCell::metric(v, key);
        }
    }
    TaskScores scores{"vlo", models, {}, {}, std::vector<std::vector<double>>(models.size())};
    for (auto o : objectives) {
        scores.cells.push_back(to_string(o));
        scores.higher_is_better.push_back(higher_is_better(o));
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (std::size_t o = 0; o < objectives.size(); ++o) {
            scores.values[m].push_back(values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(o)));
        }
    }
    if (ranked) {
        std::unique_ptr<bool[]> hib(new bool[objectives.size()]);
        for (std::size_t o = 0; o < objectives.size(); ++o) hib[o] = higher_is_better(objectives[o]);
        const auto ranks = rank_table(values, std::span<const bool>(hib.get(), objectives.size()));
        for (std::size_t m = 0; m < models.size(); ++m) {
            const double r = ranks.mean_rank[static_cast<Eigen::Index>(m)];
            const auto key = ctx.record("vlo", "vlo/id_test", models[m], "mean_rank", r);
            table.cells[m][objectives.size()] = ReportCell::metric(r, key);
        }
    }
    table.footnotes.push_back(ctx.footnote() + " " + origin + " train_rows=" + std::to_string(train.size()) +
                              " test_rows=" + std::to_string(test.size()));
    ctx.out.tables.push_back(std::move(table));
    ctx.ranks.push_back(std::move(scores));
}

// ---------------------------------------------------------------------------

json hints_to_json(const SchemaHints& h) {
    json j = json::object();
    j["target"] = h.target ? json(*h.target) : json(nullptr);
    j["task"] = h.task ? json(to_string(*h.task)) : json(nullptr);
    j["id_column"] = h.id_column ? json(*h.id_column) : json(nullptr);
    j["split_column"] = h.split_column ? json(*h.split_column) : json(nullptr);
    j["categorical"] = h.categorical;
    j["delimiter"] = h.delimiter == '\t' ? std::string("tab") : std::string(1, h.delimiter);
    return j;
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
            throw ConfigError("unknown config key '" + k + "'" + (where.empty() ? "" : " in " + where));
        }
    }
}

SchemaHints hints_from(const json& j) {
    check_keys(j, {"target", "task", "id_column", "split_column", "categorical", "delimiter"}, "hints");
    SchemaHints h;
    if (j.contains("target") && !j["target"].is_null()) h.target = j["target"].get<std::string>();
    if (j.contains("task") && !j["task"].is_null()) h.task = parse_task(j["task"].get<std::string>());
    if (j.contains("id_column") && !j["id_column"].is_null()) h.id_column = j["id_column"].get<std::string>();
    if (j.contains("split_column") && !j["split_column"].is_null()) {
        h.split_column = j["split_column"].get<std::string>();
    }
    take(j, "categorical", h.categorical);
    if (j.contains("delimiter")) {
        const auto d = j["delimiter"].get<std::string>();
        if (d == "tab") {
            h.delimiter = '\t';
        } else if (d.size() == 1) {
            h.delimiter = d[0];
        } else {
            throw ConfigError("delimiter must be one character or 'tab'");
        }
    }
    return h;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    if (dataset.size() != 1 && dataset.size() != 3) {
        throw ConfigError("--dataset takes one table or three (train, id_test, ood_test)");
    }
    if (models.empty()) throw ConfigError("no model given");
    for (const auto& m : models) parse_model(m);
    if (tasks.empty()) throw ConfigError("no task given");
    for (const auto& t : tasks) {
        if (std::find(kTasks.begin(), kTasks.end(), t) == kTasks.end()) {
            throw ConfigError("unknown task '" + t + "' (expected enc, df, inf, cdd or vlo)");
        }
    }
    const auto has = [&](const char* t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };
    if (has("df")) {
        if (levels.empty()) throw ConfigError("task df needs at least one level");
        for (double l : levels) {
            if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("shift level " + csv::format_number(l) + " outside [0, 1]");
        }
    }
    if (has("inf")) {
        if (n_new.empty()) throw ConfigError("task inf needs at least one n_new value");
    }
    if (has("cdd") && cap == 0) throw ConfigError("cap must be positive");
    if (objectives.empty()) throw ConfigError("no objective given");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (!(known_holdout_fraction > 0.0 && known_holdout_fraction < 1.0)) {
        throw ConfigError("known_holdout_fraction must lie in (0, 1)");
    }
    if (knn_k == 0) throw ConfigError("knn_k must be at least 1");
    if (mlp.hidden == 0 || mlp.batch_size == 0 || !(mlp.learning_rate > 0.0)) {
        throw ConfigError("mlp needs positive hidden size, batch size and learning rate");
    }
    if (logreg.learning_rate < 0.0 || logreg.l2 < 0.0) throw ConfigError("logreg learning rate and l2 must be >= 0");
    novelty.validate();
    otdd.validate();
    if (!(disde.eta > 0.0 && disde.eta < 0.5)) throw ConfigError("disde eta must lie in (0, 0.5)");
    if (disde.k == 0) throw ConfigError("disde k must be at least 1");
}

std::string run_config_json(const RunConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    j["hints"] = hints_to_json(c.hints);
    j["models"] = c.models;
    j["tasks"] = c.tasks;
    j["export_dataset"] = c.export_dataset;
    j["seed"] = c.seed;
    j["levels"] = c.levels;
    j["n_new"] = c.n_new;
    j["cap"] = c.cap;
    std::vector<std::string> objectives;
    for (auto o : c.objectives) objectives.push_back(to_string(o));
    j["objectives"] = objectives;
    j["output_dir"] = c.output_dir.generic_string();
    j["test_fraction"] = c.test_fraction;
    j["known_holdout_fraction"] = c.known_holdout_fraction;
    j["knn_k"] = c.knn_k;
    j["mlp"] = json{{"hidden", c.mlp.hidden},
                    {"learning_rate", c.mlp.learning_rate},
                    {"epochs", c.mlp.epochs},
                    {"batch_size", c.mlp.batch_size}};
    j["logreg"] = json{{"learning_rate", c.logreg.learning_rate},
                       {"max_epochs", c.logreg.max_epochs},
                       {"gradient_tolerance", c.logreg.gradient_tolerance},
                       {"l2", c.logreg.l2}};
    j["novelty"] = json{{"theta_min", c.novelty.theta_min}, {"theta_max", c.novelty.theta_max}};
    j["otdd"] = json{{"entropic_epsilon", c.otdd.entropic_epsilon},
                     {"relative_epsilon", c.otdd.relative_epsilon},
                     {"max_iterations", c.otdd.max_iterations},
                     {"marginal_tolerance", c.otdd.marginal_tolerance},
                     {"subsample_cap", c.otdd.subsample_cap}};
    j["disde"] = json{{"eta", c.disde.eta}, {"k", c.disde.k}, {"max_overlap_points", c.disde.max_overlap_points}};
    return j.dump(2);
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig c;
    try {
        json j = json::parse(text);
        if (j.contains("config") && j["config"].is_object()) j = j["config"];
        if (!j.is_object()) throw ConfigError("run config must be a JSON object");
        check_keys(j,
                   {"dataset", "hints", "models", "tasks", "export_dataset", "seed", "levels", "n_new", "cap",
                    "objectives", "output_dir", "test_fraction", "known_holdout_fraction", "knn_k", "mlp", "logreg",
                    "novelty", "otdd", "disde"},
                   "");
        if (j.contains("dataset")) {
            c.dataset = j["dataset"].is_string() ? std::vector<std::string>{j["dataset"].get<std::string>()}
                                                 : j["dataset"].get<std::vector<std::string>>();
        }
        if (j.contains("hints")) c.hints = hints_from(j["hints"]);
        take(j, "models", c.models);
        take(j, "tasks", c.tasks);
        take(j, "export_dataset", c.export_dataset);
        take(j, "seed", c.seed);
        take(j, "levels", c.levels);
        take(j, "n_new", c.n_new);
        take(j, "cap", c.cap);
        if (j.contains("objectives")) {
            c.objectives.clear();
            for (const auto& o : j["objectives"]) c.objectives.push_back(parse_objective(o.get<std::string>()));
        }
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        take(j, "test_fraction", c.test_fraction);
        take(j, "known_holdout_fraction", c.known_holdout_fraction);
        take(j, "knn_k", c.knn_k);
        if (j.contains("mlp")) {
            const auto& m = j["mlp"];
            check_keys(m, {"hidden", "learning_rate", "epochs", "batch_size"}, "mlp");
            take(m, "hidden", c.mlp.hidden);
            take(m, "learning_rate", c.mlp.learning_rate);
            take(m, "epochs", c.mlp.epochs);
            take(m, "batch_size", c.mlp.batch_size);
        }
        if (j.contains("logreg")) {
            const auto& m = j["logreg"];
            check_keys(m, {"learning_rate", "max_epochs", "gradient_tolerance", "l2"}, "logreg");
            take(m, "learning_rate", c.logreg.learning_rate);
            take(m, "max_epochs", c.logreg.max_epochs);
            take(m, "gradient_tolerance", c.logreg.gradient_tolerance);
            take(m, "l2", c.logreg.l2);
        }
        if (j.contains("novelty")) {
            const auto& m = j["novelty"];
            check_keys(m, {"theta_min", "theta_max"}, "novelty");
            take(m, "theta_min", c.novelty.theta_min);
            take(m, "theta_max", c.novelty.theta_max);
        }
        if (j.contains("otdd")) {
            const auto& m = j["otdd"];
            check_keys(m, {"entropic_epsilon", "relative_epsilon", "max_iterations", "marginal_tolerance",
                           "subsample_cap"},
                       "otdd");
            take(m, "entropic_epsilon", c.otdd.entropic_epsilon);
            take(m, "relative_epsilon", c.otdd.relative_epsilon);
            take(m, "max_iterations", c.otdd.max_iterations);
            take(m, "marginal_tolerance", c.otdd.marginal_tolerance);
            take(m, "subsample_cap", c.otdd.subsample_cap);
        }
        if (j.contains("disde")) {
            const auto& m = j["disde"];
            check_keys(m, {"eta", "k", "max_overlap_points"}, "disde");
            take(m, "eta", c.disde.eta);
            take(m, "k", c.disde.k);
            take(m, "max_overlap_points", c.disde.max_overlap_points);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::filesystem::path resolve_dataset(const std::string& name_or_path) {
    const std::filesystem::path given(name_or_path);
    if (std::filesystem::exists(given)) return given;
    std::vector<std::filesystem::path> dirs;
    if (const char* env = std::getenv("OPENENV_DATA_PATH")) {
        std::stringstream ss(env);
        for (std::string d; std::getline(ss, d, ':');) {
            if (!d.empty()) dirs.emplace_back(d);
        }
    }
    if (std::string_view(OPENENV_DATA_DIR).size()) dirs.emplace_back(OPENENV_DATA_DIR);
    if (!given.has_extension() && !given.has_parent_path()) {
        const auto file = lower(name_or_path) + ".csv";
        for (const auto& d : dirs) {
            if (std::filesystem::exists(d / file)) return d / file;
        }
    }
    throw DataError("missing file: " + name_or_path + " (not a path or a registered dataset name)");
}

std::string ResultRecord::key() const { return scenario + "|" + model + "|" + metric; }

std::string prediction_file_stem(std::string_view scenario) {
    std::string s(scenario);
    for (auto& ch : s) {
        const auto u = static_cast<unsigned char>(ch);
        if (!(std::isalnum(u) || ch == '.' || ch == '-' || ch == '_')) ch = '_';
    }
    return s;
}

RunResult run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    RunResult out;
    Context ctx{cfg, {}, {}, {}, {}, out, {}};
    for (const auto& d : cfg.dataset) {
        ctx.sources.push_back(resolve_dataset(d).string());
        ctx.dataset_label += (ctx.dataset_label.empty() ? "" : "+") + d;
    }
    for (const auto& m : cfg.models) ctx.models.push_back(parse_model(m));
    ScenarioRecipe r;
    r.sources = ctx.sources;
    r.hints = cfg.hints;
    ctx.source = load_recipe_source(r);

    for (const auto& task : cfg.tasks) {
        if (task == "enc") run_enc(ctx);
        else if (task == "df") run_df(ctx);
        else if (task == "inf") run_inf(ctx);
        else if (task == "cdd") run_cdd(ctx);
        else run_vlo(ctx);
    }
    if (ctx.models.size() >= 2) out.tables.push_back(rank_report(ctx.ranks));
    return out;
}

RunResult run(const RunConfig& cfg) {
    auto result = run_pipeline(cfg);
    const auto& dir = cfg.output_dir;
    emit_report(result.tables, ReportFormat::plain, dir / "report.txt");
    emit_report(result.tables, ReportFormat::structured, dir / "report.json");

    {
        auto out = csv::open_output(dir / "results.jsonl");
        for (const auto& r : result.records) {
            json j;
            j["task"] = r.task;
            j["scenario"] = r.scenario;
            j["model"] = r.model;
            j["metric"] = r.metric;
            j["value"] = std::isfinite(r.value) ? json(r.value) : json(nullptr);
            json prov = json::object();
            for (const auto& [k, v] : r.provenance) prov[k] = v;
            j["provenance"] = prov;
            out << j.dump() << '\n';
        }
        if (!out) throw DataError("failed writing " + (dir / "results.jsonl").string());
    }

    json manifest;
    manifest["config"] = json::parse(run_config_json(cfg));
    json counts = json::object();
    for (const auto& [k, v] : result.training_invocations) counts[k] = v;
    manifest["training_invocations"] = counts;
    manifest["records"] = result.records.size();
    manifest["tables"] = result.tables.size();
    manifest["outputs"] = {"report.txt", "report.json", "results.jsonl", "run_manifest.json"};
    auto out = csv::open_output(dir / "run_manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("failed writing " + (dir / "run_manifest.json").string());
    return result;
}

}  // namespace openenv
