#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "openenv/error.hpp"
#include "openenv/pipeline.hpp"
#include "openenv/scenario.hpp"

namespace {

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::size_t start = 0;
        while (start <= item.size()) {
            const auto comma = item.find(',', start);
            const auto piece = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!piece.empty()) out.push_back(piece);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::vector<std::string>& items, const char* flag, Parse parse) {
    std::vector<T> out;
    for (const auto& s : split_list(items)) {
        try {
            std::size_t used = 0;
            out.push_back(parse(s, &used));
            if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::logic_error&) {
            throw openenv::ConfigError(std::string("bad value '") + s + "' for " + flag);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-environment evaluation of tabular models: scenario generation, scoring and shift statistics"};
    app.option_defaults()->delimiter('\0');

    std::vector<std::string> dataset, models, tasks, levels, n_new, objectives, categorical;
    std::string config_path, out_dir, hints_path, target, split_column, replay;
    std::uint64_t seed = 0;
    std::size_t cap = 0, k = 0;
    bool export_dataset = false;

    app.add_option("--dataset", dataset, "CSV path or registered name; three paths give train, id_test, ood_test")
        ->expected(1, 3);
    app.add_option("--model", models, "knn, logreg, mlp or external:<prediction-dir> (comma separated)");
    app.add_option("--task", tasks, "enc, df, inf, cdd, vlo (comma separated)");
    app.add_flag("--export-dataset", export_dataset, "write the generated scenario datasets under <out>/scenarios");
    auto* seed_opt = app.add_option("--seed", seed, "random seed");
    app.add_option("--levels", levels, "decremental shift levels, e.g. 0,0.2,0.4");
    app.add_option("--n-new", n_new, "numbers of added features for inf, e.g. 1,5,10");
    auto* cap_opt = app.add_option("--cap", cap, "total row cap for cdd");
    app.add_option("--objectives", objectives, "accuracy, balanced_accuracy, f1, roc_auc, aupr, rmse");
    auto* k_opt = app.add_option("--k", k, "neighbours for the built-in knn");
    app.add_option("--out", out_dir, "output directory (default: results)");
    app.add_option("--config", config_path, "JSON run config; a previous run_manifest.json also works");
    app.add_option("--hints", hints_path, "schema hints file (key = value lines)");
    app.add_option("--target", target, "target column name");
    app.add_option("--split-column", split_column, "column tagging rows as train / id_test / ood_test");
    app.add_option("--categorical", categorical, "categorical feature columns (comma separated)");
    app.add_option("--replay", replay, "rebuild an exported scenario from its manifest.json into --out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!replay.empty()) {
            if (out_dir.empty()) throw openenv::ConfigError("--replay needs --out");
            openenv::replay_manifest(replay, out_dir);
            std::cout << "scenario rebuilt in " << out_dir << "\n";
            return 0;
        }

        openenv::RunConfig cfg;
        if (!config_path.empty()) cfg = openenv::load_run_config(config_path);
        if (!hints_path.empty()) cfg.hints = openenv::read_hints(hints_path);
        if (!target.empty()) cfg.hints.target = target;
        if (!split_column.empty()) cfg.hints.split_column = split_column;
        if (!categorical.empty()) cfg.hints.categorical = split_list(categorical);
        if (!dataset.empty()) cfg.dataset = dataset;
        if (!models.empty()) cfg.models = split_list(models);
        if (!tasks.empty()) cfg.tasks = split_list(tasks);
        if (export_dataset) cfg.export_dataset = true;
        if (*seed_opt) cfg.seed = seed;
        if (*cap_opt) cfg.cap = cap;
        if (*k_opt) cfg.knn_k = k;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (!levels.empty()) {
            cfg.levels = parse_list<double>(levels, "--levels",
                                            [](const std::string& s, std::size_t* n) { return std::stod(s, n); });
        }
        if (!n_new.empty()) {
            cfg.n_new = parse_list<std::size_t>(n_new, "--n-new", [](const std::string& s, std::size_t* n) {
                if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
                return static_cast<std::size_t>(std::stoull(s, n));
            });
        }
        if (!objectives.empty()) {
            cfg.objectives.clear();
            for (const auto& o : split_list(objectives)) cfg.objectives.push_back(openenv::parse_objective(o));
        }
        if (cfg.dataset.empty()) throw openenv::ConfigError("--dataset is required");

        const auto result = openenv::run(cfg);
        std::cout << "wrote " << result.tables.size() << " tables and " << result.records.size() << " results to "
                  << cfg.output_dir.string() << "\n";
        return 0;
    } catch (const openenv::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const openenv::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
