#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include <json.hpp>

#include "openenv/error.hpp"
#include "openenv/pipeline.hpp"
#include "openenv/report.hpp"
#include "support.hpp"

using namespace openenv;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OPENENV_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, double> by_key(const std::vector<ResultRecord>& records) {
    std::map<std::string, double> out;
    for (const auto& r : records) out[r.key()] = r.value;
    return out;
}

RunConfig iris_config(const std::string& task) {
    RunConfig cfg;
    cfg.dataset = {testing::iris_csv().string()};
    cfg.tasks = {task};
    cfg.models = {"knn", "mlp"};
    cfg.mlp.epochs = 50;
    return cfg;
}

}  // namespace

TEST_CASE("cell formatting") {
    CHECK(format_cell(ReportCell::with_gap(0.764, 0.764 - 0.838)) == "0.764(-0.074)");
    CHECK(format_cell(ReportCell::with_gap(1.025, 0.028)) == "1.025(+0.028)");
    CHECK(format_cell(ReportCell::with_gap(0.5, 0.0)) == "0.500(0.000)");
    CHECK(format_cell(ReportCell::with_gap(0.5, -1e-17)) == "0.500(0.000)");
    CHECK(format_cell(ReportCell::metric(0.93333)) == "0.933");
    CHECK(format_cell(ReportCell::ratio(-0.088305)) == "-0.0883");
    CHECK(format_cell(ReportCell::label("X-dominant")) == "X-dominant");
    CHECK(format_fixed(-0.0004, 3) == "0.000");
    CHECK(format_fixed(2.0, 0) == "2");
}

TEST_CASE("report rendering") {
    ReportTable t;
    t.caption = "demo";
    t.corner = "model";
    t.row_labels = {"knn"};
    t.column_labels = {"accuracy", "note"};
    t.cells = {{ReportCell::metric(0.9, "s|knn|accuracy"), std::nullopt}};
    t.footnotes = {"seed=0"};
    const std::vector<ReportTable> tables{t};
    const auto plain = render_report(tables, ReportFormat::plain);
    CHECK(plain.find("demo") == 0);
    CHECK(plain.find("0.900") != std::string::npos);
    CHECK(plain.find("  * seed=0") != std::string::npos);

    const auto json = nlohmann::json::parse(render_report(tables, ReportFormat::structured));
    CHECK(json["tables"][0]["rows"][0]["cells"][0]["trace"] == "s|knn|accuracy");
    CHECK(json["tables"][0]["rows"][0]["cells"][1].is_null());

    const auto dir = testing::scratch_dir("report");
    CHECK_THROWS_WITH_AS(emit_report(std::vector<ReportTable>{}, ReportFormat::plain, dir / "r.txt"),
                         doctest::Contains("no results"), DataError);
    CHECK(!std::filesystem::exists(dir / "r.txt"));

    auto broken = t;
    broken.cells[0].pop_back();
    CHECK_THROWS_AS(broken.check(), DataError);
}

TEST_CASE("rank report") {
    TaskScores a{"enc", {"m1", "m2", "m3"}, {"auc", "rmse"}, {true, false}, {{0.9, 1.0}, {0.8, 2.0}, {0.8, 3.0}}};
    TaskScores b{"df", {"m1", "m2", "m3"}, {"acc"}, {true}, {{0.5}, {0.7}, {0.6}}};
    const std::vector<TaskScores> tasks{a, b};
    const auto t = rank_report(tasks);
    REQUIRE(t.row_labels == std::vector<std::string>{"enc", "df", "Average Rank"});
    CHECK(t.cells[0][0]->value == 1.0);
    CHECK(t.cells[0][1]->value == doctest::Approx((2.5 + 2.0) / 2.0));
    CHECK(t.cells[0][2]->value == doctest::Approx((2.5 + 3.0) / 2.0));
    CHECK(t.cells[1][1]->value == 1.0);
    CHECK(t.cells[2][0]->value == doctest::Approx((1.0 + 3.0) / 2.0));
    CHECK(t.cells[2][1]->value == doctest::Approx((2.25 + 1.0) / 2.0));

    auto gap = a;
    gap.values[1][0] = std::nan("");
    CHECK_THROWS_AS(rank_report(std::vector<TaskScores>{gap}), DataError);
    TaskScores lonely{"enc", {"m1"}, {"auc"}, {true}, {{0.9}}};
    CHECK_THROWS_AS(rank_report(std::vector<TaskScores>{lonely}), DataError);
}

TEST_CASE("decremental task on iris") {
    const auto result = run_pipeline(iris_config("df"));
    const auto values = by_key(result.records);
    for (const char* model : {"knn", "mlp"}) {
        CHECK(result.training_invocations.at(std::string("df/") + model) == 1);
        CHECK(values.at(std::string("df/0|") + model + "|accuracy.gap_absolute") == 0.0);
    }
    const ReportTable* accuracy = nullptr;
    for (const auto& t : result.tables) {
        if (t.caption.rfind("df: accuracy under", 0) == 0) {
            accuracy = &t;
            break;
        }
    }
    REQUIRE(accuracy != nullptr);
    CHECK(accuracy->row_labels.size() == 6);
    CHECK(format_cell(*accuracy->cells[0][0]).find("(0.000)") != std::string::npos);
}

TEST_CASE("incremental task leaves metrics unchanged") {
    auto cfg = iris_config("inf");
    cfg.n_new = {1, 5, 10, 25};
    const auto result = run_pipeline(cfg);
    const auto values = by_key(result.records);
    std::size_t compared = 0;
    for (const auto& r : result.records) {
        if (r.scenario.rfind("inf/", 0) != 0 || r.scenario == "inf/base" || r.metric.find("gap") != std::string::npos) {
            continue;
        }
        CHECK(r.value == values.at("inf/base|" + r.model + "|" + r.metric));
        ++compared;
    }
    CHECK(compared >= 2 * 4 * 4);
}

TEST_CASE("enc task on iris") {
    auto cfg = iris_config("enc");
    cfg.models = {"knn"};
    const auto result = run_pipeline(cfg);
    CHECK(result.training_invocations.at("enc/knn") == 3);
    REQUIRE(!result.tables.empty());
    const auto& t = result.tables.front();
    CHECK(t.row_labels.size() == 4);
    CHECK(t.row_labels.back() == "Average");
}

TEST_CASE("external predictions") {
    const auto dir = testing::scratch_dir("external");
    std::ostringstream csv;
    csv << "id,x1,x2,label,split\n";
    for (int i = 0; i < 40; ++i) {
        const int y = i % 2;
        const char* split = i < 24 ? "train" : (i < 32 ? "id_test" : "ood_test");
        csv << "r" << i << "," << (y + 0.1 * i) << "," << (i % 3) << "," << (y ? "yes" : "no") << "," << split << "\n";
    }
    testing::write_text(dir / "tagged.csv", csv.str());

    RunConfig cfg;
    cfg.dataset = {(dir / "tagged.csv").string()};
    cfg.hints.target = "label";
    cfg.hints.id_column = "id";
    cfg.hints.split_column = "split";
    cfg.tasks = {"vlo"};
    cfg.models = {"external:" + (dir / "preds").string()};
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("vlo_id_test"), DataError);

    std::ostringstream p;
    p << "id,p_no,p_yes\n";
    for (int i = 24; i < 32; ++i) p << "r" << i << "," << (i % 2 ? "0.1,0.9" : "0.8,0.2") << "\n";
    testing::write_text(dir / "preds" / (prediction_file_stem("vlo/id_test") + ".csv"), p.str());
    const auto result = run_pipeline(cfg);
    const auto values = by_key(result.records);
    CHECK(values.at("vlo/id_test|external:" + (dir / "preds").string() + "|accuracy") == 1.0);
    CHECK(result.training_invocations.empty());
}

TEST_CASE("run config round trip") {
    auto cfg = iris_config("df");
    cfg.levels = {0.0, 0.5};
    cfg.seed = 9;
    const auto back = parse_run_config(run_config_json(cfg));
    CHECK(run_config_json(back) == run_config_json(cfg));
    CHECK(back.levels == cfg.levels);
    CHECK_THROWS_AS(parse_run_config(R"({"dataset":["x.csv"],"colour":1})"), ConfigError);
    cfg.tasks = {"nope"};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("command line") {
    const auto dir = testing::scratch_dir("cli");
    const std::string iris = testing::iris_csv().string();
    const std::string common = "--dataset " + iris + " --task enc,df,inf --model knn,mlp --seed 3";

    SUBCASE("repeated runs are byte-identical") {
        REQUIRE(run_cli(common + " --out " + (dir / "a").string()) == 0);
        REQUIRE(run_cli(common + " --out " + (dir / "b").string()) == 0);
        for (const char* f : {"report.txt", "report.json", "results.jsonl"}) {
            const auto a = testing::read_text(dir / "a" / f);
            CHECK(!a.empty());
            CHECK(a == testing::read_text(dir / "b" / f));
        }
        // The manifest replays the same run.
        REQUIRE(run_cli("--config " + (dir / "a" / "run_manifest.json").string() + " --out " + (dir / "c").string()) == 0);
        CHECK(testing::read_text(dir / "a" / "report.txt") == testing::read_text(dir / "c" / "report.txt"));
    }
    SUBCASE("exit codes") {
        CHECK(run_cli("--dataset " + iris + " --task nope --out " + (dir / "x").string()) == 2);
        CHECK(run_cli("--dataset " + iris + " --levels 0,abc --out " + (dir / "x").string()) == 2);
        CHECK(run_cli("--bogus-flag") == 2);
        CHECK(run_cli("--task enc") == 2);
        CHECK(run_cli("--dataset " + (dir / "absent.csv").string() + " --out " + (dir / "x").string()) == 3);
        CHECK(run_cli("--dataset " + iris + " --model external:" + (dir / "none").string() + " --out " +
                      (dir / "x").string()) == 3);
    }
}
