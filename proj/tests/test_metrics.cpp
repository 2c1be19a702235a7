#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "openenv/error.hpp"
#include "openenv/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace openenv;

namespace {

PredictionSet probs(const std::vector<std::vector<double>>& rows, std::vector<int> order = {}) {
    PredictionSet p;
    p.kind = PredictionKind::class_probs;
    const auto k = static_cast<Eigen::Index>(rows.front().size());
    p.probs.resize(static_cast<Eigen::Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        p.sample_ids.push_back(std::to_string(i));
        for (Eigen::Index c = 0; c < k; ++c) p.probs(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    if (order.empty()) {
        for (Eigen::Index c = 0; c < k; ++c) order.push_back(static_cast<int>(c));
    }
    p.class_order = order;
    return p;
}

}  // namespace

TEST_CASE("accuracy and balanced accuracy") {
    const std::vector<int> y{0, 1, 0, 0, 1, 0}, p{0, 1, 0, 0, 0, 1};
    CHECK(accuracy(y, p) == doctest::Approx(4.0 / 6.0));
    CHECK(balanced_accuracy(y, p) == doctest::Approx(0.625));
    CHECK(accuracy(y, y) == 1.0);
    CHECK(balanced_accuracy(y, y) == 1.0);

    std::vector<int> skew(100, 0), zeros(100, 0);
    for (int i = 0; i < 10; ++i) skew[static_cast<std::size_t>(i)] = 1;
    CHECK(accuracy(skew, zeros) == doctest::Approx(0.9));
    CHECK(balanced_accuracy(skew, zeros) == doctest::Approx(0.5));

    const std::vector<int> three{0, 1, 2, 2, 1, 0, 2}, constant(7, 2);
    CHECK(balanced_accuracy(three, constant) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST_CASE("accuracy ignores consistent relabelling") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<int> y(30), p(30);
        for (auto& v : y) v = static_cast<int>(rng() % 4);
        for (auto& v : p) v = static_cast<int>(rng() % 4);
        std::vector<int> perm{0, 1, 2, 3};
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> y2, p2;
        for (int v : y) y2.push_back(perm[static_cast<std::size_t>(v)]);
        for (int v : p) p2.push_back(perm[static_cast<std::size_t>(v)]);
        CHECK(accuracy(y, p) == accuracy(y2, p2));
    }
}

TEST_CASE("f1") {
    CHECK(f1(std::vector<int>{1, 0, 1}, std::vector<int>{1, 1, 0}, F1Averaging::binary) == doctest::Approx(0.5));
    CHECK(f1(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 0}, F1Averaging::binary) == 0.0);
    const std::vector<int> y{0, 1, 2, 0, 1, 2};
    CHECK(f1(y, y, F1Averaging::macro) == doctest::Approx(1.0));
    CHECK_THROWS_AS(f1(std::vector<int>{}, std::vector<int>{}, F1Averaging::binary), DataError);
}

TEST_CASE("roc-auc and aupr") {
    const std::vector<int> y{0, 0, 1, 1};
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    CHECK(roc_auc(y, s) == doctest::Approx(0.75));
    const std::vector<double> separated{0.1, 0.2, 0.8, 0.9};
    CHECK(roc_auc(y, separated) == 1.0);
    CHECK(aupr(y, separated) == 1.0);
    CHECK_THROWS_WITH_AS(roc_auc(std::vector<int>{1, 1}, std::vector<double>{0.2, 0.3}),
                         doctest::Contains("undefined AUC"), DataError);

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> big(1000);
    std::vector<double> noise(1000);
    for (std::size_t i = 0; i < big.size(); ++i) {
        big[i] = static_cast<int>(i % 2);
        noise[i] = u(rng);
    }
    CHECK(std::abs(roc_auc(big, noise) - 0.5) <= 0.05);
}

TEST_CASE("auc and aupr match brute-force oracles") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 49;
        std::vector<int> y(n);
        std::vector<double> s(n);
        const int levels = 1 + static_cast<int>(rng() % 8);  // coarse scores force ties
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng() % 2);
            s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
        }
        y[0] = 0;
        y[1] = 1;
        CHECK(std::abs(roc_auc(y, s) - oracle::pair_count_auc(y, s)) <= 1e-12);
        CHECK(std::abs(aupr(y, s) - oracle::threshold_sweep_aupr(y, s)) <= 1e-12);

        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(roc_auc(y, t) == roc_auc(y, s));
        CHECK(aupr(y, t) == aupr(y, s));
    }
}

TEST_CASE("macro one-vs-rest auc") {
    const std::vector<int> y{0, 1, 2, 0, 1, 2};
    const auto p = probs({{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8},
                          {0.7, 0.2, 0.1}, {0.2, 0.7, 0.1}, {0.2, 0.1, 0.7}});
    CHECK(roc_auc_ovr(y, p) == doctest::Approx(1.0));
}

TEST_CASE("rmse") {
    const std::vector<double> a{1.0, 2.0}, b{4.0, -2.0};
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, -4.0}) == doctest::Approx(std::sqrt(12.5)));
    CHECK(rmse(a, std::vector<double>{1.7, 2.7}) == doctest::Approx(0.7));
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST_CASE("performance gap") {
    CHECK(std::round(performance_gap(0.838, 0.764, GapMode::absolute) * 1000.0) / 1000.0 == -0.074);
    CHECK(performance_gap(0.838, 0.764, GapMode::relative) == doctest::Approx(-0.0883).epsilon(1e-3));
    CHECK(performance_gap(0.5, 0.5, GapMode::absolute) == 0.0);
    CHECK(performance_gap(0.5, 0.5, GapMode::relative) == 0.0);
    CHECK_THROWS_AS(performance_gap(0.0, 0.5, GapMode::relative), DataError);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double a = u(rng), b = u(rng);
        CHECK((performance_gap(a, b, GapMode::absolute) > 0) == (performance_gap(a, b, GapMode::relative) > 0));
    }
}

TEST_CASE("novelty scores and uncertainty share") {
    const auto p = probs({{0.9, 0.1}, {0.5, 0.5}});
    const auto s = novelty_score(p);
    CHECK(s[0] == doctest::Approx(0.1));
    CHECK(s[1] == doctest::Approx(0.5));
    CHECK(novelty_score(probs({{0.25, 0.25, 0.25, 0.25}}))[0] == doctest::Approx(0.75));

    const auto q = probs({{0.55, 0.45, 0.0}, {0.9, 0.1, 0.0}, {0.45, 0.35, 0.2}});
    CHECK(uncertainty_proportion(q, {0.4, 0.6}) == doctest::Approx(2.0 / 3.0));
    CHECK(uncertainty_proportion(q, {0.0, 1.0}) == 1.0);
    CHECK(uncertainty_proportion(q, {0.95, 1.0}) == 0.0);
    CHECK_THROWS_AS(uncertainty_proportion(q, {0.6, 0.4}), ConfigError);
}

namespace {

EncRun fake_run(int held_out, std::size_t n) {
    EncRun run;
    run.held_out_class = held_out;
    run.n_novel = n;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 1);
    std::vector<double> y(2 * n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0;
    run.detection_test = testing::make_dataset(x, y, TaskType::binary);
    return run;
}

}  // namespace

TEST_CASE("enc evaluation") {
    SUBCASE("confident known rows, uniform novel rows") {
        const std::vector<EncRun> runs{fake_run(0, 3)};
        const auto p = probs({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {1.0, 0.0}, {0.0, 1.0}, {0.9, 0.1}});
        const auto report = enc_evaluate(runs, std::vector<PredictionSet>{p});
        CHECK(report.runs[0].roc_auc == 1.0);
        CHECK(report.runs[0].aupr == 1.0);
        CHECK(report.runs[0].interval_roc_auc == 1.0);
        CHECK(report.runs[0].uncertainty[0] == 1.0);
    }
    SUBCASE("mean over runs") {
        const std::vector<EncRun> runs{fake_run(0, 2), fake_run(1, 2), fake_run(2, 2)};
        const std::vector<PredictionSet> preds{
            probs({{0.6, 0.4}, {0.6, 0.4}, {0.6, 0.4}, {0.6, 0.4}}),
            probs({{0.6, 0.4}, {0.75, 0.25}, {0.7, 0.3}, {0.8, 0.2}}),
            probs({{0.5, 0.5}, {0.5, 0.5}, {0.9, 0.1}, {0.9, 0.1}})};
        const auto report = enc_evaluate(runs, preds);
        CHECK(report.runs[0].roc_auc == 0.5);
        CHECK(report.runs[1].roc_auc == 0.75);
        CHECK(report.runs[2].roc_auc == 1.0);
        CHECK(report.mean.roc_auc == doctest::Approx(0.75));
    }
    SUBCASE("id mismatch") {
        const std::vector<EncRun> runs{fake_run(0, 2)};
        auto p = probs({{0.6, 0.4}, {0.6, 0.4}, {0.6, 0.4}, {0.6, 0.4}});
        p.sample_ids[3] = "stranger";
        CHECK_THROWS_AS(enc_evaluate(runs, std::vector<PredictionSet>{p}), DataError);
    }
    SUBCASE("shuffled scores average to one half") {
        std::mt19937_64 rng(99);
        const std::size_t n = 20;
        double total = 0.0;
        for (int s = 0; s < 100; ++s) {
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < 2 * n; ++i) {
                const double top = 0.5 + 0.5 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                rows.push_back({top, 1.0 - top});
            }
            total += enc_evaluate(std::vector<EncRun>{fake_run(0, n)}, std::vector<PredictionSet>{probs(rows)})
                         .mean.roc_auc;
        }
        CHECK(std::abs(total / 100.0 - 0.5) <= 0.05);
    }
}

TEST_CASE("rank table") {
    const std::vector<double> v{0.9, 0.8, 0.8};
    CHECK(rank_cell(v, true) == std::vector<double>{1.0, 2.5, 2.5});
    CHECK(rank_cell(v, false) == std::vector<double>{3.0, 1.5, 1.5});

    Eigen::MatrixXd dominant(2, 3);
    dominant << 0.9, 0.8, 0.1, 0.5, 0.4, 0.3;
    const bool flags[] = {true, true, false};
    const auto r = rank_table(dominant, flags);
    CHECK(r.mean_rank[0] == 1.0);
    CHECK(r.mean_rank[1] == 2.0);
    CHECK(r.cell_ranks(0, 2) == 1.0);

    Eigen::MatrixXd m(3, 4);
    m << 0.9, 0.7, 1.0, 2.0,
         0.8, 0.7, 2.0, 1.0,
         0.8, 0.6, 3.0, 3.0;
    const bool hib[] = {true, true, false, false};
    const std::size_t groups[] = {0, 0, 1, 1};
    const auto two = rank_table(m, hib, groups);
    CHECK(two.group_ranks(0, 0) == doctest::Approx((1.0 + 1.5) / 2.0));
    CHECK(two.group_ranks(1, 0) == doctest::Approx((2.5 + 1.5) / 2.0));
    CHECK(two.group_ranks(2, 0) == doctest::Approx((2.5 + 3.0) / 2.0));
    CHECK(two.group_ranks(0, 1) == doctest::Approx(1.5));
    CHECK(two.mean_rank[0] == doctest::Approx((1.25 + 1.5) / 2.0));
    for (Eigen::Index c = 0; c < 4; ++c) CHECK(two.cell_ranks.col(c).sum() == doctest::Approx(6.0));

    m(1, 1) = std::nan("");
    CHECK_THROWS_AS(rank_table(m, hib, groups), DataError);
}

TEST_CASE("objective applicability and evaluation") {
    CHECK(applies_to(Objective::rmse, TaskType::regression));
    CHECK(!applies_to(Objective::rmse, TaskType::binary));
    CHECK(!applies_to(Objective::accuracy, TaskType::regression));
    CHECK(!higher_is_better(Objective::rmse));
    CHECK(parse_objective("balanced_accuracy") == Objective::balanced_accuracy);
    CHECK_THROWS_AS(parse_objective("logloss"), ConfigError);

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
    const auto ds = testing::make_dataset(x, {0, 1, 1, 0}, TaskType::binary);
    auto p = probs({{0.2, 0.8}, {0.3, 0.7}, {0.1, 0.9}, {0.6, 0.4}});
    std::reverse(p.sample_ids.begin(), p.sample_ids.end());  // evaluation matches by id
    p.probs.colwise().reverseInPlace();
    CHECK(evaluate(Objective::accuracy, ds, p) == doctest::Approx(0.75));
    CHECK_THROWS_AS(evaluate(Objective::rmse, ds, p), ConfigError);
}
