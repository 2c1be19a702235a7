#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "openenv/error.hpp"
#include "openenv/models.hpp"
#include "support.hpp"

using namespace openenv;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(a.norm() + b.norm(), 1e-12);
    return (a - b).norm() / scale;
}

// Central differences over every entry of `param`, recomputing the loss through `model`.
template <typename Param>
Eigen::MatrixXd numeric_gradient(MlpModel& model, Param& param, const Eigen::MatrixXd& x,
                                 const std::vector<double>& t) {
    const double h = 1e-6;
    Eigen::MatrixXd out(param.rows(), param.cols());
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + h;
        const double up = mlp_loss_gradient(model, x, t).loss;
        param.data()[i] = keep - h;
        const double down = mlp_loss_gradient(model, x, t).loss;
        param.data()[i] = keep;
        out.data()[i] = (up - down) / (2.0 * h);
    }
    return out;
}

}  // namespace

TEST_CASE("nearest neighbours") {
    Eigen::MatrixXd ref(4, 1);
    ref << 1.0, -1.0, 2.0, 1.0;
    const Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(1);
    CHECK(nearest_neighbors(ref, q, 3) == std::vector<std::size_t>{0, 1, 3});
    CHECK(nearest_neighbors(ref, q, 1) == std::vector<std::size_t>{0});

    Eigen::MatrixXd x(6, 1);
    x << 0.0, 0.1, 0.2, 5.0, 5.1, 5.2;
    const auto ds = testing::make_dataset(x, {0, 0, 0, 1, 1, 1}, TaskType::binary);
    const auto model = knn_fit(ds, 3);
    Eigen::MatrixXd probe(2, 1);
    probe << 0.05, 4.0;
    const auto p = knn_predict_proba(model, probe, {"a", "b"});
    CHECK(p.probs(0, 0) == 1.0);
    CHECK(p.probs(1, 1) == 1.0);
    CHECK(p.predicted_classes() == std::vector<int>{0, 1});
    CHECK_THROWS_AS(knn_fit(ds, 7), ConfigError);

    auto reg = testing::make_dataset(x, {1, 2, 3, 10, 20, 30}, TaskType::regression);
    const auto r = knn_predict_proba(knn_fit(reg, 2), probe, {"a", "b"});
    CHECK(r.kind == PredictionKind::regression);
    CHECK(r.values[0] == doctest::Approx(1.5));
}

TEST_CASE("knn tie votes go to the first class") {
    Eigen::MatrixXd x(2, 1);
    x << -1.0, 1.0;
    const auto ds = testing::make_dataset(x, {1, 0}, TaskType::binary);
    const auto p = knn_predict_proba(knn_fit(ds, 2), Eigen::MatrixXd::Zero(1, 1), {"q"});
    CHECK(p.probs(0, 0) == 0.5);
    CHECK(p.predicted_classes()[0] == 0);
}

TEST_CASE("logistic regression") {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd x = gaussian_matrix(200, 3, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> y(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
        const double z = 1.5 * x(i, 0) - x(i, 1) + 0.3;
        y[static_cast<std::size_t>(i)] = u(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
    }
    const auto m = logreg_fit(x, y);
    CHECK(m.gradient_norm <= 1e-6);
    CHECK(m.epochs < m.config.max_epochs);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1] + 1e-15);

    // Independent check of the stationarity condition X'(p - y) = 0.
    const Eigen::VectorXd p = logreg_probability(m, x);
    Eigen::VectorXd r(200);
    for (Eigen::Index i = 0; i < 200; ++i) r[i] = p[i] - y[static_cast<std::size_t>(i)];
    CHECK((x.transpose() * r).norm() / 200.0 <= 1e-6);
    CHECK(std::abs(r.mean()) <= 1e-6);
    CHECK(m.weights[0] > 0.5);
    CHECK(m.weights[1] < -0.3);

    const std::vector<int> bad{0, 2};
    CHECK_THROWS_AS(logreg_fit(Eigen::MatrixXd::Zero(2, 1), bad), ConfigError);
}

TEST_CASE("mlp gradient matches finite differences") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        MlpConfig cfg;
        cfg.hidden = 2 + rng() % 6;
        cfg.seed = rng();
        const auto d = static_cast<Eigen::Index>(1 + rng() % 4);
        const bool regression = trial % 4 == 3;
        const std::size_t outputs = regression ? 1 : 2 + rng() % 3;
        auto model = mlp_init(static_cast<std::size_t>(d), outputs,
                              regression ? TaskType::regression : TaskType::multiclass, cfg);
        const Eigen::MatrixXd x = gaussian_matrix(7, d, rng);
        std::vector<double> t(7);
        for (auto& v : t) v = regression ? std::normal_distribution<double>(0.0, 1.0)(rng) : static_cast<double>(rng() % outputs);

        const auto g = mlp_loss_gradient(model, x, t);
        CHECK(relative_error(g.w1, numeric_gradient(model, model.w1, x, t)) <= 1e-4);
        CHECK(relative_error(g.b1, numeric_gradient(model, model.b1, x, t)) <= 1e-4);
        CHECK(relative_error(g.w2, numeric_gradient(model, model.w2, x, t)) <= 1e-4);
        CHECK(relative_error(g.b2, numeric_gradient(model, model.b2, x, t)) <= 1e-4);
    }
}

TEST_CASE("mlp learns xor") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 0, 1, 1, 0, 1, 1;
    const auto ds = testing::make_dataset(x, {0, 1, 1, 0}, TaskType::binary);
    MlpConfig cfg;
    cfg.hidden = 16;
    cfg.learning_rate = 0.1;
    cfg.epochs = 2000;
    cfg.seed = 3;
    const auto m = mlp_fit(ds, cfg);
    const auto p = mlp_predict_proba(m, ds);
    CHECK(p.predicted_classes() == std::vector<int>{0, 1, 1, 0});
    CHECK(m.epoch_loss.back() < m.epoch_loss.front());

    const auto again = mlp_fit(ds, cfg);
    CHECK(again.w1 == m.w1);
    CHECK(mlp_activations(m, x).cols() == 16);
    CHECK((mlp_activations(m, x).array() >= 0.0).all());
}

TEST_CASE("per-sample loss") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
    const auto ds = testing::make_dataset(x, {0, 1, 1}, TaskType::binary);
    PredictionSet p;
    p.sample_ids = {"2", "0", "1"};
    p.class_order = {0, 1};
    p.probs.resize(3, 2);
    p.probs << 0.5, 0.5, 0.9, 0.1, 0.8, 0.2;
    CHECK(per_sample_loss(p, ds, LossKind::zero_one) == std::vector<double>{0.0, 1.0, 1.0});
    const auto log = per_sample_loss(p, ds, LossKind::log);
    CHECK(log[0] == doctest::Approx(-std::log(0.9)));
    CHECK(log[1] == doctest::Approx(-std::log(0.2)));
    CHECK(log[2] == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(per_sample_loss(p, ds, LossKind::squared), ConfigError);

    auto reg = testing::make_dataset(x, {1.0, 2.0, 3.0}, TaskType::regression);
    PredictionSet r;
    r.kind = PredictionKind::regression;
    r.sample_ids = {"0", "1", "2"};
    r.values = Eigen::Vector3d(1.0, 0.0, 5.0);
    CHECK(per_sample_loss(r, reg, LossKind::squared) == std::vector<double>{0.0, 4.0, 4.0});
}

TEST_CASE("prediction files") {
    const auto dir = testing::scratch_dir("preds");
    PredictionManifest manifest;
    manifest.sample_ids = {"a", "b", "c"};
    manifest.class_names = {"no", "yes"};
    manifest.class_order = {0, 1};

    SUBCASE("round trip in manifest order") {
        PredictionSet p;
        p.sample_ids = {"c", "a", "b"};
        p.class_order = {0, 1};
        p.probs.resize(3, 2);
        p.probs << 0.1, 0.9, 0.25, 0.75, 0.5, 0.5;
        write_predictions(p, manifest.class_names, dir / "p.csv");
        const auto back = load_predictions(dir / "p.csv", manifest);
        CHECK(back.sample_ids == manifest.sample_ids);
        CHECK(back.probs(0, 1) == 0.75);
        CHECK(back.probs(2, 1) == 0.9);
    }
    SUBCASE("near-stochastic rows are renormalised") {
        testing::write_text(dir / "q.csv", "id,p_no,p_yes\na,0.3,0.7002\nb,0.5,0.5\nc,1,0\n");
        const auto p = load_predictions(dir / "q.csv", manifest);
        CHECK(p.probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(p.probs(0, 0) == doctest::Approx(0.3 / 1.0002));
    }
    SUBCASE("bad rows name the id") {
        testing::write_text(dir / "r.csv", "id,p_no,p_yes\na,0.3,0.7\nb,0.5,0.6\nc,1,0\n");
        CHECK_THROWS_WITH_AS(load_predictions(dir / "r.csv", manifest), doctest::Contains("id b"), DataError);
        testing::write_text(dir / "s.csv", "id,p_no,p_yes\na,0.3,0.7\nc,1,0\n");
        CHECK_THROWS_WITH_AS(load_predictions(dir / "s.csv", manifest), doctest::Contains("b"), DataError);
        testing::write_text(dir / "t.csv", "id,p_no,p_yes\na,0.3,0.7\nb,0.5,0.5\nc,1,0\nz,1,0\n");
        CHECK_THROWS_WITH_AS(load_predictions(dir / "t.csv", manifest), doctest::Contains("z"), DataError);
        testing::write_text(dir / "u.csv", "id,p_yes,p_no\na,0.3,0.7\nb,0.5,0.5\nc,1,0\n");
        CHECK_THROWS_AS(load_predictions(dir / "u.csv", manifest), DataError);
        CHECK_THROWS_WITH_AS(load_predictions(dir / "nope.csv", manifest), doctest::Contains("missing prediction file"),
                             DataError);
    }
    SUBCASE("regression values") {
        PredictionManifest reg;
        reg.sample_ids = {"a", "b"};
        testing::write_text(dir / "v.csv", "id,value\nb,2.5\na,-1\n");
        const auto p = load_predictions(dir / "v.csv", reg);
        CHECK(p.kind == PredictionKind::regression);
        CHECK(p.values[0] == -1.0);
        CHECK(p.values[1] == 2.5);
    }
}

TEST_CASE("embedding files") {
    const auto dir = testing::scratch_dir("emb");
    Embeddings e;
    e.sample_ids = {"x", "y"};
    e.values.resize(2, 3);
    e.values << 1.0, 0.5, -2.0, 0.125, 3.0, 1e-7;
    write_embeddings(e, dir / "e.csv");
    const auto back = load_embeddings(dir / "e.csv");
    CHECK(back.sample_ids == e.sample_ids);
    CHECK(back.values == e.values);
    testing::write_text(dir / "bad.csv", "id,e_1,e_3\nx,1,2\n");
    CHECK_THROWS_AS(load_embeddings(dir / "bad.csv"), DataError);
    testing::write_text(dir / "dup.csv", "id,e_1\nx,1\nx,2\n");
    CHECK_THROWS_WITH_AS(load_embeddings(dir / "dup.csv"), doctest::Contains("duplicate"), DataError);
}
