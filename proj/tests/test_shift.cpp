#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "openenv/error.hpp"
#include "openenv/shift.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace openenv;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd c(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) c(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
    return c;
}

GaussianSummary one_dim(double mu, double sigma) {
    GaussianSummary g;
    g.mean = Eigen::VectorXd::Constant(1, mu);
    g.covariance = Eigen::MatrixXd::Constant(1, 1, sigma * sigma);
    return g;
}

}  // namespace

TEST_CASE("gaussian summary matches a loop covariance") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const Eigen::MatrixXd x = gaussian_matrix(30, 4, rng);
        const auto g = gaussian_summary(x);
        CHECK((g.covariance - oracle::covariance(x)).norm() <= 1e-12);
        CHECK((g.mean - x.colwise().mean().transpose()).norm() <= 1e-12);
        CHECK(g.n == 30);
    }
    CHECK_THROWS_AS(gaussian_summary(Eigen::MatrixXd::Zero(1, 3)), DataError);
}

TEST_CASE("spd square root") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 120; ++t) {
        const auto d = static_cast<Eigen::Index>(1 + rng() % 20);
        const Eigen::MatrixXd b = gaussian_matrix(d, d, rng);
        const Eigen::MatrixXd a = b * b.transpose() + 1e-3 * Eigen::MatrixXd::Identity(d, d);
        const Eigen::MatrixXd r = spd_sqrt(a);
        CHECK((r * r - a).norm() / a.norm() <= 1e-8);
        CHECK((r - r.transpose()).norm() <= 1e-10);
    }
    Eigen::MatrixXd lopsided(2, 2);
    lopsided << 1.0, 2.0, 0.0, 1.0;
    CHECK_THROWS_AS(spd_sqrt(lopsided), DataError);
}

TEST_CASE("bures-wasserstein distance") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> mu(-5.0, 5.0), sigma(0.01, 3.0);

    SUBCASE("one-dimensional closed form") {
        for (int t = 0; t < 150; ++t) {
            const double m1 = mu(rng), m2 = mu(rng), s1 = sigma(rng), s2 = sigma(rng);
            const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
            CHECK(std::abs(gaussian_w2(one_dim(m1, s1), one_dim(m2, s2)) - expected) <= 1e-9);
        }
    }
    SUBCASE("self-distance, symmetry, mean shift") {
        for (int t = 0; t < 50; ++t) {
            const auto d = static_cast<Eigen::Index>(1 + rng() % 8);
            const auto g1 = gaussian_summary(gaussian_matrix(40, d, rng));
            auto g2 = gaussian_summary(gaussian_matrix(40, d, rng) * 1.5);
            CHECK(gaussian_w2(g1, g1) <= 1e-9);
            CHECK(std::abs(gaussian_w2(g1, g2) - gaussian_w2(g2, g1)) <= 1e-9);
            auto moved = g1;
            const Eigen::VectorXd v = gaussian_matrix(d, 1, rng);
            moved.mean += v;
            CHECK(gaussian_w2(g1, moved) == doctest::Approx(v.squaredNorm()).epsilon(1e-9));
        }
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(gaussian_w2(one_dim(0, 1), gaussian_summary(gaussian_matrix(5, 2, rng))), DataError);
    }
}

TEST_CASE("frechet distance of embeddings") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd a = gaussian_matrix(60, 3, rng);
    const Eigen::MatrixXd b = gaussian_matrix(60, 3, rng).array() + 2.0;
    CHECK(fdd(a, a) <= 1e-9);
    CHECK(fdd(a, b) > 10.0);

    // A common rotation leaves the distance unchanged.
    const Eigen::MatrixXd q = gaussian_matrix(3, 3, rng).householderQr().householderQ();
    CHECK(fdd(a * q, b * q) == doctest::Approx(fdd(a, b)).epsilon(1e-9));

    const std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> layers{{a, a}, {a, b}};
    CHECK(fdd_layers(layers, FddAggregation::final_layer) == doctest::Approx(fdd(a, b)));
    CHECK(fdd_layers(layers, FddAggregation::sum_layers) == doctest::Approx(fdd(a, a) + fdd(a, b)));
    CHECK_THROWS_AS(fdd(a, gaussian_matrix(60, 2, rng)), DataError);
}

TEST_CASE("label shift") {
    std::vector<int> train(10, 0), test(10, 0);
    for (int i = 0; i < 5; ++i) train[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < 3; ++i) test[static_cast<std::size_t>(i)] = 1;
    CHECK(label_shift(train, test) == doctest::Approx(0.04));
    CHECK(label_shift(train, train) == 0.0);
    CHECK_THROWS_WITH_AS(label_shift(std::vector<int>{0, 2}, test), doctest::Contains("binary"), DataError);
}

TEST_CASE("sinkhorn") {
    OtddConfig cfg;
    cfg.max_iterations = 200000;
    cfg.marginal_tolerance = 1e-9;

    SUBCASE("zero cost gives the product coupling") {
        const Eigen::VectorXd a = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
        const Eigen::VectorXd b = Eigen::VectorXd::Constant(2, 0.5);
        const auto r = sinkhorn(Eigen::MatrixXd::Zero(3, 2), a, b, cfg);
        CHECK(r.cost == 0.0);
        CHECK((r.coupling - a * b.transpose()).norm() <= 1e-9);
    }
    SUBCASE("two points, small epsilon") {
        Eigen::MatrixXd c(2, 2);
        c << 0.0, 1.0, 1.0, 0.0;
        const Eigen::VectorXd w = Eigen::VectorXd::Constant(2, 0.5);
        cfg.relative_epsilon = false;
        cfg.entropic_epsilon = 0.001;
        const auto r = sinkhorn(c, w, w, cfg);
        CHECK(r.cost <= 1e-6);
        CHECK(r.coupling(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("close to exact transport for small clouds") {
        std::mt19937_64 rng(8);
        cfg.entropic_epsilon = 0.01;
        for (int t = 0; t < 40; ++t) {
            const auto n = static_cast<Eigen::Index>(2 + t % 7);
            const Eigen::MatrixXd cost = squared_distances(gaussian_matrix(n, 2, rng), gaussian_matrix(n, 2, rng));
            const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
            const auto r = sinkhorn(cost, w, w, cfg);
            const double exact = oracle::assignment_cost(cost);
            CHECK(std::abs(r.cost - exact) <= 0.02 * exact);
            CHECK(r.marginal_error <= 1e-6);
            CHECK(r.epsilon == effective_epsilon(cost, cfg));
        }
    }
    SUBCASE("iteration budget exhausted") {
        std::mt19937_64 rng(2);
        const Eigen::MatrixXd cost = squared_distances(gaussian_matrix(6, 2, rng), gaussian_matrix(6, 2, rng));
        const Eigen::VectorXd w = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
        cfg.entropic_epsilon = 0.001;
        cfg.max_iterations = 2;
        try {
            sinkhorn(cost, w, w, cfg);
            FAIL("expected a convergence error");
        } catch (const ConvergenceError& e) {
            CHECK(e.residual() > cfg.marginal_tolerance);
        }
    }
    SUBCASE("bad weights") {
        const Eigen::VectorXd w = Eigen::VectorXd::Constant(2, 0.4);
        CHECK_THROWS_AS(sinkhorn(Eigen::MatrixXd::Zero(2, 2), w, w, cfg), DataError);
    }
}

TEST_CASE("optimal transport dataset distance") {
    std::mt19937_64 rng(13);
    auto make = [&](double shift) {
        Eigen::MatrixXd x = gaussian_matrix(40, 2, rng);
        std::vector<double> y(40);
        for (std::size_t i = 0; i < 40; ++i) {
            y[i] = static_cast<double>(i % 2);
            x(static_cast<Eigen::Index>(i), 0) += 3.0 * y[i] + shift;
        }
        return testing::make_dataset(x, y, TaskType::binary);
    };
    const auto a = make(0.0), b = make(0.0), far = make(4.0);
    OtddConfig cfg;
    cfg.entropic_epsilon = 0.01;
    const double self = otdd(a, a, cfg);
    CHECK(self <= 0.5);
    CHECK(otdd(a, b, cfg) == doctest::Approx(otdd(b, a, cfg)).epsilon(1e-6));
    CHECK(otdd(a, far, cfg) > otdd(a, b, cfg));

    auto regression = a;
    regression.schema.task = TaskType::regression;
    CHECK_THROWS_AS(otdd(regression, b), ConfigError);
}

TEST_CASE("gap decomposition") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SUBCASE("terms telescope on random inputs") {
        for (int t = 0; t < 100; ++t) {
            const auto np = static_cast<Eigen::Index>(20 + rng() % 40), nq = static_cast<Eigen::Index>(20 + rng() % 40);
            const Eigen::MatrixXd xp = gaussian_matrix(np, 3, rng);
            const Eigen::MatrixXd xq = gaussian_matrix(nq, 3, rng).array() + 0.5 * u(rng);
            std::vector<double> lp(static_cast<std::size_t>(np)), lq(static_cast<std::size_t>(nq));
            for (auto& v : lp) v = u(rng);
            for (auto& v : lq) v = 2.0 * u(rng);
            DisdeConfig cfg;
            cfg.k = 5;
            const auto r = disde(lp, xp, lq, xq, cfg);
            const double mp = std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(np);
            const double mq = std::accumulate(lq.begin(), lq.end(), 0.0) / static_cast<double>(nq);
            CHECK(std::abs(r.term_1 + r.term_2 + r.term_3 - (mq - mp)) <= 1e-12);
            CHECK(r.overlap_size > 0);
        }
    }
    SUBCASE("identical domains") {
        const Eigen::MatrixXd x = gaussian_matrix(50, 2, rng);
        std::vector<double> l(50);
        for (auto& v : l) v = u(rng);
        const auto r = disde(l, x, l, x);
        CHECK(std::abs(r.term_2) <= 1e-12);
        CHECK(std::abs(r.term_1 + r.term_3) <= 1e-12);
        CHECK(r.total_gap == 0.0);
    }
    SUBCASE("pure concept shift lands in the middle term") {
        const Eigen::MatrixXd xp = gaussian_matrix(400, 2, rng), xq = gaussian_matrix(400, 2, rng);
        std::vector<double> lp(400), lq(400);
        for (Eigen::Index i = 0; i < 400; ++i) {
            lp[static_cast<std::size_t>(i)] = xp(i, 0) > 0.0 ? 0.2 : 0.0;
            lq[static_cast<std::size_t>(i)] = xq(i, 0) > 0.0 ? 1.0 : 0.8;
        }
        const auto r = disde(lp, xp, lq, xq);
        CHECK(std::abs(r.term_2) >= 5.0 * std::max(std::abs(r.term_1), std::abs(r.term_3)));
        CHECK(shift_pattern(r) == "Y|X-dominant");
    }
    SUBCASE("disjoint domains have no overlap") {
        Eigen::MatrixXd xp = gaussian_matrix(30, 1, rng) * 0.01, xq = gaussian_matrix(30, 1, rng) * 0.01;
        xp.array() -= 10.0;
        xq.array() += 10.0;
        const std::vector<double> l(30, 0.0);
        CHECK_THROWS_WITH_AS(disde(l, xp, l, xq), doctest::Contains("overlap"), DataError);
    }
    SUBCASE("argument checks") {
        const Eigen::MatrixXd x = gaussian_matrix(5, 2, rng);
        const std::vector<double> l(5, 0.0);
        CHECK_THROWS_AS(disde(l, x, l, x), ConfigError);  // k = 10 > 5
        DisdeConfig cfg;
        cfg.k = 2;
        cfg.eta = 0.7;
        CHECK_THROWS_AS(disde(l, x, l, x, cfg), ConfigError);
    }
}

TEST_CASE("shift pattern") {
    DisdeReport r;
    r.term_1 = 0.01;
    r.term_2 = 0.2;
    r.term_3 = 0.02;
    CHECK(shift_pattern(r) == "Y|X-dominant");
    r.term_2 = 0.01;
    r.term_1 = 0.1;
    CHECK(shift_pattern(r) == "X-dominant");
    r.term_1 = 0.1;
    r.term_3 = -0.1;  // X terms cancel
    CHECK(shift_pattern(r) == "Y|X-dominant");
}
