#include <cmath>

#include <Eigen/Eigenvalues>

#include "openenv/error.hpp"
#include "openenv/models.hpp"

namespace openenv {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

LogRegModel logreg_fit(const Eigen::MatrixXd& x, std::span<const int> y, const LogRegConfig& cfg) {
    const auto n = x.rows();
    const auto d = x.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw DataError("feature and target counts disagree");
    if (n == 0) throw DataError("logistic regression on an empty training set");
    if (!x.allFinite()) throw DataError("training matrix contains missing or non-finite values; impute first");
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int v = y[static_cast<std::size_t>(i)];
        if (v != 0 && v != 1) throw ConfigError("logistic regression needs binary 0/1 targets");
        target[i] = v;
    }

    double step = cfg.learning_rate;
    if (step <= 0.0) {
        // Mean log loss is L-smooth with L = lambda_max(X~'X~ / n) / 4 (+ l2); 1/L guarantees descent.
        Eigen::MatrixXd aug(n, d + 1);
        aug.leftCols(d) = x;
        aug.col(d).setOnes();
        const Eigen::MatrixXd gram = aug.transpose() * aug / static_cast<double>(n);
        const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                      .eigenvalues()
                                      .maxCoeff();
        step = 1.0 / (0.25 * lambda_max + cfg.l2);
    }

    LogRegModel m;
    m.config = cfg;
    m.weights = Eigen::VectorXd::Zero(d);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (;;) {
        const Eigen::VectorXd z = (x * m.weights).array() + m.bias;
        Eigen::VectorXd residual(n);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            loss += softplus(z[i]) - target[i] * z[i];
            residual[i] = sigmoid(z[i]) - target[i];
        }
        loss = loss * inv_n + 0.5 * cfg.l2 * m.weights.squaredNorm();
        const Eigen::VectorXd grad_w = x.transpose() * residual * inv_n + cfg.l2 * m.weights;
        const double grad_b = residual.sum() * inv_n;
        m.gradient_norm = std::sqrt(grad_w.squaredNorm() + grad_b * grad_b);
        m.loss_history.push_back(loss);
        if (!std::isfinite(loss)) throw DataError("non-finite logistic loss at epoch " + std::to_string(m.epochs));
        if (m.gradient_norm <= cfg.gradient_tolerance || m.epochs >= cfg.max_epochs) break;
        m.weights -= step * grad_w;
        m.bias -= step * grad_b;
        ++m.epochs;
    }
    return m;
}

LogRegModel logreg_fit(const Dataset& train, const LogRegConfig& cfg) {
    if (train.schema.task != TaskType::binary) throw ConfigError("logistic regression needs a binary target");
    return logreg_fit(train.features, train.labels(), cfg);
}

Eigen::VectorXd logreg_probability(const LogRegModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.weights.size()) throw DataError("feature count differs from the fitted model");
    Eigen::VectorXd z = (x * model.weights).array() + model.bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]);
    return z;
}

PredictionSet logreg_predict_proba(const LogRegModel& model, const Dataset& ds) {
    const auto p = logreg_probability(model, ds.features);
    PredictionSet out;
    out.kind = PredictionKind::class_probs;
    out.sample_ids = ds.sample_ids;
    out.class_order = {0, 1};
    out.probs.resize(p.size(), 2);
    out.probs.col(1) = p;
    out.probs.col(0) = 1.0 - p.array();
    return out;
}

}  // namespace openenv
