#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "openenv/error.hpp"
#include "openenv/models.hpp"

namespace openenv {

namespace {

void require_complete(const Eigen::MatrixXd& x, const char* what) {
    if (!x.allFinite()) throw DataError(std::string(what) + " contains missing or non-finite values; impute first");
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const Eigen::MatrixXd& reference, const Eigen::RowVectorXd& query,
                                           std::size_t k) {
    const auto n = static_cast<std::size_t>(reference.rows());
    if (k == 0 || k > n) throw ConfigError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = {(reference.row(static_cast<Eigen::Index>(i)) - query).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
}

KnnModel knn_fit(const Eigen::MatrixXd& x, std::span<const double> y, std::size_t k, TaskType task) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw DataError("feature and target counts disagree");
    if (k == 0 || k > y.size()) {
        throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(y.size()) + " training rows");
    }
    require_complete(x, "training matrix");
    KnnModel m;
    m.train_x = x;
    m.train_y.assign(y.begin(), y.end());
    m.k = k;
    m.task = task;
    if (task != TaskType::regression) {
        std::set<int> classes;
        for (double v : y) classes.insert(static_cast<int>(v));
        m.class_order.assign(classes.begin(), classes.end());
    }
    return m;
}

KnnModel knn_fit(const Dataset& train, std::size_t k) {
    return knn_fit(train.features, train.targets, k, train.schema.task);
}

PredictionSet knn_predict_proba(const KnnModel& model, const Eigen::MatrixXd& x, std::vector<std::string> ids) {
    if (x.cols() != model.train_x.cols()) throw DataError("feature count differs from the training matrix");
    if (static_cast<std::size_t>(x.rows()) != ids.size()) throw DataError("feature and id counts disagree");
    require_complete(x, "query matrix");
    PredictionSet out;
    out.sample_ids = std::move(ids);
    const auto n = x.rows();
    if (model.task == TaskType::regression) {
        out.kind = PredictionKind::regression;
        out.values.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double sum = 0.0;
            for (auto j : nearest_neighbors(model.train_x, x.row(i), model.k)) sum += model.train_y[j];
            out.values[i] = sum / static_cast<double>(model.k);
        }
        return out;
    }
    out.kind = PredictionKind::class_probs;
    out.class_order = model.class_order;
    const auto classes = static_cast<Eigen::Index>(model.class_order.size());
    out.probs = Eigen::MatrixXd::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (auto j : nearest_neighbors(model.train_x, x.row(i), model.k)) {
            const auto code = static_cast<int>(model.train_y[j]);
            const auto col = std::lower_bound(model.class_order.begin(), model.class_order.end(), code) -
                             model.class_order.begin();
            out.probs(i, col) += 1.0;
        }
        out.probs.row(i) /= static_cast<double>(model.k);
    }
    return out;
}

PredictionSet knn_predict_proba(const KnnModel& model, const Dataset& ds) {
    return knn_predict_proba(model, ds.features, ds.sample_ids);
}

}  // namespace openenv
