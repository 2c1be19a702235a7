#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "openenv/error.hpp"
#include "openenv/models.hpp"
#include "openenv/random.hpp"

namespace openenv {

namespace {

struct Forward {
    Eigen::MatrixXd pre;     // n x hidden
    Eigen::MatrixXd hidden;  // n x hidden, post-ReLU
    Eigen::MatrixXd out;     // n x outputs (logits or scaled prediction)
};

Forward forward(const MlpModel& m, const Eigen::MatrixXd& x) {
    Forward f;
    f.pre = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
    f.hidden = f.pre.cwiseMax(0.0);
    f.out = (f.hidden * m.w2.transpose()).rowwise() + m.b2.transpose();
    return f;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

bool is_regression(const MlpModel& m) { return m.task == TaskType::regression; }

}  // namespace

MlpModel mlp_init(std::size_t input_dim, std::size_t outputs, TaskType task, const MlpConfig& cfg) {
    if (cfg.hidden == 0) throw ConfigError("MLP hidden dimension must be at least 1");
    if (input_dim == 0 || outputs == 0) throw ConfigError("MLP needs at least one input and one output");
    MlpModel m;
    m.task = task;
    m.config = cfg;
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto k = static_cast<Eigen::Index>(outputs);
    Rng rng(cfg.seed);
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
    std::normal_distribution<double> head(0.0, std::sqrt(1.0 / static_cast<double>(cfg.hidden)));
    m.w1.resize(h, d);
    for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = he(rng);
    m.b1 = Eigen::VectorXd::Zero(h);
    m.w2.resize(k, h);
    for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = head(rng);
    m.b2 = Eigen::VectorXd::Zero(k);
    return m;
}

MlpGradient mlp_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& x, std::span<const double> targets) {
    const auto n = x.rows();
    if (static_cast<std::size_t>(n) != targets.size() || n == 0) throw DataError("MLP batch size mismatch");
    const auto f = forward(model, x);
    const double inv_n = 1.0 / static_cast<double>(n);
    MlpGradient g;
    Eigen::MatrixXd d_out(n, f.out.cols());
    if (is_regression(model)) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = f.out(i, 0) - targets[static_cast<std::size_t>(i)];
            g.loss += r * r;
            d_out(i, 0) = 2.0 * r * inv_n;
        }
    } else {
        d_out = softmax_rows(f.out);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
            g.loss -= std::log(std::max(d_out(i, t), 1e-300));
            d_out(i, t) -= 1.0;
        }
        d_out *= inv_n;
    }
    g.loss *= inv_n;
    g.w2 = d_out.transpose() * f.hidden;
    g.b2 = d_out.colwise().sum().transpose();
    const Eigen::MatrixXd d_pre = ((d_out * model.w2).array() * (f.pre.array() > 0.0).cast<double>()).matrix();
    g.w1 = d_pre.transpose() * x;
    g.b1 = d_pre.colwise().sum().transpose();
    return g;
}

MlpModel mlp_fit(const Dataset& train, const MlpConfig& cfg) {
    if (train.empty()) throw DataError("MLP training on an empty dataset");
    if (!train.features.allFinite()) throw DataError("training matrix contains missing values; impute first");
    if (cfg.batch_size == 0) throw ConfigError("MLP batch size must be positive");
    const auto n = train.size();
    std::vector<double> targets(n);
    std::vector<int> class_order;
    double mean = 0.0, scale = 1.0;
    if (train.schema.is_classification()) {
        std::set<int> classes;
        for (double t : train.targets) classes.insert(static_cast<int>(t));
        class_order.assign(classes.begin(), classes.end());
        for (std::size_t i = 0; i < n; ++i) {
            const auto code = static_cast<int>(train.targets[i]);
            targets[i] = static_cast<double>(std::lower_bound(class_order.begin(), class_order.end(), code) -
                                             class_order.begin());
        }
    } else {
        mean = std::accumulate(train.targets.begin(), train.targets.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double t : train.targets) ss += (t - mean) * (t - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        scale = sd > 0.0 ? sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) targets[i] = (train.targets[i] - mean) / scale;
    }
    const std::size_t outputs = train.schema.is_classification() ? class_order.size() : 1;
    MlpModel m = mlp_init(train.schema.num_features(), outputs, train.schema.task, cfg);
    m.class_order = class_order;
    m.target_mean = mean;
    m.target_scale = scale;

    Rng rng(derive_seed(cfg.seed, 1));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto d = train.features.cols();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const auto stop = std::min(n, start + cfg.batch_size);
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(stop - start), d);
            std::vector<double> tb(stop - start);
            for (std::size_t r = start; r < stop; ++r) {
                xb.row(static_cast<Eigen::Index>(r - start)) = train.features.row(static_cast<Eigen::Index>(order[r]));
                tb[r - start] = targets[order[r]];
            }
            const auto g = mlp_loss_gradient(m, xb, tb);
            m.w1 -= cfg.learning_rate * g.w1;
            m.b1 -= cfg.learning_rate * g.b1;
            m.w2 -= cfg.learning_rate * g.w2;
            m.b2 -= cfg.learning_rate * g.b2;
        }
        const double loss = mlp_loss_gradient(m, train.features, targets).loss;
        if (!std::isfinite(loss) || !m.w1.allFinite() || !m.w2.allFinite()) {
            throw DataError("non-finite MLP training loss at epoch " + std::to_string(epoch + 1));
        }
        m.epoch_loss.push_back(loss);
    }
    return m;
}

PredictionSet mlp_predict_proba(const MlpModel& model, const Dataset& ds) {
    if (static_cast<std::size_t>(ds.features.cols()) != model.input_dim()) {
        throw DataError("feature count differs from the fitted MLP");
    }
    if (!ds.features.allFinite()) throw DataError("query matrix contains missing values; impute first");
    const auto f = forward(model, ds.features);
    PredictionSet out;
    out.sample_ids = ds.sample_ids;
    if (is_regression(model)) {
        out.kind = PredictionKind::regression;
        out.values = (f.out.col(0).array() * model.target_scale + model.target_mean).matrix();
    } else {
        out.kind = PredictionKind::class_probs;
        out.class_order = model.class_order;
        out.probs = softmax_rows(f.out);
    }
    return out;
}

Eigen::MatrixXd mlp_activations(const MlpModel& model, const Eigen::MatrixXd& x) {
    if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
        throw DataError("feature count differs from the fitted MLP");
    }
    return forward(model, x).hidden;
}

}  // namespace openenv
