#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "openenv/data.hpp"
#include "openenv/predictions.hpp"

namespace openenv {

// ---------------------------------------------------------------------------
// k-nearest neighbours

struct KnnModel {
    Eigen::MatrixXd train_x;
    std::vector<double> train_y;
    std::size_t k = 1;
    TaskType task = TaskType::multiclass;
    // Class codes seen in training, ascending; empty for regression.
    std::vector<int> class_order;
};

// Indices of the k rows of `reference` closest to `query` (Euclidean); equal
// distances resolve to the smaller row index.
std::vector<std::size_t> nearest_neighbors(const Eigen::MatrixXd& reference, const Eigen::RowVectorXd& query,
                                           std::size_t k);

KnnModel knn_fit(const Dataset& train, std::size_t k);
KnnModel knn_fit(const Eigen::MatrixXd& x, std::span<const double> y, std::size_t k, TaskType task);
// Vote fractions (classification) or neighbour mean (regression).
PredictionSet knn_predict_proba(const KnnModel& model, const Dataset& ds);
PredictionSet knn_predict_proba(const KnnModel& model, const Eigen::MatrixXd& x, std::vector<std::string> ids);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegConfig {
    // Gradient descent step; 0 selects 1/L for the loss's smoothness constant L.
    double learning_rate = 0.0;
    std::size_t max_epochs = 5000;
    double gradient_tolerance = 1e-6;
    double l2 = 0.0;
    std::uint64_t seed = 0;
};

struct LogRegModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    LogRegConfig config;
    std::size_t epochs = 0;
    double gradient_norm = 0.0;
    // Mean log loss before each update and after the last one.
    std::vector<double> loss_history;
};

/// Full-batch gradient descent on the mean log loss from a zero start.
/// Stops once the gradient norm reaches the tolerance or at the epoch cap.
LogRegModel logreg_fit(const Eigen::MatrixXd& x, std::span<const int> y, const LogRegConfig& cfg = {});
LogRegModel logreg_fit(const Dataset& train, const LogRegConfig& cfg = {});
// P(y = 1 | x) per row.
Eigen::VectorXd logreg_probability(const LogRegModel& model, const Eigen::MatrixXd& x);
PredictionSet logreg_predict_proba(const LogRegModel& model, const Dataset& ds);

// ---------------------------------------------------------------------------
// One-hidden-layer perceptron

struct MlpConfig {
    std::size_t hidden = 32;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

/// ReLU hidden layer followed by a linear head: class logits under softmax
/// cross-entropy, or one output under squared error on standardised targets.
struct MlpModel {
    Eigen::MatrixXd w1;  // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // outputs x hidden
    Eigen::VectorXd b2;
    TaskType task = TaskType::multiclass;
    std::vector<int> class_order;
    double target_mean = 0.0;
    double target_scale = 1.0;
    MlpConfig config;
    std::vector<double> epoch_loss;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
};

struct MlpGradient {
    double loss = 0.0;
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
};

// Seeded initialisation without training.
MlpModel mlp_init(std::size_t input_dim, std::size_t outputs, TaskType task, const MlpConfig& cfg);
MlpModel mlp_fit(const Dataset& train, const MlpConfig& cfg = {});

/// Mean loss and its gradient at the model's parameters. `targets` are
/// column indices into class_order (classification) or standardised values
/// (regression).
MlpGradient mlp_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& x, std::span<const double> targets);

PredictionSet mlp_predict_proba(const MlpModel& model, const Dataset& ds);
// Post-activation hidden vectors, one row per sample (n x hidden).
Eigen::MatrixXd mlp_activations(const MlpModel& model, const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------

enum class LossKind { zero_one, log, squared };

// Per-sample loss in `truth` row order; predictions are matched by id.
std::vector<double> per_sample_loss(const PredictionSet& preds, const Dataset& truth, LossKind loss);

}  // namespace openenv
