#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace openenv {

enum class PredictionKind { class_probs, regression };

/// Per-sample model outputs keyed by sample id.
///
/// For class_probs, column c of `probs` is the probability of class code
/// class_order[c]; rows are stochastic. For regression, `values` holds one
/// prediction per sample.
struct PredictionSet {
    std::vector<std::string> sample_ids;
    PredictionKind kind = PredictionKind::class_probs;
    Eigen::MatrixXd probs;
    Eigen::VectorXd values;
    std::vector<int> class_order;

    std::size_t size() const { return sample_ids.size(); }
    // Class code of the most probable column per row; ties go to the first column.
    std::vector<int> predicted_classes() const;
    std::vector<double> max_probability() const;
    // Probability assigned to class `code` (0 when the class is not modelled).
    std::vector<double> class_probability(int code) const;

    // Throws DataError on shape mismatch, entries outside [0,1] or row sums off by more than 1e-6.
    void check() const;
    // Rows reordered to match `ids`; throws DataError listing missing or extra ids.
    PredictionSet aligned_to(std::span<const std::string> ids) const;
};

// What an external prediction file must match.
struct PredictionManifest {
    std::vector<std::string> sample_ids;
    // Empty for regression. Header columns are p_<class_names[i]>.
    std::vector<std::string> class_names;
    std::vector<int> class_order;
};

/// Reads `id,value` (regression) or `id,p_<class1>,...,p_<classK>`.
///
/// Rows whose sum lies within [1 - 1e-3, 1 + 1e-3] are renormalised; others
/// are rejected with the row id. Rows come back in manifest order.
PredictionSet load_predictions(const std::filesystem::path& path, const PredictionManifest& manifest);
void write_predictions(const PredictionSet& preds, std::span<const std::string> class_names,
                       const std::filesystem::path& path);

struct Embeddings {
    std::vector<std::string> sample_ids;
    Eigen::MatrixXd values;
};

// Header `id,e_1,...,e_d`.
Embeddings load_embeddings(const std::filesystem::path& path);
void write_embeddings(const Embeddings& emb, const std::filesystem::path& path);

}  // namespace openenv
