#include <cmath>

#include "openenv/error.hpp"
#include "openenv/models.hpp"

namespace openenv {

std::vector<double> per_sample_loss(const PredictionSet& preds, const Dataset& truth, LossKind loss) {
    const auto aligned = preds.aligned_to(truth.sample_ids);
    std::vector<double> out(truth.size());
    if (loss == LossKind::squared) {
        if (aligned.kind != PredictionKind::regression || truth.schema.is_classification()) {
            throw ConfigError("squared loss needs regression targets and predictions");
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double r = aligned.values[static_cast<Eigen::Index>(i)] - truth.targets[i];
            out[i] = r * r;
        }
        return out;
    }
    if (aligned.kind != PredictionKind::class_probs || !truth.schema.is_classification()) {
        throw ConfigError("zero-one and log loss need class probabilities and class targets");
    }
    const auto y = truth.labels();
    if (loss == LossKind::zero_one) {
        const auto predicted = aligned.predicted_classes();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = predicted[i] == y[i] ? 0.0 : 1.0;
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        double p = 0.0;
        for (std::size_t c = 0; c < aligned.class_order.size(); ++c) {
            if (aligned.class_order[c] == y[i]) p = aligned.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        }
        out[i] = -std::log(std::max(p, 1e-15));
    }
    return out;
}

}  // namespace openenv
