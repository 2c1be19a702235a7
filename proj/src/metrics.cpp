#include "openenv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "openenv/error.hpp"

namespace openenv {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) throw DataError("metric inputs differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    if (a == 0) throw DataError("metric on empty input");
}

struct BinaryCounts {
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

BinaryCounts count_binary(std::span<const int> y_true) {
    BinaryCounts c;
    for (int y : y_true) {
        if (y == 1) {
            ++c.positives;
        } else if (y == 0) {
            ++c.negatives;
        } else {
            throw DataError("binary labels must be 0 or 1, got " + std::to_string(y));
        }
    }
    if (c.positives == 0 || c.negatives == 0) throw DataError("undefined AUC: y_true contains a single class");
    return c;
}

// Indices sorted by descending score; ties keep index order.
std::vector<std::size_t> order_desc(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
    require_same_length(y_true.size(), y_pred.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) correct += y_true[i] == y_pred[i];
    return static_cast<double>(correct) / static_cast<double>(y_true.size());
}

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
    require_same_length(y_true.size(), y_pred.size());
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // (correct, total)
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        auto& [correct, total] = per_class[y_true[i]];
        ++total;
        correct += y_true[i] == y_pred[i];
    }
    double sum = 0.0;
    for (const auto& [cls, ct] : per_class) sum += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    return sum / static_cast<double>(per_class.size());
}

double f1(std::span<const int> y_true, std::span<const int> y_pred, F1Averaging averaging, int positive) {
    require_same_length(y_true.size(), y_pred.size());
    auto f1_for = [&](int cls) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool t = y_true[i] == cls;
            const bool p = y_pred[i] == cls;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    };
    if (averaging == F1Averaging::binary) {
        std::set<int> classes(y_true.begin(), y_true.end());
        classes.insert(y_pred.begin(), y_pred.end());
        if (classes.size() > 2) throw DataError("binary F1 on more than two classes");
        return f1_for(positive);
    }
    std::set<int> classes(y_true.begin(), y_true.end());
    classes.insert(y_pred.begin(), y_pred.end());
    double sum = 0.0;
    for (int c : classes) sum += f1_for(c);
    return sum / static_cast<double>(classes.size());
}

double roc_auc(std::span<const int> y_true, std::span<const double> scores) {
    require_same_length(y_true.size(), scores.size());
    const auto counts = count_binary(y_true);
    // Ascending ranks with ties averaged; positives' rank sum gives the U statistic.
    auto idx = order_desc(scores);
    std::reverse(idx.begin(), idx.end());
    double positive_rank_sum = 0.0;
    for (std::size_t start = 0; start < idx.size();) {
        std::size_t end = start;
        while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) ++end;
        const double mean_rank = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t r = start; r < end; ++r) {
            if (y_true[idx[r]] == 1) positive_rank_sum += mean_rank;
        }
        start = end;
    }
    const double p = static_cast<double>(counts.positives);
    const double n = static_cast<double>(counts.negatives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double aupr(std::span<const int> y_true, std::span<const double> scores) {
    require_same_length(y_true.size(), scores.size());
    const auto counts = count_binary(y_true);
    const auto idx = order_desc(scores);
    const double p = static_cast<double>(counts.positives);
    std::size_t tp = 0, fp = 0, tp_prev = 0;
    double area = 0.0;
    for (std::size_t start = 0; start < idx.size();) {
        std::size_t end = start;
        while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) {
            (y_true[idx[end]] == 1 ? tp : fp) += 1;
            ++end;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (static_cast<double>(tp) / p - static_cast<double>(tp_prev) / p) * precision;
        tp_prev = tp;
        start = end;
    }
    return area;
}

double roc_auc_ovr(std::span<const int> y_true, const PredictionSet& preds) {
    require_same_length(y_true.size(), preds.size());
    const std::set<int> classes(y_true.begin(), y_true.end());
    if (classes.size() < 2) throw DataError("undefined AUC: y_true contains a single class");
    double sum = 0.0;
    std::vector<int> binary(y_true.size());
    for (int c : classes) {
        for (std::size_t i = 0; i < y_true.size(); ++i) binary[i] = y_true[i] == c ? 1 : 0;
        sum += roc_auc(binary, preds.class_probability(c));
    }
    return sum / static_cast<double>(classes.size());
}

double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
    require_same_length(y_true.size(), y_pred.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) ss += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    return std::sqrt(ss / static_cast<double>(y_true.size()));
}

double performance_gap(double metric_0, double metric_i, GapMode mode) {
    const double diff = metric_i - metric_0;
    if (mode == GapMode::absolute) return diff;
    if (metric_0 == 0.0) throw DataError("relative performance gap undefined for a zero baseline metric");
    return diff / metric_0;
}

std::vector<double> novelty_score(const PredictionSet& preds) {
    if (preds.kind != PredictionKind::class_probs) throw ConfigError("novelty scores need class probabilities");
    auto scores = preds.max_probability();
    for (auto& s : scores) s = 1.0 - s;
    return scores;
}

void NoveltyConfig::validate() const {
    if (!(0.0 <= theta_min && theta_min < theta_max && theta_max <= 1.0)) {
        throw ConfigError("uncertainty interval must satisfy 0 <= theta_min < theta_max <= 1");
    }
}

double uncertainty_proportion(const PredictionSet& preds, const NoveltyConfig& cfg) {
    if (preds.kind != PredictionKind::class_probs) throw ConfigError("uncertainty proportion needs class probabilities");
    cfg.validate();
    if (preds.size() == 0) return 0.0;
    std::size_t inside = 0;
    for (double m : preds.max_probability()) inside += m >= cfg.theta_min && m <= cfg.theta_max;
    return static_cast<double>(inside) / static_cast<double>(preds.size());
}

std::string to_string(Objective objective) {
    switch (objective) {
        case Objective::accuracy: return "accuracy";
        case Objective::balanced_accuracy: return "balanced_accuracy";
        case Objective::f1: return "f1";
        case Objective::roc_auc: return "roc_auc";
        case Objective::aupr: return "aupr";
        case Objective::rmse: return "rmse";
    }
    return "unknown";
}

Objective parse_objective(std::string_view name) {
    for (auto o : {Objective::accuracy, Objective::balanced_accuracy, Objective::f1, Objective::roc_auc,
                   Objective::aupr, Objective::rmse}) {
        if (to_string(o) == name) return o;
    }
    throw ConfigError("unknown objective '" + std::string(name) + "'");
}

bool higher_is_better(Objective objective) { return objective != Objective::rmse; }

bool applies_to(Objective objective, TaskType task) {
    if (objective == Objective::rmse) return task == TaskType::regression;
    if (objective == Objective::aupr) return task == TaskType::binary;
    return task != TaskType::regression;
}

double evaluate(Objective objective, const Dataset& test, const PredictionSet& preds) {
    if (!applies_to(objective, test.schema.task)) {
        throw ConfigError(to_string(objective) + " does not apply to " + to_string(test.schema.task) + " tasks");
    }
    const auto aligned = preds.aligned_to(test.sample_ids);
    if (objective == Objective::rmse) {
        if (aligned.kind != PredictionKind::regression) throw ConfigError("rmse needs regression predictions");
        return rmse(test.targets, std::span<const double>(aligned.values.data(), static_cast<std::size_t>(aligned.values.size())));
    }
    if (aligned.kind != PredictionKind::class_probs) throw ConfigError(to_string(objective) + " needs class probabilities");
    const auto y = test.labels();
    const bool binary = test.schema.task == TaskType::binary;
    switch (objective) {
        case Objective::accuracy: return accuracy(y, aligned.predicted_classes());
        case Objective::balanced_accuracy: return balanced_accuracy(y, aligned.predicted_classes());
        case Objective::f1:
            return f1(y, aligned.predicted_classes(), binary ? F1Averaging::binary : F1Averaging::macro, 1);
        case Objective::roc_auc: return binary ? roc_auc(y, aligned.class_probability(1)) : roc_auc_ovr(y, aligned);
        case Objective::aupr: return aupr(y, aligned.class_probability(1));
        case Objective::rmse: break;
    }
    throw ConfigError("unhandled objective");
}

// ---------------------------------------------------------------------------

EncReport enc_evaluate(std::span<const EncRun> runs, std::span<const PredictionSet> predictions,
                       const NoveltyConfig& cfg) {
    cfg.validate();
    if (runs.size() != predictions.size()) {
        throw DataError("expected one prediction set per run (" + std::to_string(runs.size()) + " runs, " +
                        std::to_string(predictions.size()) + " prediction sets)");
    }
    if (runs.empty()) throw DataError("no emerging-new-class runs to evaluate");
    EncReport report;
    report.config = cfg;
    report.mean.held_out_class = -1;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& test = runs[r].detection_test;
        const auto preds = predictions[r].aligned_to(test.sample_ids);
        const auto y = test.labels();
        const auto scores = novelty_score(preds);

        EncRunMetrics m;
        m.held_out_class = runs[r].held_out_class;
        m.roc_auc = roc_auc(y, scores);
        m.aupr = aupr(y, scores);
        std::vector<double> rule(scores.size());
        const auto max_prob = preds.max_probability();
        for (std::size_t i = 0; i < rule.size(); ++i) {
            rule[i] = max_prob[i] >= cfg.theta_min && max_prob[i] <= cfg.theta_max ? 1.0 : 0.0;
        }
        m.interval_roc_auc = roc_auc(y, rule);

        std::vector<std::size_t> novel_rows;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == 1) novel_rows.push_back(i);
        }
        PredictionSet novel;
        novel.kind = PredictionKind::class_probs;
        novel.class_order = preds.class_order;
        novel.probs.resize(static_cast<Eigen::Index>(novel_rows.size()), preds.probs.cols());
        for (std::size_t i = 0; i < novel_rows.size(); ++i) {
            novel.sample_ids.push_back(preds.sample_ids[novel_rows[i]]);
            novel.probs.row(static_cast<Eigen::Index>(i)) = preds.probs.row(static_cast<Eigen::Index>(novel_rows[i]));
        }
        for (std::size_t k = 0; k < kUncertaintyIntervals.size(); ++k) {
            m.uncertainty[k] = uncertainty_proportion(novel, kUncertaintyIntervals[k]);
        }
        report.runs.push_back(m);
    }
    const double n = static_cast<double>(report.runs.size());
    for (const auto& m : report.runs) {
        report.mean.roc_auc += m.roc_auc / n;
        report.mean.aupr += m.aupr / n;
        report.mean.interval_roc_auc += m.interval_roc_auc / n;
        for (std::size_t k = 0; k < m.uncertainty.size(); ++k) report.mean.uncertainty[k] += m.uncertainty[k] / n;
    }
    return report;
}

// ---------------------------------------------------------------------------

std::vector<double> rank_cell(std::span<const double> values, bool higher_is_better) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return higher_is_better ? values[a] > values[b] : values[a] < values[b];
    });
    std::vector<double> ranks(values.size());
    for (std::size_t start = 0; start < idx.size();) {
        std::size_t end = start;
        while (end < idx.size() && values[idx[end]] == values[idx[start]]) ++end;
        const double mean_rank = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t r = start; r < end; ++r) ranks[idx[r]] = mean_rank;
        start = end;
    }
    return ranks;
}

RankSummary rank_table(const Eigen::MatrixXd& values, std::span<const bool> higher_is_better,
                       std::span<const std::size_t> groups) {
    const auto models = values.rows();
    const auto cells = values.cols();
    if (models == 0 || cells == 0) throw DataError("rank table is empty");
    if (static_cast<Eigen::Index>(higher_is_better.size()) != cells) {
        throw ConfigError("one ordering flag per rank-table cell is required");
    }
    if (!groups.empty() && static_cast<Eigen::Index>(groups.size()) != cells) {
        throw ConfigError("one group index per rank-table cell is required");
    }
    RankSummary out;
    out.cell_ranks.resize(models, cells);
    std::vector<double> column(static_cast<std::size_t>(models));
    for (Eigen::Index c = 0; c < cells; ++c) {
        for (Eigen::Index m = 0; m < models; ++m) {
            if (std::isnan(values(m, c))) {
                throw DataError("missing rank-table cell (model " + std::to_string(m) + ", cell " + std::to_string(c) + ")");
            }
            column[static_cast<std::size_t>(m)] = values(m, c);
        }
        const auto ranks = rank_cell(column, higher_is_better[static_cast<std::size_t>(c)]);
        for (Eigen::Index m = 0; m < models; ++m) out.cell_ranks(m, c) = ranks[static_cast<std::size_t>(m)];
    }
    const std::size_t num_groups =
        groups.empty() ? 1 : *std::max_element(groups.begin(), groups.end()) + 1;
    out.group_ranks = Eigen::MatrixXd::Zero(models, static_cast<Eigen::Index>(num_groups));
    std::vector<std::size_t> group_size(num_groups, 0);
    for (Eigen::Index c = 0; c < cells; ++c) {
        const auto g = groups.empty() ? 0 : groups[static_cast<std::size_t>(c)];
        ++group_size[g];
        out.group_ranks.col(static_cast<Eigen::Index>(g)) += out.cell_ranks.col(c);
    }
    for (std::size_t g = 0; g < num_groups; ++g) {
        if (group_size[g] == 0) throw ConfigError("rank group " + std::to_string(g) + " has no cells");
        out.group_ranks.col(static_cast<Eigen::Index>(g)) /= static_cast<double>(group_size[g]);
    }
    out.mean_rank = out.group_ranks.rowwise().mean();
    return out;
}

}  // namespace openenv
