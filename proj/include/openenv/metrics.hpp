#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "openenv/data.hpp"
#include "openenv/predictions.hpp"
#include "openenv/scenario.hpp"

namespace openenv {

double accuracy(std::span<const int> y_true, std::span<const int> y_pred);
// Unweighted mean of per-class recall over the classes present in y_true.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred);

enum class F1Averaging { binary, macro };

// Undefined precision or recall counts as 0. Macro averages over classes seen in either vector.
double f1(std::span<const int> y_true, std::span<const int> y_pred, F1Averaging averaging, int positive = 1);

// Mann-Whitney statistic with 1/2 credit for ties. y_true holds 0/1, 1 = positive.
double roc_auc(std::span<const int> y_true, std::span<const double> scores);
// Step-wise precision-recall sum over every distinct score threshold (no interpolation).
double aupr(std::span<const int> y_true, std::span<const double> scores);
// Macro one-vs-rest ROC-AUC over the classes present in y_true.
double roc_auc_ovr(std::span<const int> y_true, const PredictionSet& preds);

double rmse(std::span<const double> y_true, std::span<const double> y_pred);

enum class GapMode { absolute, relative };

// absolute: metric_i - metric_0; relative: (metric_i - metric_0) / metric_0.
double performance_gap(double metric_0, double metric_i, GapMode mode);

// 1 - max_c p(c|x): larger means more likely novel.
std::vector<double> novelty_score(const PredictionSet& preds);

struct NoveltyConfig {
    double theta_min = 0.4;
    double theta_max = 0.6;

    void validate() const;
};

inline constexpr std::array<NoveltyConfig, 3> kUncertaintyIntervals{
    NoveltyConfig{0.4, 0.6}, NoveltyConfig{0.45, 0.55}, NoveltyConfig{0.49, 0.51}};

// Fraction of rows whose max probability lies in [theta_min, theta_max] (inclusive).
double uncertainty_proportion(const PredictionSet& preds, const NoveltyConfig& cfg);

enum class Objective { accuracy, balanced_accuracy, f1, roc_auc, aupr, rmse };

std::string to_string(Objective objective);
Objective parse_objective(std::string_view name);
bool higher_is_better(Objective objective);
bool applies_to(Objective objective, TaskType task);
// Scores predictions against the dataset targets (ids must align). Binary F1/AUPR use class code 1 as positive.
double evaluate(Objective objective, const Dataset& test, const PredictionSet& preds);

// ---------------------------------------------------------------------------

struct EncRunMetrics {
    int held_out_class = 0;
    double roc_auc = 0.0;
    double aupr = 0.0;
    // ROC-AUC of the hard interval rule (novel iff max probability in [theta_min, theta_max]).
    double interval_roc_auc = 0.0;
    // Share of novel samples whose max probability falls in each of kUncertaintyIntervals.
    std::array<double, 3> uncertainty{};
};

struct EncReport {
    std::vector<EncRunMetrics> runs;
    // Unweighted mean over runs (held_out_class is -1).
    EncRunMetrics mean;
    NoveltyConfig config;
};

EncReport enc_evaluate(std::span<const EncRun> runs, std::span<const PredictionSet> predictions,
                       const NoveltyConfig& cfg = {});

// ---------------------------------------------------------------------------

// Ranks within one cell: 1 = best, ties share the mean of their ranks.
std::vector<double> rank_cell(std::span<const double> values, bool higher_is_better);

struct RankSummary {
    Eigen::MatrixXd cell_ranks;   // model x cell
    Eigen::MatrixXd group_ranks;  // model x group: mean rank over the group's cells
    Eigen::VectorXd mean_rank;    // mean over groups
};

/// Ranks models in every cell of `values` (model x cell, NaN = missing, which
/// is an error), averages per group (e.g. per task), then across groups.
/// With no groups all cells form one group.
RankSummary rank_table(const Eigen::MatrixXd& values, std::span<const bool> higher_is_better,
                       std::span<const std::size_t> groups = {});

}  // namespace openenv
