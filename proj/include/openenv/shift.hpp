#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "openenv/data.hpp"
#include "openenv/models.hpp"
#include "openenv/predictions.hpp"
#include "openenv/scenario.hpp"

namespace openenv {

// ---------------------------------------------------------------------------
// Gaussian summaries and the Bures-Wasserstein distance

struct GaussianSummary {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // population covariance, symmetric PSD
    std::size_t n = 0;
};

// Column means and population covariance; negative eigenvalues are clipped to 0.
GaussianSummary gaussian_summary(const Eigen::MatrixXd& x);

// Principal square root of a symmetric PSD matrix via eigendecomposition (eigenvalues clipped at 0).
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& a);

// Tr(sqrt(A B)) for symmetric PSD A, B, evaluated as Tr(sqrt(A^1/2 B A^1/2)).
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Squared 2-Wasserstein distance between N(mu1, S1) and N(mu2, S2):
// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2). Clamped at 0.
double gaussian_w2(const GaussianSummary& g1, const GaussianSummary& g2);

// Frechet distance between Gaussian fits of two embedding sets.
double fdd(const Eigen::MatrixXd& emb_train, const Eigen::MatrixXd& emb_test);

enum class FddAggregation { final_layer, sum_layers };

// Per-layer (train, test) activations in layer order.
double fdd_layers(std::span<const std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> layers, FddAggregation mode);

// (mean(y_train) - mean(y_test))^2 for 0/1 labels.
double label_shift(std::span<const int> y_train, std::span<const int> y_test);

// ---------------------------------------------------------------------------
// Entropic optimal transport

struct OtddConfig {
    // Regularisation strength; multiplied by the median ground cost when relative_epsilon is set.
    double entropic_epsilon = 0.05;
    bool relative_epsilon = true;
    std::size_t max_iterations = 10000;
    // L1 marginal residual at which Sinkhorn stops.
    double marginal_tolerance = 1e-7;
    // Rows kept per side (class-stratified) before building the ground cost.
    std::size_t subsample_cap = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SinkhornResult {
    Eigen::MatrixXd coupling;
    double cost = 0.0;  // <coupling, cost>
    double epsilon = 0.0;
    std::size_t iterations = 0;
    double marginal_error = 0.0;
};

// Epsilon actually used for `cost` under `cfg` (relative to the median entry when requested).
double effective_epsilon(const Eigen::MatrixXd& cost, const OtddConfig& cfg);

/// Log-domain Sinkhorn iterations (with epsilon scaling) for entropy-regularised transport between
/// weight vectors `a` and `b` (non-negative, each summing to 1). Throws
/// ConvergenceError carrying the residual if the marginal tolerance is not
/// reached within cfg.max_iterations.
SinkhornResult sinkhorn(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                        const OtddConfig& cfg);

struct OtddResult {
    double distance = 0.0;
    double transport_cost = 0.0;
    double epsilon = 0.0;
    std::size_t iterations = 0;
    std::size_t rows_a = 0;
    std::size_t rows_b = 0;
};

/// Optimal transport dataset distance with Gaussian class-conditionals.
///
/// The ground cost between (x, y) and (x', y') is |x - x'|^2 plus the squared
/// Bures-Wasserstein distance between the Gaussian fitted to class y in `a`
/// and the one fitted to class y' in `b`. The distance is the square root of
/// the entropic transport cost under uniform weights. Features are used as
/// given, so callers standardise first.
OtddResult otdd_report(const Dataset& a, const Dataset& b, const OtddConfig& cfg = {});
double otdd(const Dataset& a, const Dataset& b, const OtddConfig& cfg = {});

// ---------------------------------------------------------------------------
// Generalisation-gap decomposition

struct DisdeConfig {
    // Propensity trimming: the overlap keeps pooled points with P(target | x) in [eta, 1 - eta].
    double eta = 0.1;
    std::size_t k = 10;
    std::uint64_t seed = 0;
    // Overlap points used for the conditional-risk averages (uniform subsample above this).
    std::size_t max_overlap_points = 5000;
    LogRegConfig domain_classifier{};
};

struct DisdeReport {
    double term_1 = 0.0;  // E_S[R_P] - E_P[loss]: covariate shift, source side
    double term_2 = 0.0;  // E_S[R_Q - R_P]: conditional (Y|X) shift
    double term_3 = 0.0;  // E_Q[loss] - E_S[R_Q]: covariate shift, target side
    double total_gap = 0.0;
    double mean_loss_p = 0.0;
    double mean_loss_q = 0.0;
    double overlap_fraction = 0.0;
    std::size_t overlap_size = 0;
    double eta = 0.0;
    std::size_t k_neighbors = 0;
};

/// Splits mean(losses_q) - mean(losses_p) into the three terms above.
///
/// The overlap comes from a logistic domain classifier fitted on the pooled,
/// standardised features; conditional risks on it are k-nearest-neighbour
/// averages of each domain's losses. The terms telescope to total_gap by
/// construction.
DisdeReport disde(std::span<const double> losses_p, const Eigen::MatrixXd& x_p, std::span<const double> losses_q,
                  const Eigen::MatrixXd& x_q, const DisdeConfig& cfg = {});

// ---------------------------------------------------------------------------

struct ShiftProfile {
    double delta_x = 0.0;
    double delta_y_given_x = 0.0;
    double delta_y = 0.0;
    DisdeReport disde;
    // "Y|X-dominant" when |term_2| > |term_1 + term_3|, else "X-dominant".
    std::string pattern;
    std::string provenance;
};

std::string shift_pattern(const DisdeReport& report);

struct ShiftProfileConfig {
    OtddConfig otdd;
    DisdeConfig disde;
    LossKind loss = LossKind::zero_one;
};

/// Assembles delta_x = OTDD(train, ood_test), delta_y|x = FDD of classifier
/// activations on train vs ood_test, delta_y = label shift train vs ood_test,
/// and the decomposition of the model's id_test -> ood_test loss gap.
/// `scenario` should carry standardised features.
ShiftProfile shift_profile(const CddScenario& scenario, const Eigen::MatrixXd& emb_train,
                           const Eigen::MatrixXd& emb_ood, const PredictionSet& preds_id,
                           const PredictionSet& preds_ood, const ShiftProfileConfig& cfg = {});

}  // namespace openenv
