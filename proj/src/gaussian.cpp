#include <cmath>

#include <Eigen/Eigenvalues>

#include "openenv/error.hpp"
#include "openenv/shift.hpp"

namespace openenv {

namespace {

constexpr double kSymmetryTolerance = 1e-8;

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

void require_symmetric(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw DataError("matrix is not square");
    const double asym = (a - a.transpose()).norm();
    if (asym > kSymmetryTolerance * std::max(1.0, a.norm())) {
        throw DataError("matrix is not symmetric (|A - A'|_F = " + std::to_string(asym) + ")");
    }
}

}  // namespace

GaussianSummary gaussian_summary(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw DataError("Gaussian summary needs at least 2 rows");
    if (!x.allFinite()) throw DataError("Gaussian summary input contains non-finite values");
    GaussianSummary g;
    g.n = static_cast<std::size_t>(x.rows());
    g.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
    g.covariance = symmetrized(centered.transpose() * centered / static_cast<double>(x.rows()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.covariance);
    if (eig.eigenvalues().minCoeff() < 0.0) {
        const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
        g.covariance = symmetrized(eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose());
    }
    return g;
}

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& a) {
    require_symmetric(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrized(a));
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return symmetrized(eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose());
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("matrix dimensions differ");
    require_symmetric(b);
    const Eigen::MatrixXd root_a = spd_sqrt(a);
    const Eigen::MatrixXd inner = symmetrized(root_a * b * root_a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

double gaussian_w2(const GaussianSummary& g1, const GaussianSummary& g2) {
    if (g1.mean.size() != g2.mean.size()) {
        throw DataError("Gaussian dimension mismatch (" + std::to_string(g1.mean.size()) + " vs " +
                        std::to_string(g2.mean.size()) + ")");
    }
    const double mean_term = (g1.mean - g2.mean).squaredNorm();
    const double cov_term = g1.covariance.trace() + g2.covariance.trace() -
                            2.0 * trace_sqrt_product(g1.covariance, g2.covariance);
    return std::max(0.0, mean_term + cov_term);
}

double fdd(const Eigen::MatrixXd& emb_train, const Eigen::MatrixXd& emb_test) {
    if (emb_train.cols() != emb_test.cols()) throw DataError("embedding dimensions differ");
    return gaussian_w2(gaussian_summary(emb_train), gaussian_summary(emb_test));
}

double fdd_layers(std::span<const std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> layers, FddAggregation mode) {
    if (layers.empty()) throw DataError("no activation layers supplied");
    if (mode == FddAggregation::final_layer) return fdd(layers.back().first, layers.back().second);
    double sum = 0.0;
    for (const auto& [train, test] : layers) sum += fdd(train, test);
    return sum;
}

double label_shift(std::span<const int> y_train, std::span<const int> y_test) {
    if (y_train.empty() || y_test.empty()) throw DataError("label shift on an empty label vector");
    auto mean = [](std::span<const int> y) {
        double s = 0.0;
        for (int v : y) {
            if (v != 0 && v != 1) throw DataError("label shift is defined for binary 0/1 targets only");
            s += v;
        }
        return s / static_cast<double>(y.size());
    };
    const double d = mean(y_train) - mean(y_test);
    return d * d;
}

}  // namespace openenv
