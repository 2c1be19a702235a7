#pragma once

// Slow reference implementations used only to check the library.

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Probability that a random positive outscores a random negative, ties worth 1/2.
inline double pair_count_auc(const std::vector<int>& y, const std::vector<double>& s) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Average precision: recount TP/FP at every distinct threshold, sum (R_t - R_prev) * P_t.
inline double threshold_sweep_aupr(const std::vector<int>& y, const std::vector<double>& s) {
    std::set<double, std::greater<>> thresholds(s.begin(), s.end());
    const double positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (s[i] >= t) (y[i] == 1 ? tp : fp) += 1.0;
        }
        const double recall = tp / positives;
        area += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return area;
}

// Exact OT cost between two uniform point clouds of equal size: the optimum is a permutation.
inline double assignment_cost(const Eigen::MatrixXd& cost) {
    std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) c += cost(static_cast<Eigen::Index>(i), perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(perm.size());
}

// Population covariance with explicit loops.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
    const auto n = x.rows(), d = x.cols();
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) mean[j] += x(i, j);
        mean[j] /= static_cast<double>(n);
    }
    Eigen::MatrixXd c(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
            c(a, b) = s / static_cast<double>(n);
        }
    }
    return c;
}

}  // namespace oracle
