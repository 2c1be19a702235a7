#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "openenv/error.hpp"
#include "openenv/shift.hpp"

namespace openenv {

namespace {

void check_weights(const Eigen::VectorXd& w, Eigen::Index expected, const char* name) {
    if (w.size() != expected) throw DataError(std::string("weight vector ") + name + " does not match the cost matrix");
    if (!w.allFinite() || w.minCoeff() < 0.0) throw DataError(std::string("weight vector ") + name + " has negative entries");
    if (std::abs(w.sum() - 1.0) > 1e-9) throw DataError(std::string("weight vector ") + name + " does not sum to 1");
}

std::vector<Eigen::Index> support(const Eigen::VectorXd& w) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) idx.push_back(i);
    }
    return idx;
}

}  // namespace

void OtddConfig::validate() const {
    if (!(entropic_epsilon > 0.0)) throw ConfigError("entropic epsilon must be positive");
    if (subsample_cap < 2) throw ConfigError("OTDD subsample cap must be at least 2");
    if (max_iterations == 0) throw ConfigError("Sinkhorn needs at least one iteration");
    if (!(marginal_tolerance > 0.0)) throw ConfigError("Sinkhorn marginal tolerance must be positive");
}

double effective_epsilon(const Eigen::MatrixXd& cost, const OtddConfig& cfg) {
    cfg.validate();
    if (!cfg.relative_epsilon || cost.size() == 0) return cfg.entropic_epsilon;
    std::vector<double> entries(cost.data(), cost.data() + cost.size());
    const auto mid = entries.begin() + static_cast<std::ptrdiff_t>(entries.size() / 2);
    std::nth_element(entries.begin(), mid, entries.end());
    double median = *mid;
    if (entries.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(entries.begin(), mid));
    }
    if (median > 0.0) return cfg.entropic_epsilon * median;
    const double mx = cost.maxCoeff();
    return mx > 0.0 ? cfg.entropic_epsilon * mx : cfg.entropic_epsilon;
}

SinkhornResult sinkhorn(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                        const OtddConfig& cfg) {
    if (cost.size() == 0) throw DataError("empty cost matrix");
    if (!cost.allFinite()) throw DataError("cost matrix has non-finite entries");
    check_weights(a, cost.rows(), "a");
    check_weights(b, cost.cols(), "b");

    SinkhornResult res;
    res.epsilon = effective_epsilon(cost, cfg);
    const double eps = res.epsilon;
    const auto rows = support(a);
    const auto cols = support(b);
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(cols.size());

    Eigen::MatrixXd c(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) c(i, j) = cost(rows[i], cols[j]);
    }
    Eigen::VectorXd log_a(n), log_b(m), wa(n), wb(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        wa[i] = a[rows[i]];
        log_a[i] = std::log(wa[i]);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        wb[j] = b[cols[j]];
        log_b[j] = std::log(wb[j]);
    }

    // Dual potentials f, g in cost units, warm-started while eps is annealed
    // down to its target. Iterations run on the kernel with the potentials
    // absorbed (scalings u, v stay moderate and are folded back when they
    // grow). Near-degenerate problems still mix slowly at small eps, so the
    // last stage switches to Newton steps on the dual once plain iterations
    // stall (when the system is small enough to factor).
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    std::vector<double> schedule;
    for (double e = std::max(eps, c.maxCoeff()); e > eps; e *= 0.5) schedule.push_back(e);
    schedule.push_back(eps);

    const std::size_t stage_iterations = 500;
    const bool newton_ok = n + m <= 2500;
    const double absorb_at = 1e30;
    double residual = std::numeric_limits<double>::infinity();
    res.iterations = 0;

    auto coupling_at = [&](const Eigen::VectorXd& ff, const Eigen::VectorXd& gg, double e) {
        Eigen::MatrixXd p(n, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) p(i, j) = std::exp((ff[i] + gg[j] - c(i, j)) / e);
        }
        return p;
    };

    Eigen::MatrixXd kernel;
    Eigen::VectorXd u, v;
    auto absorb = [&](double e) {
        f.array() += e * u.array().log();
        g.array() += e * v.array().log();
        kernel = coupling_at(f, g, e);
        u.setOnes(n);
        v.setOnes(m);
    };
    auto check_positive = [&](const Eigen::VectorXd& s) {
        if (!(s.minCoeff() > 0.0) || !s.allFinite()) {
            throw ConvergenceError("Sinkhorn kernel underflow; increase epsilon", residual);
        }
    };
    // One row and one column update; returns the row residual before the update.
    auto sweep = [&](double e) {
        const Eigen::VectorXd kv = kernel * v;
        check_positive(kv);
        const double r = (u.cwiseProduct(kv) - wa).lpNorm<1>();
        u = wa.cwiseQuotient(kv);
        const Eigen::VectorXd ktu = kernel.transpose() * u;
        check_positive(ktu);
        v = wb.cwiseQuotient(ktu);
        if (u.maxCoeff() > absorb_at || v.maxCoeff() > absorb_at || u.minCoeff() < 1.0 / absorb_at ||
            v.minCoeff() < 1.0 / absorb_at) {
            absorb(e);
        }
        return r;
    };
    auto newton_step = [&](double e) {
        const Eigen::MatrixXd p = coupling_at(f, g, e);
        const Eigen::VectorXd rs = p.rowwise().sum(), cs = p.colwise().sum().transpose();
        // The potentials are defined up to (f + t, g - t); the last g stays fixed.
        const Eigen::Index dim = n + m - 1;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd grad(dim);
        h.topLeftCorner(n, n).diagonal() = rs;
        h.topRightCorner(n, m - 1) = p.leftCols(m - 1);
        h.bottomLeftCorner(m - 1, n) = p.leftCols(m - 1).transpose();
        h.bottomRightCorner(m - 1, m - 1).diagonal() = cs.head(m - 1);
        grad.head(n) = wa - rs;
        grad.tail(m - 1) = wb.head(m - 1) - cs.head(m - 1);
        h.diagonal().array() += 1e-14 * h.diagonal().maxCoeff();
        const Eigen::VectorXd d = h.ldlt().solve(grad);
        auto dual = [&](const Eigen::VectorXd& ff, const Eigen::VectorXd& gg) {
            return (wa.dot(ff) + wb.dot(gg)) / e - coupling_at(ff, gg, e).sum();
        };
        const double base = dual(f, g);
        const double slope = grad.dot(d);
        for (double t = 1.0; t > 1e-10; t *= 0.5) {
            Eigen::VectorXd ff = f + e * t * d.head(n);
            Eigen::VectorXd gg = g;
            gg.head(m - 1) += e * t * d.tail(m - 1);
            const double val = dual(ff, gg);
            if (std::isfinite(val) && val >= base + 1e-4 * t * slope) {
                f = std::move(ff);
                g = std::move(gg);
                return;
            }
        }
    };

    u.setOnes(n);
    v.setOnes(m);
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        const double e = schedule[stage];
        const bool last = stage + 1 == schedule.size();
        // Intermediate stages only warm-start the next one.
        const double tolerance = last ? cfg.marginal_tolerance : std::max(cfg.marginal_tolerance, 1e-4);
        kernel = coupling_at(f, g, e);
        bool converged = false;
        for (std::size_t it = 0; res.iterations < cfg.max_iterations; ++it, ++res.iterations) {
            if (last && newton_ok && m > 1 && it >= stage_iterations) {
                absorb(e);
                newton_step(e);
                kernel = coupling_at(f, g, e);
                const Eigen::VectorXd ktu = kernel.transpose() * u;
                check_positive(ktu);
                v = wb.cwiseQuotient(ktu);
                residual = ((kernel * v) - wa).lpNorm<1>();
            } else {
                const double r = sweep(e);
                if (it > 0) residual = r;
            }
            if (it > 0 && residual <= tolerance) {
                converged = true;
                break;
            }
            if (!last && it >= stage_iterations) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            throw ConvergenceError("Sinkhorn did not converge in " + std::to_string(cfg.max_iterations) +
                                       " iterations (marginal residual " + std::to_string(residual) + ")",
                                   residual);
        }
        absorb(e);
    }

    res.coupling = Eigen::MatrixXd::Zero(cost.rows(), cost.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            res.coupling(rows[i], cols[j]) = std::exp((f[i] + g[j] - c(i, j)) / eps);
        }
    }
    res.marginal_error = (res.coupling.rowwise().sum() - a).lpNorm<1>() +
                         (res.coupling.colwise().sum().transpose() - b).lpNorm<1>();
    res.cost = (res.coupling.array() * cost.array()).sum();
    return res;
}

namespace {

std::map<int, GaussianSummary> class_summaries(const Dataset& ds, const char* side) {
    std::map<int, std::vector<Eigen::Index>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) rows[static_cast<int>(ds.targets[i])].push_back(static_cast<Eigen::Index>(i));
    std::map<int, GaussianSummary> out;
    for (const auto& [code, idx] : rows) {
        if (idx.size() < 2) {
            throw DataError("class '" + ds.schema.target.levels.at(static_cast<std::size_t>(code)) + "' in dataset " +
                            side + " has fewer than 2 samples");
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = ds.features.row(idx[r]);
        out.emplace(code, gaussian_summary(x));
    }
    return out;
}

}  // namespace

OtddResult otdd_report(const Dataset& a_in, const Dataset& b_in, const OtddConfig& cfg) {
    cfg.validate();
    if (!a_in.schema.is_classification() || !b_in.schema.is_classification()) {
        throw ConfigError("OTDD needs classification datasets");
    }
    if (a_in.features.cols() != b_in.features.cols()) throw DataError("OTDD datasets differ in feature count");
    if (a_in.empty() || b_in.empty()) throw DataError("OTDD on an empty dataset");
    if (!a_in.features.allFinite() || !b_in.features.allFinite()) {
        throw DataError("OTDD inputs contain missing values; impute first");
    }
    // The same seed on both sides keeps the distance symmetric under swapping.
    const Dataset a = stratified_subsample(a_in, cfg.subsample_cap, cfg.seed, StrataMode::class_only);
    const Dataset b = stratified_subsample(b_in, cfg.subsample_cap, cfg.seed, StrataMode::class_only);

    const auto ga = class_summaries(a, "A");
    const auto gb = class_summaries(b, "B");
    std::map<std::pair<int, int>, double> label_cost;
    for (const auto& [ca, sa] : ga) {
        for (const auto& [cb, sb] : gb) label_cost[{ca, cb}] = gaussian_w2(sa, sb);
    }

    const auto n = static_cast<Eigen::Index>(a.size());
    const auto m = static_cast<Eigen::Index>(b.size());
    Eigen::MatrixXd cost(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int ya = static_cast<int>(a.targets[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m; ++j) {
            const int yb = static_cast<int>(b.targets[static_cast<std::size_t>(j)]);
            cost(i, j) = (a.features.row(i) - b.features.row(j)).squaredNorm() + label_cost.at({ya, yb});
        }
    }
    const Eigen::VectorXd wa = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const Eigen::VectorXd wb = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    const auto sk = sinkhorn(cost, wa, wb, cfg);

    OtddResult r;
    r.transport_cost = sk.cost;
    r.distance = std::sqrt(std::max(0.0, sk.cost));
    r.epsilon = sk.epsilon;
    r.iterations = sk.iterations;
    r.rows_a = a.size();
    r.rows_b = b.size();
    return r;
}

double otdd(const Dataset& a, const Dataset& b, const OtddConfig& cfg) { return otdd_report(a, b, cfg).distance; }

}  // namespace openenv
