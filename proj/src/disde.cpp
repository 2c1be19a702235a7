#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "openenv/error.hpp"
#include "openenv/random.hpp"
#include "openenv/shift.hpp"

namespace openenv {

namespace {

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string propensity_histogram(const Eigen::VectorXd& p) {
    std::vector<std::size_t> bins(10, 0);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        ++bins[std::min<std::size_t>(9, static_cast<std::size_t>(p[i] * 10.0))];
    }
    std::ostringstream os;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        os << (b ? " " : "") << "[" << b / 10.0 << "," << (b + 1) / 10.0 << "):" << bins[b];
    }
    return os.str();
}

}  // namespace

DisdeReport disde(std::span<const double> losses_p, const Eigen::MatrixXd& x_p, std::span<const double> losses_q,
                  const Eigen::MatrixXd& x_q, const DisdeConfig& cfg) {
    if (losses_p.empty() || losses_q.empty()) throw DataError("decomposition needs samples from both domains");
    if (static_cast<std::size_t>(x_p.rows()) != losses_p.size() ||
        static_cast<std::size_t>(x_q.rows()) != losses_q.size()) {
        throw DataError("loss and feature row counts disagree");
    }
    if (x_p.cols() != x_q.cols()) throw DataError("source and target feature counts differ");
    if (!(cfg.eta > 0.0 && cfg.eta < 0.5)) throw ConfigError("eta must lie in (0, 0.5)");
    if (cfg.k == 0 || cfg.k > losses_p.size() || cfg.k > losses_q.size()) {
        throw ConfigError("k = " + std::to_string(cfg.k) + " exceeds a domain size (" +
                          std::to_string(losses_p.size()) + ", " + std::to_string(losses_q.size()) + ")");
    }
    if (!x_p.allFinite() || !x_q.allFinite()) throw DataError("decomposition inputs contain missing values");

    const auto np = x_p.rows();
    const auto nq = x_q.rows();
    Eigen::MatrixXd pooled(np + nq, x_p.cols());
    pooled.topRows(np) = x_p;
    pooled.bottomRows(nq) = x_q;
    const Eigen::RowVectorXd mu = pooled.colwise().mean();
    pooled.rowwise() -= mu;
    for (Eigen::Index j = 0; j < pooled.cols(); ++j) {
        const double sd = std::sqrt(pooled.col(j).squaredNorm() / static_cast<double>(pooled.rows()));
        if (sd > 0.0) pooled.col(j) /= sd;
    }

    std::vector<int> domain(static_cast<std::size_t>(np + nq), 0);
    std::fill(domain.begin() + np, domain.end(), 1);
    const auto classifier = logreg_fit(pooled, domain, cfg.domain_classifier);
    const Eigen::VectorXd propensity = logreg_probability(classifier, pooled);

    std::vector<Eigen::Index> overlap;
    for (Eigen::Index i = 0; i < propensity.size(); ++i) {
        if (propensity[i] >= cfg.eta && propensity[i] <= 1.0 - cfg.eta) overlap.push_back(i);
    }
    if (overlap.empty()) {
        std::ostringstream os;
        os << "empty overlap region at eta = " << cfg.eta << "; propensity histogram " << propensity_histogram(propensity);
        throw DataError(os.str());
    }

    DisdeReport r;
    r.eta = cfg.eta;
    r.k_neighbors = cfg.k;
    r.overlap_fraction = static_cast<double>(overlap.size()) / static_cast<double>(np + nq);
    if (overlap.size() > cfg.max_overlap_points) {
        Rng rng(cfg.seed);
        overlap = sample_without_replacement(overlap, cfg.max_overlap_points, rng);
        std::sort(overlap.begin(), overlap.end());
    }
    r.overlap_size = overlap.size();

    const Eigen::MatrixXd zp = pooled.topRows(np);
    const Eigen::MatrixXd zq = pooled.bottomRows(nq);
    double sum_rp = 0.0, sum_rq = 0.0;
    for (auto s : overlap) {
        const Eigen::RowVectorXd point = pooled.row(s);
        double rp = 0.0, rq = 0.0;
        for (auto j : nearest_neighbors(zp, point, cfg.k)) rp += losses_p[j];
        for (auto j : nearest_neighbors(zq, point, cfg.k)) rq += losses_q[j];
        sum_rp += rp / static_cast<double>(cfg.k);
        sum_rq += rq / static_cast<double>(cfg.k);
    }
    const double overlap_rp = sum_rp / static_cast<double>(overlap.size());
    const double overlap_rq = sum_rq / static_cast<double>(overlap.size());

    r.mean_loss_p = mean_of(losses_p);
    r.mean_loss_q = mean_of(losses_q);
    r.total_gap = r.mean_loss_q - r.mean_loss_p;
    r.term_1 = overlap_rp - r.mean_loss_p;
    r.term_2 = overlap_rq - overlap_rp;
    r.term_3 = r.mean_loss_q - overlap_rq;
    return r;
}

std::string shift_pattern(const DisdeReport& report) {
    return std::abs(report.term_2) > std::abs(report.term_1 + report.term_3) ? "Y|X-dominant" : "X-dominant";
}

ShiftProfile shift_profile(const CddScenario& scenario, const Eigen::MatrixXd& emb_train,
                           const Eigen::MatrixXd& emb_ood, const PredictionSet& preds_id,
                           const PredictionSet& preds_ood, const ShiftProfileConfig& cfg) {
    ShiftProfile p;
    const auto ot = otdd_report(scenario.train, scenario.ood_test, cfg.otdd);
    p.delta_x = ot.distance;
    p.delta_y_given_x = fdd(emb_train, emb_ood);
    p.delta_y = label_shift(scenario.train.labels(), scenario.ood_test.labels());

    const auto losses_id = per_sample_loss(preds_id, scenario.id_test, cfg.loss);
    const auto losses_ood = per_sample_loss(preds_ood, scenario.ood_test, cfg.loss);
    p.disde = disde(losses_id, scenario.id_test.features, losses_ood, scenario.ood_test.features, cfg.disde);
    p.pattern = shift_pattern(p.disde);

    std::ostringstream os;
    os << "otdd: epsilon=" << ot.epsilon << " (" << (cfg.otdd.relative_epsilon ? "relative " : "absolute ")
       << cfg.otdd.entropic_epsilon << "), iterations=" << ot.iterations << ", rows=" << ot.rows_a << "/"
       << ot.rows_b << ", cap=" << cfg.otdd.subsample_cap << ", seed=" << cfg.otdd.seed
       << "; fdd: dim=" << emb_train.cols() << "; disde: eta=" << cfg.disde.eta << ", k=" << cfg.disde.k
       << ", overlap=" << p.disde.overlap_size << "; " << scenario.provenance;
    p.provenance = os.str();
    return p;
}

}  // namespace openenv
