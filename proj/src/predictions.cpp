#include "openenv/predictions.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "openenv/error.hpp"

namespace openenv {

namespace {

constexpr double kRowSumTolerance = 1e-6;
constexpr double kRenormaliseTolerance = 1e-3;

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 10) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) os << (i ? ", " : "") << ids[i];
    if (ids.size() > limit) os << ", ... (" << ids.size() << " total)";
    return os.str();
}

}  // namespace

std::vector<int> PredictionSet::predicted_classes() const {
    std::vector<int> out(size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(i, c) > probs(i, best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = class_order[static_cast<std::size_t>(best)];
    }
    return out;
}

std::vector<double> PredictionSet::max_probability() const {
    std::vector<double> out(size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = probs.row(i).maxCoeff();
    return out;
}

std::vector<double> PredictionSet::class_probability(int code) const {
    std::vector<double> out(size(), 0.0);
    for (std::size_t c = 0; c < class_order.size(); ++c) {
        if (class_order[c] != code) continue;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
    return out;
}

void PredictionSet::check() const {
    if (kind == PredictionKind::regression) {
        if (static_cast<std::size_t>(values.size()) != size()) throw DataError("prediction count disagrees with ids");
        return;
    }
    if (static_cast<std::size_t>(probs.rows()) != size()) throw DataError("probability rows disagree with ids");
    if (static_cast<std::size_t>(probs.cols()) != class_order.size() || class_order.empty()) {
        throw DataError("probability columns disagree with class order");
    }
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        if (!row.allFinite() || row.minCoeff() < 0.0 || row.maxCoeff() > 1.0 ||
            std::abs(row.sum() - 1.0) > kRowSumTolerance) {
            throw DataError("probability row for sample " + sample_ids[static_cast<std::size_t>(i)] +
                            " is not a distribution");
        }
    }
}

PredictionSet PredictionSet::aligned_to(std::span<const std::string> ids) const {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < sample_ids.size(); ++i) pos.emplace(sample_ids[i], i);
    std::vector<std::string> missing;
    std::vector<std::size_t> order;
    order.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) {
            missing.push_back(id);
        } else {
            order.push_back(it->second);
        }
    }
    if (!missing.empty()) throw DataError("predictions missing for ids: " + join_ids(missing));
    if (sample_ids.size() != ids.size()) {
        std::unordered_set<std::string> wanted(ids.begin(), ids.end());
        std::vector<std::string> extra;
        for (const auto& id : sample_ids) {
            if (!wanted.count(id)) extra.push_back(id);
        }
        throw DataError("predictions for ids not in the scenario: " + join_ids(extra));
    }
    PredictionSet out;
    out.kind = kind;
    out.class_order = class_order;
    out.sample_ids.assign(ids.begin(), ids.end());
    if (kind == PredictionKind::regression) {
        out.values.resize(static_cast<Eigen::Index>(order.size()));
        for (std::size_t i = 0; i < order.size(); ++i) {
            out.values[static_cast<Eigen::Index>(i)] = values[static_cast<Eigen::Index>(order[i])];
        }
    } else {
        out.probs.resize(static_cast<Eigen::Index>(order.size()), probs.cols());
        for (std::size_t i = 0; i < order.size(); ++i) {
            out.probs.row(static_cast<Eigen::Index>(i)) = probs.row(static_cast<Eigen::Index>(order[i]));
        }
    }
    return out;
}

PredictionSet load_predictions(const std::filesystem::path& path, const PredictionManifest& manifest) {
    if (!std::filesystem::exists(path)) throw DataError("missing prediction file: " + path.string());
    const auto table = csv::read_raw(path, ',');
    const bool regression = manifest.class_names.empty();
    if (table.header.empty() || table.header[0] != "id") {
        throw DataError(path.string() + ": first header column must be 'id'");
    }
    if (regression) {
        if (table.header.size() != 2 || table.header[1] != "value") {
            throw DataError(path.string() + ": regression predictions need header 'id,value'");
        }
    } else {
        if (manifest.class_order.size() != manifest.class_names.size()) {
            throw ConfigError("prediction manifest class names and codes disagree");
        }
        if (table.header.size() != manifest.class_names.size() + 1) {
            throw DataError(path.string() + ": expected " + std::to_string(manifest.class_names.size()) +
                            " probability columns");
        }
        for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
            if (table.header[c + 1] != "p_" + manifest.class_names[c]) {
                throw DataError(path.string() + ": column " + std::to_string(c + 2) + " should be p_" +
                                manifest.class_names[c] + " (class order must match the manifest)");
            }
        }
    }

    PredictionSet raw;
    raw.kind = regression ? PredictionKind::regression : PredictionKind::class_probs;
    raw.class_order = manifest.class_order;
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    const auto k = static_cast<Eigen::Index>(table.header.size() - 1);
    if (regression) {
        raw.values.resize(n);
    } else {
        raw.probs.resize(n, k);
    }
    std::unordered_set<std::string> seen;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const auto& id = row[0];
        if (!seen.insert(id).second) throw DataError(path.string() + ": duplicate prediction id " + id);
        raw.sample_ids.push_back(id);
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto v = csv::parse_number(row[static_cast<std::size_t>(c + 1)]);
            if (!v) throw DataError(path.string() + ": malformed value in row with id " + id);
            if (regression) {
                raw.values[i] = *v;
            } else {
                if (*v < 0.0 || *v > 1.0) throw DataError(path.string() + ": probability outside [0,1] for id " + id);
                raw.probs(i, c) = *v;
            }
        }
        if (!regression) {
            const double sum = raw.probs.row(i).sum();
            if (std::abs(sum - 1.0) > kRenormaliseTolerance) {
                throw DataError(path.string() + ": probabilities for id " + id + " sum to " + csv::format_number(sum));
            }
            raw.probs.row(i) /= sum;
        }
    }
    auto aligned = raw.aligned_to(manifest.sample_ids);
    aligned.check();
    return aligned;
}

void write_predictions(const PredictionSet& preds, std::span<const std::string> class_names,
                       const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    if (preds.kind == PredictionKind::regression) {
        out << "id,value\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            out << csv::quote_field(preds.sample_ids[i], ',') << ','
                << csv::format_number(preds.values[static_cast<Eigen::Index>(i)]) << '\n';
        }
        return;
    }
    if (class_names.size() != preds.class_order.size()) throw ConfigError("class name count disagrees with predictions");
    out << "id";
    for (const auto& name : class_names) out << ",p_" << name;
    out << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out << csv::quote_field(preds.sample_ids[i], ',');
        for (Eigen::Index c = 0; c < preds.probs.cols(); ++c) {
            out << ',' << csv::format_number(preds.probs(static_cast<Eigen::Index>(i), c));
        }
        out << '\n';
    }
}

Embeddings load_embeddings(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("missing embedding file: " + path.string());
    const auto table = csv::read_raw(path, ',');
    if (table.header.size() < 2 || table.header[0] != "id") {
        throw DataError(path.string() + ": embedding header must be 'id,e_1,...,e_d'");
    }
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        if (table.header[c] != "e_" + std::to_string(c)) {
            throw DataError(path.string() + ": embedding column " + std::to_string(c + 1) + " should be e_" +
                            std::to_string(c));
        }
    }
    Embeddings emb;
    const auto d = static_cast<Eigen::Index>(table.header.size() - 1);
    emb.values.resize(static_cast<Eigen::Index>(table.rows.size()), d);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (!seen.insert(row[0]).second) throw DataError(path.string() + ": duplicate embedding id " + row[0]);
        emb.sample_ids.push_back(row[0]);
        for (Eigen::Index c = 0; c < d; ++c) {
            const auto v = csv::parse_number(row[static_cast<std::size_t>(c + 1)]);
            if (!v) throw DataError(path.string() + ": malformed embedding value for id " + row[0]);
            emb.values(static_cast<Eigen::Index>(i), c) = *v;
        }
    }
    return emb;
}

void write_embeddings(const Embeddings& emb, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    out << "id";
    for (Eigen::Index c = 0; c < emb.values.cols(); ++c) out << ",e_" << (c + 1);
    out << '\n';
    for (std::size_t i = 0; i < emb.sample_ids.size(); ++i) {
        out << csv::quote_field(emb.sample_ids[i], ',');
        for (Eigen::Index c = 0; c < emb.values.cols(); ++c) {
            out << ',' << csv::format_number(emb.values(static_cast<Eigen::Index>(i), c));
        }
        out << '\n';
    }
}

}  // namespace openenv
