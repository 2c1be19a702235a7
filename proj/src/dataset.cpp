#include "openenv/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "openenv/error.hpp"

namespace openenv {

std::string to_string(TaskType task) {
    switch (task) {
        case TaskType::binary: return "binary";
        case TaskType::multiclass: return "multiclass";
        case TaskType::regression: return "regression";
    }
    return "unknown";
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::train: return "train";
        case SplitTag::id_test: return "id_test";
        case SplitTag::ood_test: return "ood_test";
    }
    return "unknown";
}

TaskType parse_task(std::string_view text) {
    if (text == "binary") return TaskType::binary;
    if (text == "multiclass") return TaskType::multiclass;
    if (text == "regression") return TaskType::regression;
    throw ConfigError("unknown task type '" + std::string(text) + "'");
}

SplitTag parse_split(std::string_view text) {
    if (text == "train") return SplitTag::train;
    if (text == "id_test") return SplitTag::id_test;
    if (text == "ood_test") return SplitTag::ood_test;
    throw DataError("unknown split tag '" + std::string(text) + "' (expected train, id_test or ood_test)");
}

std::optional<std::size_t> DatasetSchema::find_feature(std::string_view name) const {
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (features[j].name == name) return j;
    }
    return std::nullopt;
}

std::size_t DatasetSchema::feature_index(std::string_view name) const {
    if (auto j = find_feature(name)) return *j;
    throw DataError("feature column absent: " + std::string(name));
}

std::vector<std::string> DatasetSchema::feature_names() const {
    std::vector<std::string> names;
    names.reserve(features.size());
    for (const auto& c : features) names.push_back(c.name);
    return names;
}

void DatasetSchema::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& c : features) {
        if (c.name == target.name) throw DataError("target column '" + c.name + "' listed as a feature");
        if (!seen.insert(c.name).second) throw DataError("duplicate column name: " + c.name);
    }
    if (task == TaskType::regression && target.kind != ColumnKind::numeric) {
        throw DataError("regression target '" + target.name + "' is not numeric");
    }
    if (task != TaskType::regression && target.levels.size() < 2) {
        throw DataError("classification target '" + target.name + "' has fewer than 2 distinct values");
    }
    if (task == TaskType::binary && target.levels.size() != 2) {
        throw DataError("binary target '" + target.name + "' has " + std::to_string(target.levels.size()) +
                        " classes");
    }
}

bool same_features(const DatasetSchema& a, const DatasetSchema& b) {
    if (a.features.size() != b.features.size()) return false;
    for (std::size_t j = 0; j < a.features.size(); ++j) {
        if (a.features[j].name != b.features[j].name || a.features[j].kind != b.features[j].kind) return false;
    }
    return true;
}

std::vector<int> Dataset::labels() const {
    if (!schema.is_classification()) throw ConfigError("labels requested for a regression dataset");
    std::vector<int> out(targets.size());
    std::transform(targets.begin(), targets.end(), out.begin(), [](double t) { return static_cast<int>(t); });
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.schema = schema;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.targets.reserve(rows.size());
    out.sample_ids.reserve(rows.size());
    if (has_splits()) out.splits.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        if (r >= size()) throw DataError("row index out of range in subset");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(r));
        out.targets.push_back(targets[r]);
        out.sample_ids.push_back(sample_ids[r]);
        if (has_splits()) out.splits.push_back(splits[r]);
    }
    return out;
}

Dataset Dataset::split_part(SplitTag tag) const {
    if (!has_splits()) throw DataError("dataset has no split column");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == tag) rows.push_back(i);
    }
    return subset(rows);
}

void Dataset::check() const {
    const auto n = targets.size();
    if (static_cast<std::size_t>(features.rows()) != n || sample_ids.size() != n) {
        throw DataError("row, target and id counts disagree");
    }
    if (!splits.empty() && splits.size() != n) throw DataError("split tag count disagrees with row count");
    if (static_cast<std::size_t>(features.cols()) != schema.features.size()) {
        throw DataError("feature matrix width disagrees with schema");
    }
    for (std::size_t j = 0; j < schema.features.size(); ++j) {
        const auto& col = schema.features[j];
        if (col.kind != ColumnKind::categorical) continue;
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            const double v = features(i, static_cast<Eigen::Index>(j));
            if (std::isnan(v)) continue;
            if (v < 0 || v >= static_cast<double>(col.levels.size()) || v != std::floor(v)) {
                throw DataError("categorical code out of range in column " + col.name);
            }
        }
    }
    if (schema.is_classification()) {
        for (double t : targets) {
            if (t < 0 || t >= static_cast<double>(schema.num_classes()) || t != std::floor(t)) {
                throw DataError("class code out of range in target " + schema.target.name);
            }
        }
    }
}

}  // namespace openenv
