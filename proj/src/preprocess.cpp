#include <cmath>
#include <map>

#include "openenv/data.hpp"
#include "openenv/error.hpp"

namespace openenv {

namespace {

void require_same_schema(const DatasetSchema& fitted, const DatasetSchema& ds) {
    if (!same_features(fitted, ds)) {
        throw DataError("schema mismatch: dataset features differ from the fitted feature set");
    }
}

}  // namespace

Standardizer fit_standardizer(const Dataset& train) {
    if (train.empty()) throw DataError("cannot fit statistics on an empty dataset");
    Standardizer s;
    s.schema = train.schema;
    s.columns.resize(train.schema.num_features());
    for (std::size_t j = 0; j < s.columns.size(); ++j) {
        const auto col = train.features.col(static_cast<Eigen::Index>(j));
        auto& st = s.columns[j];
        if (train.schema.features[j].kind == ColumnKind::categorical) {
            std::map<int, std::size_t> counts;
            for (Eigen::Index i = 0; i < col.size(); ++i) {
                if (!std::isnan(col[i])) ++counts[static_cast<int>(col[i])];
            }
            std::size_t best = 0;
            for (const auto& [code, count] : counts) {
                if (count > best) {
                    best = count;
                    st.mode = code;
                }
            }
            continue;
        }
        double sum = 0.0;
        std::size_t n = 0;
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::isnan(col[i])) continue;
            sum += col[i];
            ++n;
        }
        if (n == 0) throw DataError("column '" + train.schema.features[j].name + "' has no non-missing values");
        st.mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::isnan(col[i])) continue;
            ss += (col[i] - st.mean) * (col[i] - st.mean);
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        if (sd > 0.0 && sd > 1e-12 * std::max(1.0, std::abs(st.mean))) {
            st.stddev = sd;
        } else {
            st.stddev = 1.0;
            st.constant = true;
        }
    }
    return s;
}

Dataset apply_standardizer(const Standardizer& s, const Dataset& ds) {
    require_same_schema(s.schema, ds.schema);
    Dataset out = ds;
    for (std::size_t j = 0; j < s.columns.size(); ++j) {
        if (ds.schema.features[j].kind == ColumnKind::categorical) continue;
        const auto& st = s.columns[j];
        auto col = out.features.col(static_cast<Eigen::Index>(j));
        col = (col.array() - st.mean) / st.stddev;
    }
    return out;
}

ImputeModel fit_imputer(const Dataset& train) { return ImputeModel{fit_standardizer(train)}; }

Dataset impute(const ImputeModel& model, const Dataset& ds, std::span<const std::string> missing_columns) {
    const auto& train_schema = model.stats.schema;
    std::vector<std::size_t> cols;
    for (const auto& name : missing_columns) {
        auto j = train_schema.find_feature(name);
        if (!j) throw DataError("cannot impute column absent from the training schema: " + name);
        cols.push_back(*j);
    }
    require_same_schema(train_schema, ds.schema);
    Dataset out = ds;
    for (auto j : cols) {
        const auto& st = model.stats.columns[j];
        const double fill =
            train_schema.features[j].kind == ColumnKind::categorical ? static_cast<double>(st.mode) : st.mean;
        out.features.col(static_cast<Eigen::Index>(j)).setConstant(fill);
    }
    return out;
}

Dataset fill_missing(const ImputeModel& model, const Dataset& ds) {
    const auto& train_schema = model.stats.schema;
    require_same_schema(train_schema, ds.schema);
    Dataset out = ds;
    for (std::size_t j = 0; j < model.stats.columns.size(); ++j) {
        const auto& st = model.stats.columns[j];
        const double fill =
            train_schema.features[j].kind == ColumnKind::categorical ? static_cast<double>(st.mode) : st.mean;
        auto col = out.features.col(static_cast<Eigen::Index>(j));
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::isnan(col[i])) col[i] = fill;
        }
    }
    return out;
}

}  // namespace openenv
