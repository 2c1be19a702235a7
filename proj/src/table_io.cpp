#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "openenv/data.hpp"
#include "openenv/error.hpp"

namespace openenv {

namespace {

constexpr std::size_t kMaxInferredClasses = 10;

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t header_index(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    return static_cast<std::size_t>(it - header.begin());
}

// Numeric levels sort by value, anything else lexicographically.
std::vector<std::string> sorted_levels(const std::set<std::string>& distinct) {
    std::vector<std::string> levels(distinct.begin(), distinct.end());
    const bool numeric = std::all_of(levels.begin(), levels.end(),
                                     [](const std::string& s) { return csv::parse_number(s).has_value(); });
    if (numeric) {
        std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
            return *csv::parse_number(a) < *csv::parse_number(b);
        });
    }
    return levels;
}

struct ColumnScan {
    std::size_t non_missing = 0;
    bool all_numeric = true;
};

ColumnScan scan_column(const csv::RawTable& t, std::size_t col) {
    ColumnScan s;
    for (const auto& row : t.rows) {
        const auto& v = row[col];
        if (is_missing_token(v)) continue;
        ++s.non_missing;
        if (s.all_numeric && !csv::parse_number(v)) s.all_numeric = false;
    }
    return s;
}

std::string unique_name(std::string base, const std::vector<std::string>& taken) {
    while (contains(taken, base)) base += "_";
    return base;
}

// Name under which write_table stores sample ids.
std::string id_column_name(const DatasetSchema& schema) {
    if (schema.id_column) return *schema.id_column;
    auto taken = schema.feature_names();
    taken.push_back(schema.target.name);
    if (schema.split_column) taken.push_back(*schema.split_column);
    return unique_name("sample_id", taken);
}

Dataset build_dataset(const csv::RawTable& t, const SchemaHints& hints, const std::string& source) {
    if (t.rows.empty()) throw DataError("empty table: " + source);
    {
        std::unordered_set<std::string> seen;
        for (const auto& h : t.header) {
            if (!seen.insert(h).second) throw DataError("duplicate column name: " + h);
        }
    }
    const std::string target = hints.target.value_or(t.header.back());
    if (!contains(t.header, target)) throw DataError("target column absent: " + target);
    if (hints.id_column && !contains(t.header, *hints.id_column)) {
        throw DataError("id column absent: " + *hints.id_column);
    }
    if (hints.split_column && !contains(t.header, *hints.split_column)) {
        throw DataError("split column absent: " + *hints.split_column);
    }
    for (const auto& c : hints.categorical) {
        if (!contains(t.header, c)) throw DataError("categorical column absent: " + c);
    }

    const std::size_t n = t.rows.size();
    Dataset ds;
    auto& schema = ds.schema;
    schema.id_column = hints.id_column;
    schema.split_column = hints.split_column;

    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& name = t.header[c];
        if (name == target || (hints.id_column && name == *hints.id_column) ||
            (hints.split_column && name == *hints.split_column)) {
            continue;
        }
        feature_cols.push_back(c);
    }

    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_cols.size()));
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
        const auto c = feature_cols[j];
        ColumnSpec spec;
        spec.name = t.header[c];
        const auto scan = scan_column(t, c);
        if (scan.non_missing == 0) throw DataError("column '" + spec.name + "' has no non-missing values");
        const bool categorical = contains(hints.categorical, spec.name) || !scan.all_numeric;
        const auto jj = static_cast<Eigen::Index>(j);
        if (categorical) {
            spec.kind = ColumnKind::categorical;
            std::set<std::string> distinct;
            for (const auto& row : t.rows) {
                if (!is_missing_token(row[c])) distinct.insert(row[c]);
            }
            spec.levels = sorted_levels(distinct);
            std::unordered_map<std::string, int> code;
            for (std::size_t k = 0; k < spec.levels.size(); ++k) code[spec.levels[k]] = static_cast<int>(k);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& v = t.rows[i][c];
                ds.features(static_cast<Eigen::Index>(i), jj) =
                    is_missing_token(v) ? std::numeric_limits<double>::quiet_NaN() : code.at(v);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                const auto& v = t.rows[i][c];
                ds.features(static_cast<Eigen::Index>(i), jj) =
                    is_missing_token(v) ? std::numeric_limits<double>::quiet_NaN() : *csv::parse_number(v);
            }
        }
        schema.features.push_back(std::move(spec));
    }

    // Target column.
    const auto tc = header_index(t.header, target);
    const auto tscan = scan_column(t, tc);
    if (tscan.non_missing == 0) throw DataError("column '" + target + "' has no non-missing values");
    for (std::size_t i = 0; i < n; ++i) {
        if (is_missing_token(t.rows[i][tc])) {
            throw DataError("missing target value in row " + std::to_string(i + 1) + " of " + source);
        }
    }
    schema.target.name = target;
    const bool target_numeric = tscan.all_numeric && !contains(hints.categorical, target);
    // Distinct numeric values are keyed by value so "1" and "1.0" are one class.
    std::map<double, std::string> numeric_distinct;
    std::set<std::string> text_distinct;
    for (const auto& row : t.rows) {
        if (target_numeric) {
            numeric_distinct.emplace(*csv::parse_number(row[tc]), row[tc]);
        } else {
            text_distinct.insert(row[tc]);
        }
    }
    if (hints.task) {
        schema.task = *hints.task;
    } else if (!target_numeric) {
        schema.task = text_distinct.size() <= 2 ? TaskType::binary : TaskType::multiclass;
    } else {
        const bool integer_coded = std::all_of(numeric_distinct.begin(), numeric_distinct.end(),
                                               [](const auto& kv) { return kv.first == std::floor(kv.first); });
        if (numeric_distinct.size() <= 2) {
            schema.task = TaskType::binary;
        } else if (numeric_distinct.size() <= kMaxInferredClasses && integer_coded) {
            schema.task = TaskType::multiclass;
        } else {
            schema.task = TaskType::regression;
        }
    }
    ds.targets.resize(n);
    if (schema.task == TaskType::regression) {
        if (!target_numeric) throw DataError("regression target '" + target + "' is not numeric");
        schema.target.kind = ColumnKind::numeric;
        for (std::size_t i = 0; i < n; ++i) ds.targets[i] = *csv::parse_number(t.rows[i][tc]);
    } else {
        schema.target.kind = ColumnKind::categorical;
        if (target_numeric) {
            std::map<double, int> code;
            for (const auto& [value, text] : numeric_distinct) {
                code[value] = static_cast<int>(schema.target.levels.size());
                schema.target.levels.push_back(text);
            }
            for (std::size_t i = 0; i < n; ++i) ds.targets[i] = code.at(*csv::parse_number(t.rows[i][tc]));
        } else {
            schema.target.levels = sorted_levels(text_distinct);
            std::unordered_map<std::string, int> code;
            for (std::size_t k = 0; k < schema.target.levels.size(); ++k) {
                code[schema.target.levels[k]] = static_cast<int>(k);
            }
            for (std::size_t i = 0; i < n; ++i) ds.targets[i] = code.at(t.rows[i][tc]);
        }
    }

    ds.sample_ids.resize(n);
    if (hints.id_column) {
        const auto ic = header_index(t.header, *hints.id_column);
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& id = t.rows[i][ic];
            if (is_missing_token(id)) throw DataError("missing sample id in row " + std::to_string(i + 1));
            if (!seen.insert(id).second) throw DataError("duplicate sample id: " + id);
            ds.sample_ids[i] = id;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) ds.sample_ids[i] = std::to_string(i);
    }

    if (hints.split_column) {
        const auto sc = header_index(t.header, *hints.split_column);
        ds.splits.reserve(n);
        for (const auto& row : t.rows) ds.splits.push_back(parse_split(row[sc]));
    }

    schema.validate();
    ds.check();
    return ds;
}

}  // namespace

bool is_missing_token(std::string_view token) {
    token = csv::trim(token);
    return token.empty() || token == "NA" || token == "?";
}

SchemaHints read_hints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema hints file: " + path.string());
    SchemaHints h;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto view = csv::trim(line);
        if (view.empty() || view.front() == '#') continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key(csv::trim(view.substr(0, eq)));
        const std::string value(csv::trim(view.substr(eq + 1)));
        if (key == "target") {
            h.target = value;
        } else if (key == "task") {
            h.task = parse_task(value);
        } else if (key == "id_column") {
            h.id_column = value;
        } else if (key == "split_column") {
            h.split_column = value;
        } else if (key == "categorical") {
            for (auto& c : csv::split_record(value, ',')) {
                if (!c.empty()) h.categorical.push_back(c);
            }
        } else if (key == "delimiter") {
            if (value == "\\t" || value == "tab") {
                h.delimiter = '\t';
            } else if (value.size() == 1) {
                h.delimiter = value[0];
            } else {
                throw ConfigError("delimiter must be a single character, got '" + value + "'");
            }
        } else {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    return h;
}

void write_hints(const SchemaHints& hints, const std::filesystem::path& path) {
    auto out = csv::open_output(path);
    if (hints.target) out << "target = " << *hints.target << '\n';
    if (hints.task) out << "task = " << to_string(*hints.task) << '\n';
    if (hints.id_column) out << "id_column = " << *hints.id_column << '\n';
    if (hints.split_column) out << "split_column = " << *hints.split_column << '\n';
    if (!hints.categorical.empty()) {
        out << "categorical = ";
        for (std::size_t i = 0; i < hints.categorical.size(); ++i) {
            out << (i ? "," : "") << hints.categorical[i];
        }
        out << '\n';
    }
    if (hints.delimiter == '\t') {
        out << "delimiter = tab\n";
    } else {
        out << "delimiter = " << hints.delimiter << '\n';
    }
}

SchemaHints hints_for(const DatasetSchema& schema) {
    SchemaHints h;
    h.target = schema.target.name;
    h.task = schema.task;
    h.id_column = id_column_name(schema);
    h.split_column = schema.split_column;
    for (const auto& c : schema.features) {
        if (c.kind == ColumnKind::categorical) h.categorical.push_back(c.name);
    }
    if (schema.is_classification()) h.categorical.push_back(schema.target.name);
    return h;
}

Dataset load_table(const std::filesystem::path& path, const SchemaHints& hints) {
    if (!std::filesystem::exists(path)) throw DataError("missing file: " + path.string());
    return build_dataset(csv::read_raw(path, hints.delimiter), hints, path.string());
}

Dataset load_split_tables(const std::filesystem::path& train, const std::filesystem::path& id_test,
                          const std::filesystem::path& ood_test, SchemaHints hints) {
    csv::RawTable pooled;
    const std::filesystem::path parts[] = {train, id_test, ood_test};
    const SplitTag tags[] = {SplitTag::train, SplitTag::id_test, SplitTag::ood_test};
    for (int p = 0; p < 3; ++p) {
        if (!std::filesystem::exists(parts[p])) throw DataError("missing file: " + parts[p].string());
        auto t = csv::read_raw(parts[p], hints.delimiter);
        if (p == 0) {
            pooled.header = t.header;
            hints.split_column = unique_name(hints.split_column.value_or("split"), pooled.header);
            pooled.header.push_back(*hints.split_column);
        } else if (t.header.size() + 1 != pooled.header.size() ||
                   !std::equal(t.header.begin(), t.header.end(), pooled.header.begin())) {
            throw DataError("header of " + parts[p].string() + " differs from " + train.string());
        }
        if (t.rows.empty()) throw DataError("empty table: " + parts[p].string());
        for (auto& row : t.rows) {
            row.push_back(to_string(tags[p]));
            pooled.rows.push_back(std::move(row));
        }
    }
    if (!hints.target) hints.target = pooled.header[pooled.header.size() - 2];
    return build_dataset(pooled, hints, train.string());
}

void write_table(const Dataset& ds, const std::filesystem::path& path, char delimiter) {
    auto out = csv::open_output(path);
    const auto& schema = ds.schema;
    const auto id_name = id_column_name(schema);
    std::vector<std::string> header = schema.feature_names();
    header.push_back(schema.target.name);
    header.push_back(id_name);
    if (ds.has_splits()) header.push_back(schema.split_column.value_or("split"));
    for (std::size_t k = 0; k < header.size(); ++k) {
        out << (k ? std::string(1, delimiter) : "") << csv::quote_field(header[k], delimiter);
    }
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < schema.features.size(); ++j) {
            const double v = ds.features(ii, static_cast<Eigen::Index>(j));
            std::string cell;
            if (!std::isnan(v)) {
                cell = schema.features[j].kind == ColumnKind::categorical
                           ? schema.features[j].levels[static_cast<std::size_t>(v)]
                           : csv::format_number(v);
            }
            out << csv::quote_field(cell, delimiter) << delimiter;
        }
        const std::string target = schema.is_classification()
                                       ? schema.target.levels[static_cast<std::size_t>(ds.targets[i])]
                                       : csv::format_number(ds.targets[i]);
        out << csv::quote_field(target, delimiter) << delimiter << csv::quote_field(ds.sample_ids[i], delimiter);
        if (ds.has_splits()) out << delimiter << to_string(ds.splits[i]);
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace openenv
