#include "openenv/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "openenv/error.hpp"
#include "openenv/metrics.hpp"

namespace openenv {

ReportCell ReportCell::metric(double v, std::string trace) {
    ReportCell c;
    c.value = v;
    c.trace = std::move(trace);
    return c;
}

ReportCell ReportCell::with_gap(double v, double gap, std::string trace) {
    ReportCell c = metric(v, std::move(trace));
    c.gap = gap;
    return c;
}

ReportCell ReportCell::ratio(double v, std::string trace) {
    ReportCell c = metric(v, std::move(trace));
    c.decimals = 4;
    return c;
}

ReportCell ReportCell::label(std::string text) {
    ReportCell c;
    c.text = std::move(text);
    return c;
}

std::string format_fixed(double value, int decimals) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string s(buf);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string format_cell(const ReportCell& cell) {
    if (cell.text) return *cell.text;
    std::string s = format_fixed(cell.value, cell.decimals);
    if (cell.gap) {
        std::string g = format_fixed(*cell.gap, cell.gap_decimals);
        const bool zero = g.find_first_not_of("0.") == std::string::npos;
        if (!zero && g.front() != '-') g.insert(0, "+");
        s += "(" + g + ")";
    }
    return s;
}

void ReportTable::check() const {
    if (cells.size() != row_labels.size()) {
        throw DataError("table '" + caption + "' has " + std::to_string(cells.size()) + " cell rows for " +
                        std::to_string(row_labels.size()) + " row labels");
    }
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (cells[r].size() != column_labels.size()) {
            throw DataError("table '" + caption + "' row '" + row_labels[r] + "' has the wrong number of cells");
        }
    }
}

bool ReportTable::has_values() const {
    for (const auto& row : cells) {
        for (const auto& c : row) {
            if (c) return true;
        }
    }
    return false;
}

namespace {

std::string render_plain(std::span<const ReportTable> tables) {
    std::ostringstream os;
    bool first = true;
    for (const auto& t : tables) {
        if (!first) os << "\n";
        first = false;
        os << t.caption << "\n";

        std::vector<std::vector<std::string>> grid;
        grid.push_back({t.corner});
        for (const auto& c : t.column_labels) grid.back().push_back(c);
        for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
            grid.push_back({t.row_labels[r]});
            for (const auto& c : t.cells[r]) grid.back().push_back(c ? format_cell(*c) : "-");
        }
        std::vector<std::size_t> width(t.column_labels.size() + 1, 0);
        for (const auto& row : grid) {
            for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
        }
        auto emit_row = [&](const std::vector<std::string>& row) {
            std::string line;
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) line += "  ";
                // Labels left-aligned, numbers right-aligned.
                const std::string pad(width[j] - row[j].size(), ' ');
                line += j == 0 ? row[j] + pad : pad + row[j];
            }
            while (!line.empty() && line.back() == ' ') line.pop_back();
            os << line << "\n";
        };
        emit_row(grid[0]);
        std::size_t total = 0;
        for (auto w : width) total += w;
        os << std::string(total + 2 * (width.size() - 1), '-') << "\n";
        for (std::size_t r = 1; r < grid.size(); ++r) emit_row(grid[r]);
        for (const auto& f : t.footnotes) os << "  * " << f << "\n";
    }
    return os.str();
}

std::string render_structured(std::span<const ReportTable> tables) {
    nlohmann::ordered_json doc;
    doc["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : tables) {
        nlohmann::ordered_json jt;
        jt["caption"] = t.caption;
        jt["corner"] = t.corner;
        jt["columns"] = t.column_labels;
        jt["rows"] = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
            nlohmann::ordered_json row;
            row["label"] = t.row_labels[r];
            row["cells"] = nlohmann::ordered_json::array();
            for (const auto& c : t.cells[r]) {
                if (!c) {
                    row["cells"].push_back(nullptr);
                    continue;
                }
                nlohmann::ordered_json jc;
                jc["display"] = format_cell(*c);
                if (c->text) {
                    jc["text"] = *c->text;
                } else {
                    jc["value"] = c->value;
                    if (c->gap) jc["gap"] = *c->gap;
                }
                if (!c->trace.empty()) jc["trace"] = c->trace;
                row["cells"].push_back(std::move(jc));
            }
            jt["rows"].push_back(std::move(row));
        }
        jt["footnotes"] = t.footnotes;
        doc["tables"].push_back(std::move(jt));
    }
    return doc.dump(2) + "\n";
}

}  // namespace

std::string render_report(std::span<const ReportTable> tables, ReportFormat format) {
    bool any = false;
    for (const auto& t : tables) {
        t.check();
        any = any || t.has_values();
    }
    if (!any) throw DataError("no results to report");
    return format == ReportFormat::plain ? render_plain(tables) : render_structured(tables);
}

void emit_report(std::span<const ReportTable> tables, ReportFormat format, const std::filesystem::path& path) {
    const std::string body = render_report(tables, format);
    auto out = csv::open_output(path);
    out << body;
    out.flush();
    if (!out) throw DataError("failed writing report " + path.string());
}

ReportTable rank_report(std::span<const TaskScores> tasks) {
    if (tasks.empty()) throw DataError("rank report needs at least one task");
    const auto& models = tasks.front().models;
    if (models.size() < 2) throw DataError("rank report needs at least two models");

    std::size_t total_cells = 0;
    for (const auto& t : tasks) {
        if (t.models != models) throw DataError("task '" + t.task + "' lists a different model set");
        if (t.cells.empty()) throw DataError("task '" + t.task + "' has no cells");
        if (t.higher_is_better.size() != t.cells.size() || t.values.size() != models.size()) {
            throw DataError("task '" + t.task + "' has an incomplete score matrix");
        }
        total_cells += t.cells.size();
    }

    Eigen::MatrixXd values(static_cast<Eigen::Index>(models.size()), static_cast<Eigen::Index>(total_cells));
    std::vector<bool> hib_flags;
    std::vector<std::size_t> groups;
    Eigen::Index col = 0;
    for (std::size_t g = 0; g < tasks.size(); ++g) {
        const auto& t = tasks[g];
        for (std::size_t c = 0; c < t.cells.size(); ++c, ++col) {
            for (std::size_t m = 0; m < models.size(); ++m) {
                if (t.values[m].size() != t.cells.size() || std::isnan(t.values[m][c])) {
                    throw DataError("incomplete score matrix: task '" + t.task + "', model '" + models[m] +
                                    "', cell '" + t.cells[c] + "'");
                }
                values(static_cast<Eigen::Index>(m), col) = t.values[m][c];
            }
            hib_flags.push_back(t.higher_is_better[c]);
            groups.push_back(g);
        }
    }
    // std::vector<bool> has no contiguous storage.
    std::unique_ptr<bool[]> hib(new bool[hib_flags.size()]);
    std::copy(hib_flags.begin(), hib_flags.end(), hib.get());
    const auto ranks = rank_table(values, std::span<const bool>(hib.get(), hib_flags.size()), groups);

    ReportTable table;
    table.caption = "Average rank per task (1 = best; ties share the mean rank)";
    table.corner = "task";
    table.column_labels = models;
    for (std::size_t g = 0; g < tasks.size(); ++g) {
        table.row_labels.push_back(tasks[g].task);
        auto& row = table.cells.emplace_back();
        for (std::size_t m = 0; m < models.size(); ++m) {
            row.push_back(ReportCell::metric(ranks.group_ranks(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g)),
                                             "rank/" + tasks[g].task + "/" + models[m]));
        }
    }
    table.row_labels.push_back("Average Rank");
    auto& avg = table.cells.emplace_back();
    for (std::size_t m = 0; m < models.size(); ++m) {
        avg.push_back(ReportCell::metric(ranks.mean_rank[static_cast<Eigen::Index>(m)], "rank/average/" + models[m]));
    }
    for (const auto& t : tasks) {
        std::string note = t.task + " cells:";
        for (std::size_t c = 0; c < t.cells.size(); ++c) note += (c ? ", " : " ") + t.cells[c];
        table.footnotes.push_back(note);
    }
    return table;
}

}  // namespace openenv
