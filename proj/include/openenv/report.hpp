#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace openenv {

/// One table cell: a metric with an optional parenthesised gap, or free text.
struct ReportCell {
    double value = 0.0;
    int decimals = 3;
    std::optional<double> gap;
    int gap_decimals = 3;
    std::optional<std::string> text;
    // Results-log key of the record behind this cell; empty for text cells.
    std::string trace;

    static ReportCell metric(double v, std::string trace = {});
    static ReportCell with_gap(double v, double gap, std::string trace = {});
    // Relative gaps and other ratios shown with 4 decimals.
    static ReportCell ratio(double v, std::string trace = {});
    static ReportCell label(std::string text);
};

// "0.764", "0.764(-0.074)", "1.025(+0.028)"; rounding never yields "-0.000".
std::string format_cell(const ReportCell& cell);
std::string format_fixed(double value, int decimals);

struct ReportTable {
    std::string caption;
    std::string corner;  // header of the row-label column
    std::vector<std::string> row_labels;
    std::vector<std::string> column_labels;
    // row x column; nullopt renders as "-".
    std::vector<std::vector<std::optional<ReportCell>>> cells;
    std::vector<std::string> footnotes;

    // Throws DataError when the cell grid disagrees with the labels.
    void check() const;
    bool has_values() const;
};

enum class ReportFormat { plain, structured };

std::string render_report(std::span<const ReportTable> tables, ReportFormat format);

/// Writes the rendered tables to `path`. Throws DataError when there is
/// nothing to report, so an empty file is never produced.
void emit_report(std::span<const ReportTable> tables, ReportFormat format, const std::filesystem::path& path);

// Per-task scores of several models, the input to rank_report.
struct TaskScores {
    std::string task;
    std::vector<std::string> models;
    std::vector<std::string> cells;  // metric/scenario labels
    std::vector<bool> higher_is_better;
    // values[model][cell]; NaN marks a missing score.
    std::vector<std::vector<double>> values;
};

/// Rows are tasks with each model's mean rank over that task's cells, plus a
/// final "Average Rank" row averaging the task rows. All tasks must list the
/// same models (at least two) and have complete cells.
ReportTable rank_report(std::span<const TaskScores> tasks);

}  // namespace openenv
