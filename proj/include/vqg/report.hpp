#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vqg/analysis.hpp"
#include "vqg/metrics.hpp"

namespace vqg {

enum class ReportFormat { text, csv };

ReportFormat parse_report_format(std::string_view name);

/// Six significant digits, "%.6g".
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// A rectangular report: fixed column order, one row per system or entry.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Space-aligned columns, left-aligned first column.
  std::string to_text() const;
  /// Header row plus one line per row; fields quoted when needed.
  std::string to_csv() const;
  std::string render(ReportFormat format) const;
};

/// coefficient,value,p with one row per coefficient.
Table correlation_table(const CorrelationReport& report);

/// Systems as rows and metrics as columns.
Table baseline_table(const HumanBaselineReport& report);

/// Scalar statistics as key/value rows.
Table stats_summary_table(const DatasetStats& stats);
Table length_histogram_table(const DatasetStats& stats);
Table top_words_table(const DatasetStats& stats);
/// Flattened prefix tree: path, depth, count.
Table ngram_tree_table(const DatasetStats& stats);

struct SystemScores {
  std::string system;
  BleuReport bleu;
  double smoothed_bleu = 0.0;
  std::optional<BleuReport> delta_bleu;
  double meteor_exact = 0.0;
  std::optional<double> embedding;
  std::size_t items = 0;
};

Table system_scores_table(const std::vector<SystemScores>& systems);

/// Writes bytes exactly; throws DataError if the path is not writable.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace vqg
