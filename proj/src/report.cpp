#include "vqg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace vqg {

ReportFormat parse_report_format(std::string_view name) {
  if (name == "text") return ReportFormat::text;
  if (name == "csv") return ReportFormat::csv;
  throw UsageError("unknown report format '" + std::string(name) + "'");
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string("NA");
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(columns.size(), 0);
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      const std::size_t pad = width[c] - std::min(width[c], cell.size());
      if (c == 0) {
        line += cell + std::string(pad, ' ');
      } else {
        line += "  " + std::string(pad, ' ') + cell;
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(columns);
  for (const auto& row : rows) emit(row);
  return out.str();
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

std::string Table::to_csv() const {
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << ',';
      out << csv_field(cells[c]);
    }
    out << '\n';
  };
  emit(columns);
  for (const auto& row : rows) emit(row);
  return out.str();
}

std::string Table::render(ReportFormat format) const {
  return format == ReportFormat::csv ? to_csv() : to_text();
}

Table correlation_table(const CorrelationReport& r) {
  Table t{{"coefficient", "value", "p"}, {}};
  t.rows.push_back({"pearson_r", format_number(r.pearson_r), format_number(r.p_pearson)});
  t.rows.push_back({"spearman_rho", format_number(r.spearman_rho), format_number(r.p_spearman)});
  t.rows.push_back({"kendall_tau_b", format_number(r.kendall_tau_b), format_number(r.p_kendall)});
  return t;
}

Table baseline_table(const HumanBaselineReport& report) {
  const bool embed = std::any_of(report.rows.begin(), report.rows.end(),
                                 [](const BaselineRow& r) { return r.embedding.has_value(); });
  Table t{{"system", "bleu", "smoothed_bleu", "delta_bleu", "meteor_exact"}, {}};
  if (embed) t.columns.push_back("avg_embedding");
  t.columns.push_back("human");
  for (const auto& r : report.rows) {
    std::vector<std::string> row{r.system, format_number(r.bleu), format_number(r.smoothed_bleu),
                                 format_optional(r.delta_bleu), format_number(r.meteor_exact)};
    if (embed) row.push_back(format_optional(r.embedding));
    row.push_back(format_optional(r.human));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table stats_summary_table(const DatasetStats& s) {
  Table t{{"statistic", "value"}, {}};
  t.rows.push_back({"vocab_size", std::to_string(s.vocab_size)});
  t.rows.push_back({"total_questions", std::to_string(s.total_questions)});
  t.rows.push_back({"mean_question_length", format_number(s.mean_question_length)});
  t.rows.push_back({"abstract_fraction", format_number(s.abstract_fraction)});
  t.rows.push_back({"inter_annotator_similarity", format_number(s.inter_annotator_similarity)});
  return t;
}

Table length_histogram_table(const DatasetStats& s) {
  Table t{{"length", "count"}, {}};
  for (const auto& [len, n] : s.length_histogram) {
    t.rows.push_back({std::to_string(len), std::to_string(n)});
  }
  return t;
}

Table top_words_table(const DatasetStats& s) {
  Table t{{"rank", "token", "count"}, {}};
  for (std::size_t i = 0; i < s.top_words.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), s.top_words[i].first,
                      std::to_string(s.top_words[i].second)});
  }
  return t;
}

Table ngram_tree_table(const DatasetStats& s) {
  Table t{{"path", "depth", "count"}, {}};
  if (!s.ngram_tree) return t;
  std::function<void(const NgramTreeNode&, const std::string&, int)> walk =
      [&](const NgramTreeNode& node, const std::string& prefix, int depth) {
        for (const auto* c : node.sorted_children()) {
          const std::string path = prefix.empty() ? c->token : prefix + " " + c->token;
          t.rows.push_back({path, std::to_string(depth + 1), std::to_string(c->count)});
          walk(*c, path, depth + 1);
        }
      };
  walk(*s.ngram_tree, "", 0);
  return t;
}

Table system_scores_table(const std::vector<SystemScores>& systems) {
  const bool embed = std::any_of(systems.begin(), systems.end(),
                                 [](const SystemScores& s) { return s.embedding.has_value(); });
  Table t{{"system", "items", "bleu", "p1", "p2", "p3", "p4", "bp", "hyp_len", "ref_len",
           "smoothed_bleu", "delta_bleu", "meteor_exact"},
          {}};
  if (embed) t.columns.push_back("avg_embedding");
  for (const auto& s : systems) {
    std::vector<std::string> row{s.system, std::to_string(s.items), format_number(s.bleu.score)};
    for (double p : s.bleu.precision) row.push_back(format_number(p));
    row.push_back(format_number(s.bleu.brevity_penalty));
    row.push_back(std::to_string(s.bleu.hyp_len));
    row.push_back(std::to_string(s.bleu.ref_len));
    row.push_back(format_number(s.smoothed_bleu));
    row.push_back(s.delta_bleu ? format_number(s.delta_bleu->score) : "NA");
    row.push_back(format_number(s.meteor_exact));
    if (embed) row.push_back(format_optional(s.embedding));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace vqg
