#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vqg/corpus.hpp"

namespace vqg {

// ---------------------------------------------------------------------------
// Special functions backing the p-values.

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of Student's t with `dof` degrees of freedom.
double student_t_two_tailed(double t, double dof);

/// Two-tailed p-value of a standard normal deviate.
double normal_two_tailed(double z);

// ---------------------------------------------------------------------------
// Correlation

struct Correlation {
  double coefficient = 0.0;
  double p_value = 1.0;
};

/// Sample Pearson r with a t-test p-value. Throws DataError on n < 3 or
/// zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Pearson over mid-ranks.
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b with tie corrections; normal approximation p-value with the
/// tie-adjusted variance.
Correlation kendall_tau_b(std::span<const double> x, std::span<const double> y);

/// Fractional (mid) ranks starting at 1.
std::vector<double> mid_ranks(std::span<const double> values);

struct CorrelationReport {
  double pearson_r = 0.0, spearman_rho = 0.0, kendall_tau_b = 0.0;
  double p_pearson = 1.0, p_spearman = 1.0, p_kendall = 1.0;
  std::size_t n = 0;
};

CorrelationReport correlate(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Human baselines

struct BaselineRow {
  std::string system;
  double bleu = 0.0;
  double smoothed_bleu = 0.0;
  std::optional<double> delta_bleu;
  double meteor_exact = 0.0;
  std::optional<double> embedding;
  std::optional<double> human;  // mean median rating of the emitted references
};

struct HumanBaselineReport {
  std::vector<BaselineRow> rows;  // consensus, random
  std::size_t items = 0;
  std::size_t skipped = 0;        // records with a single reference
  std::size_t delta_skipped = 0;  // items without a positive reference weight
};

/// Scores Human_consensus (the one-best reference) and Human_random (a
/// seeded uniform pick) against the remaining references of each record.
HumanBaselineReport human_baselines(std::span<const ImageRecord> records,
                                    const EmbeddingTable* table, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset statistics

struct NgramTreeNode {
  std::string token;  // "End" marks questions that stop at this depth
  std::size_t count = 0;
  std::map<std::string, std::unique_ptr<NgramTreeNode>> children;

  NgramTreeNode* child(const std::string& tok);
  const NgramTreeNode* find(const std::string& tok) const;
  /// Children ordered by descending count, ties lexical.
  std::vector<const NgramTreeNode*> sorted_children() const;
};

inline constexpr const char* kTreeEndToken = "End";
inline constexpr int kTreeDepth = 6;

struct DatasetStats {
  std::size_t vocab_size = 0;
  std::size_t total_questions = 0;
  double mean_question_length = 0.0;
  std::map<std::size_t, std::size_t> length_histogram;
  std::vector<std::pair<std::string, std::size_t>> top_words;
  double abstract_fraction = 0.0;
  double inter_annotator_similarity = 0.0;
  std::shared_ptr<NgramTreeNode> ngram_tree;  // root token is empty
};

using Lexicon = std::set<std::string, std::less<>>;

DatasetStats dataset_statistics(std::span<const ImageRecord> records, const Lexicon& abstract_terms,
                                const Lexicon& function_words, std::size_t top_k = 40);

}  // namespace vqg
