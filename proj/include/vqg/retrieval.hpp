#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vqg/corpus.hpp"

namespace vqg {

/// 1 - cos(a, b), clamped to [0, 2]. Throws on zero norm or size mismatch.
double cosine_distance(const FeatureVector& a, const FeatureVector& b);

/// Index of the reference with the highest smoothed BLEU against the other
/// references taken as one multi-reference set. Lowest index wins ties.
std::size_t one_best_index(std::span<const TokenSequence> refs);
TokenSequence one_best(std::span<const TokenSequence> refs);

struct IndexEntry {
  std::string image_id;
  FeatureVector features;
  double norm = 0.0;
  TokenSequence one_best;
  std::vector<TokenSequence> refs;
};

class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  explicit RetrievalIndex(std::vector<IndexEntry> entries);

  std::span<const IndexEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Eigen::Index dimension() const { return dimension_; }

 private:
  std::vector<IndexEntry> entries_;
  Eigen::Index dimension_ = 0;
};

/// Builds the index from train-split records (any other split is rejected).
RetrievalIndex build_index(std::span<const ImageRecord> train_records);

/// Persists image ids, one-best questions and references; features are
/// stored as a reference to the dataset record with the same id.
void save_index(const std::filesystem::path& path, const RetrievalIndex& index);
RetrievalIndex load_index(const std::filesystem::path& path,
                          std::span<const ImageRecord> feature_source);

enum class SelectionMetric { smoothed_bleu, avg_embedding };

std::string_view to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(std::string_view name);

struct PoolConfig {
  std::size_t k = 30;
  double max_distance = 0.35;
  double min_distance = 0.1;
  SelectionMetric selection_metric = SelectionMetric::smoothed_bleu;

  void validate() const;
};

struct PoolMember {
  std::string image_id;
  double distance = 0.0;
  TokenSequence one_best;

  friend bool operator==(const PoolMember&, const PoolMember&) = default;
};

struct CandidatePool {
  std::vector<PoolMember> members;
  bool shortcut_hit = false;
  bool fallback_used = false;
};

/// Dynamic-K neighbour pool. Neighbours are ordered by ascending distance,
/// then image id. The nearest alone forms the pool when it is within
/// min_distance, or when nothing lies within max_distance (fallback).
CandidatePool query_pool(const RetrievalIndex& index, const FeatureVector& query,
                         const PoolConfig& cfg);

struct RetrievalResult {
  TokenSequence question;
  CandidatePool pool;
  std::size_t selected = 0;  // position of the emitted question in the pool
};

/// Emits the pool question with the highest mean similarity to the rest of
/// the pool. `table` is required for SelectionMetric::avg_embedding.
RetrievalResult retrieve_question(const RetrievalIndex& index, const FeatureVector& query,
                                  const PoolConfig& cfg, const EmbeddingTable* table = nullptr);

/// Mean pairwise similarity selection over an explicit question list.
std::size_t consensus_index(std::span<const TokenSequence> questions, SelectionMetric metric,
                            const EmbeddingTable* table);

}  // namespace vqg
