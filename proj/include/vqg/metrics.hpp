#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vqg/corpus.hpp"

namespace vqg {

using Ngram = std::vector<std::string>;

struct NgramTable {
  int order = 1;
  std::map<Ngram, int> counts;

  int count(const Ngram& gram) const {
    auto it = counts.find(gram);
    return it == counts.end() ? 0 : it->second;
  }
  /// Number of n-gram occurrences (sum of counts).
  int total() const;
};

inline constexpr int kMaxNgramOrder = 6;
inline constexpr int kBleuOrder = 4;

/// Sliding-window n-gram counts, 1 <= n <= 6. Empty when seq is shorter than n.
NgramTable extract_ngrams(const TokenSequence& seq, int n);

struct BleuReport {
  double score = 0.0;
  std::array<double, kBleuOrder> precision{};
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  /// `key=value` lines: score, p1..p4, bp, hyp_len, ref_len.
  std::string to_key_value() const;
};

/// Corpus-level BLEU with equal weights up to 4-grams. Clipping is per
/// reference; the reference length of each item is the one closest to the
/// hypothesis length (ties go to the shorter reference).
BleuReport corpus_bleu(std::span<const TokenSequence> hyps,
                       std::span<const std::vector<TokenSequence>> refsets);

/// Sentence BLEU with add-one smoothing on 2- to 4-gram precisions.
double sentence_bleu_smoothed(const TokenSequence& hyp, std::span<const TokenSequence> refs);

struct WeightedReference {
  TokenSequence tokens;
  double weight = 1.0;
};
using WeightedReferenceSet = std::vector<WeightedReference>;

/// Discriminative BLEU over rated references. Each hypothesis n-gram earns
/// the best weighted clipped count among the references containing it and
/// is normalised by the largest weight of its item. Aggregate numerators are
/// floored at zero. Throws DataError when an item has no positive weight.
BleuReport delta_bleu(std::span<const TokenSequence> hyps,
                      std::span<const WeightedReferenceSet> refsets);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

/// METEOR restricted to exact unigram matches. Among maximum alignments the
/// one with the fewest chunks is used. Best score over the references.
double meteor_exact(const TokenSequence& hyp, std::span<const TokenSequence> refs,
                    const MeteorParams& params = {});

/// Cosine similarity of averaged token vectors. Tokens missing from the
/// table are skipped; throws DataError if a side has no covered token.
double embedding_similarity(const TokenSequence& a, const TokenSequence& b,
                            const EmbeddingTable& table);

/// Number of tokens in seq that are absent from the table.
std::size_t embedding_misses(const TokenSequence& seq, const EmbeddingTable& table);

}  // namespace vqg
