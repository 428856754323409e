#include "vqg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <tuple>

namespace vqg {

int NgramTable::total() const {
  int sum = 0;
  for (const auto& [gram, c] : counts) sum += c;
  return sum;
}

NgramTable extract_ngrams(const TokenSequence& seq, int n) {
  if (n < 1 || n > kMaxNgramOrder) {
    throw UsageError("n-gram order " + std::to_string(n) + " outside 1..6");
  }
  NgramTable table;
  table.order = n;
  const auto order = static_cast<std::size_t>(n);
  if (seq.size() < order) return table;
  for (std::size_t i = 0; i + order <= seq.size(); ++i) {
    ++table.counts[Ngram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                         seq.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return table;
}

std::string BleuReport::to_key_value() const {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "score=" << score << '\n';
  for (std::size_t n = 0; n < precision.size(); ++n) {
    out << 'p' << (n + 1) << '=' << precision[n] << '\n';
  }
  out << "bp=" << brevity_penalty << '\n';
  out << "hyp_len=" << hyp_len << '\n';
  out << "ref_len=" << ref_len << '\n';
  return out.str();
}

namespace {

using OrderTables = std::array<NgramTable, kBleuOrder>;

OrderTables all_orders(const TokenSequence& seq) {
  OrderTables t;
  for (int n = 1; n <= kBleuOrder; ++n) t[static_cast<std::size_t>(n - 1)] = extract_ngrams(seq, n);
  return t;
}

std::size_t closest_ref_length(std::size_t hyp_len, std::span<const std::size_t> ref_lens) {
  std::size_t best = ref_lens.front();
  for (std::size_t r : ref_lens) {
    const auto d = [&](std::size_t x) {
      return x > hyp_len ? x - hyp_len : hyp_len - x;
    };
    if (d(r) < d(best) || (d(r) == d(best) && r < best)) best = r;
  }
  return best;
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len > ref_len) return 1.0;
  if (hyp_len == 0) return 0.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

struct Counts {
  std::array<double, kBleuOrder> matched{};
  std::array<double, kBleuOrder> total{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

// Clipped n-gram matches of one hypothesis against a reference set.
void accumulate_clipped(const TokenSequence& hyp, std::span<const TokenSequence> refs,
                        Counts& counts) {
  const OrderTables hyp_tables = all_orders(hyp);
  std::vector<OrderTables> ref_tables;
  std::vector<std::size_t> ref_lens;
  ref_tables.reserve(refs.size());
  for (const auto& r : refs) {
    ref_tables.push_back(all_orders(r));
    ref_lens.push_back(r.size());
  }
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    for (const auto& [gram, c] : hyp_tables[n].counts) {
      int clip = 0;
      for (const auto& rt : ref_tables) clip = std::max(clip, rt[n].count(gram));
      counts.matched[n] += std::min(c, clip);
    }
    counts.total[n] += hyp.size() > n ? static_cast<double>(hyp.size() - n) : 0.0;
  }
  counts.hyp_len += hyp.size();
  counts.ref_len += closest_ref_length(hyp.size(), ref_lens);
}

BleuReport finish(const std::array<double, kBleuOrder>& numerators,
                  const std::array<double, kBleuOrder>& denominators, std::size_t hyp_len,
                  std::size_t ref_len) {
  BleuReport report;
  report.hyp_len = hyp_len;
  report.ref_len = ref_len;
  report.brevity_penalty = brevity_penalty(hyp_len, ref_len);
  bool all_positive = true;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    // An order with no hypothesis n-grams at all (every hypothesis shorter
    // than n) is vacuously precise.
    const double p = denominators[n] > 0.0 ? numerators[n] / denominators[n] : 1.0;
    report.precision[n] = p;
    if (p > 0.0) {
      log_sum += std::log(p);
    } else {
      all_positive = false;
    }
  }
  report.score = all_positive ? report.brevity_penalty * std::exp(log_sum / kBleuOrder) : 0.0;
  return report;
}

void check_parallel(std::size_t hyps, std::size_t refsets) {
  if (hyps != refsets) {
    throw UsageError("hypotheses (" + std::to_string(hyps) + ") and reference sets (" +
                     std::to_string(refsets) + ") differ in length");
  }
  if (hyps == 0) throw DataError("cannot score an empty corpus");
}

}  // namespace

BleuReport corpus_bleu(std::span<const TokenSequence> hyps,
                       std::span<const std::vector<TokenSequence>> refsets) {
  check_parallel(hyps.size(), refsets.size());
  Counts counts;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refsets[i].empty()) throw DataError("item " + std::to_string(i) + " has no references");
    accumulate_clipped(hyps[i], refsets[i], counts);
  }
  return finish(counts.matched, counts.total, counts.hyp_len, counts.ref_len);
}

double sentence_bleu_smoothed(const TokenSequence& hyp, std::span<const TokenSequence> refs) {
  if (refs.empty()) throw DataError("smoothed BLEU needs at least one reference");
  if (hyp.empty()) return 0.0;
  Counts counts;
  accumulate_clipped(hyp, refs, counts);
  if (counts.matched[0] == 0.0) return 0.0;
  double log_sum = std::log(counts.matched[0] / counts.total[0]);
  for (std::size_t n = 1; n < kBleuOrder; ++n) {
    log_sum += std::log((counts.matched[n] + 1.0) / (counts.total[n] + 1.0));
  }
  return brevity_penalty(counts.hyp_len, counts.ref_len) * std::exp(log_sum / kBleuOrder);
}

BleuReport delta_bleu(std::span<const TokenSequence> hyps,
                      std::span<const WeightedReferenceSet> refsets) {
  check_parallel(hyps.size(), refsets.size());
  std::array<double, kBleuOrder> numerator{};
  std::array<double, kBleuOrder> denominator{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& refs = refsets[i];
    if (refs.empty()) throw DataError("item " + std::to_string(i) + " has no references");
    double max_weight = -std::numeric_limits<double>::infinity();
    std::vector<OrderTables> ref_tables;
    std::vector<std::size_t> ref_lens;
    for (const auto& r : refs) {
      if (!(r.weight >= -1.0 && r.weight <= 1.0)) {
        throw DataError("item " + std::to_string(i) + " has a reference weight outside [-1,1]");
      }
      max_weight = std::max(max_weight, r.weight);
      ref_tables.push_back(all_orders(r.tokens));
      ref_lens.push_back(r.tokens.size());
    }
    if (max_weight <= 0.0) {
      throw DataError("item " + std::to_string(i) + " has no positively weighted reference");
    }

    const OrderTables hyp_tables = all_orders(hyps[i]);
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      for (const auto& [gram, c] : hyp_tables[n].counts) {
        std::optional<double> best;
        for (std::size_t j = 0; j < refs.size(); ++j) {
          const int rc = ref_tables[j][n].count(gram);
          if (rc == 0) continue;
          const double credit = refs[j].weight * std::min(c, rc);
          if (!best || credit > *best) best = credit;
        }
        numerator[n] += best.value_or(0.0);
        denominator[n] += max_weight * c;
      }
    }
    hyp_len += hyps[i].size();
    ref_len += closest_ref_length(hyps[i].size(), ref_lens);
  }
  for (auto& v : numerator) v = std::max(v, 0.0);
  return finish(numerator, denominator, hyp_len, ref_len);
}

// ---------------------------------------------------------------------------
// METEOR, exact-match module only

namespace {

struct Alignment {
  int matches = 0;
  int chunks = 0;
};

// Left-to-right greedy alignment that extends the running chunk when it can.
// Still reaches the maximum match count because every hypothesis token is
// matched while an unused reference copy exists.
Alignment greedy_alignment(const TokenSequence& hyp, const TokenSequence& ref) {
  std::vector<bool> used(ref.size(), false);
  Alignment a;
  long prev = -2;
  for (const auto& tok : hyp) {
    long pick = -1;
    const auto next = static_cast<std::size_t>(prev + 1);
    if (prev >= -1 && next < ref.size() && !used[next] && ref[next] == tok) {
      pick = static_cast<long>(next);
    } else {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!used[j] && ref[j] == tok) {
          pick = static_cast<long>(j);
          break;
        }
      }
    }
    if (pick < 0) {
      prev = -2;
      continue;
    }
    used[static_cast<std::size_t>(pick)] = true;
    ++a.matches;
    if (pick != prev + 1 || prev < 0) ++a.chunks;
    prev = pick;
  }
  return a;
}

// Exhaustive search for the maximum-match alignment with the fewest chunks.
class ChunkMinimizer {
 public:
  ChunkMinimizer(const TokenSequence& hyp, const TokenSequence& ref) : hyp_(hyp), ref_(ref) {
    std::map<std::string_view, int> hc;
    std::map<std::string_view, int> rc;
    for (const auto& t : hyp) ++hc[t];
    for (const auto& t : ref) ++rc[t];
    for (const auto& [tok, c] : hc) {
      auto it = rc.find(tok);
      if (it != rc.end()) matches_ += std::min(c, it->second);
    }
    // hyp_left_[i]: occurrences of hyp[i]'s token at positions >= i.
    hyp_left_.resize(hyp.size());
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      int n = 0;
      for (std::size_t k = i; k < hyp.size(); ++k) n += hyp[k] == hyp[i];
      hyp_left_[i] = n;
    }
  }

  int matches() const { return matches_; }

  std::optional<int> min_chunks() {
    const int links = search(0, -1, 0);
    if (exhausted_) return std::nullopt;
    return matches_ - links;
  }

 private:
  static constexpr int kInfeasible = -1000000;
  static constexpr std::size_t kStateBudget = 200000;

  int unused_ref_copies(const std::string& tok, std::uint64_t mask) const {
    int n = 0;
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      n += (ref_[j] == tok && !(mask >> j & 1U));
    }
    return n;
  }

  // Maximum number of adjacent links from position i on; prev is the ref
  // position matched to hyp[i-1] or -1.
  int search(std::size_t i, int prev, std::uint64_t mask) {
    if (i == hyp_.size()) return 0;
    if (exhausted_) return kInfeasible;
    const auto key = std::make_tuple(i, prev, mask);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (memo_.size() >= kStateBudget) {
      exhausted_ = true;
      return kInfeasible;
    }

    const auto& tok = hyp_[i];
    const int free_refs = unused_ref_copies(tok, mask);
    int best = kInfeasible;
    // Leaving hyp[i] unmatched is allowed only if the later copies can still
    // use up every free reference copy.
    if (hyp_left_[i] - 1 >= free_refs) best = std::max(best, search(i + 1, -1, mask));
    if (free_refs > 0) {
      for (std::size_t j = 0; j < ref_.size(); ++j) {
        if (ref_[j] != tok || (mask >> j & 1U)) continue;
        const int link = (prev >= 0 && static_cast<std::size_t>(prev) + 1 == j) ? 1 : 0;
        const int rest = search(i + 1, static_cast<int>(j), mask | (std::uint64_t{1} << j));
        if (rest > kInfeasible) best = std::max(best, rest + link);
      }
    }
    memo_.emplace(key, best);
    return best;
  }

  const TokenSequence& hyp_;
  const TokenSequence& ref_;
  int matches_ = 0;
  std::vector<int> hyp_left_;
  std::map<std::tuple<std::size_t, int, std::uint64_t>, int> memo_;
  bool exhausted_ = false;
};

Alignment align(const TokenSequence& hyp, const TokenSequence& ref) {
  if (hyp.size() <= 64 && ref.size() <= 64) {
    ChunkMinimizer search(hyp, ref);
    if (search.matches() == 0) return {};
    if (auto chunks = search.min_chunks()) return {search.matches(), *chunks};
  }
  return greedy_alignment(hyp, ref);
}

}  // namespace

double meteor_exact(const TokenSequence& hyp, std::span<const TokenSequence> refs,
                    const MeteorParams& params) {
  if (refs.empty()) throw DataError("METEOR needs at least one reference");
  if (hyp.empty()) return 0.0;
  double best = 0.0;
  for (const auto& ref : refs) {
    if (ref.empty()) continue;
    const Alignment a = align(hyp, ref);
    if (a.matches == 0) continue;
    const double m = a.matches;
    const double precision = m / static_cast<double>(hyp.size());
    const double recall = m / static_cast<double>(ref.size());
    const double fmean =
        precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    const double penalty = params.gamma * std::pow(a.chunks / m, params.beta);
    best = std::max(best, fmean * (1.0 - penalty));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Embedding similarity

namespace {

Eigen::VectorXd mean_vector(const TokenSequence& seq, const EmbeddingTable& table,
                            std::string_view side) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.dimension()));
  std::size_t covered = 0;
  for (const auto& tok : seq) {
    if (const auto* v = table.find(tok)) {
      sum += *v;
      ++covered;
    }
  }
  if (covered == 0) {
    throw DataError("no token of sequence " + std::string(side) + " has an embedding");
  }
  return sum / static_cast<double>(covered);
}

}  // namespace

double embedding_similarity(const TokenSequence& a, const TokenSequence& b,
                            const EmbeddingTable& table) {
  const Eigen::VectorXd ma = mean_vector(a, table, "a");
  const Eigen::VectorXd mb = mean_vector(b, table, "b");
  const double na = ma.norm();
  const double nb = mb.norm();
  if (na == 0.0 || nb == 0.0) throw DataError("mean embedding has zero norm");
  double dot = 0.0;
  for (Eigen::Index i = 0; i < ma.size(); ++i) dot += ma[i] * mb[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::size_t embedding_misses(const TokenSequence& seq, const EmbeddingTable& table) {
  return static_cast<std::size_t>(std::count_if(
      seq.begin(), seq.end(), [&](const std::string& t) { return table.find(t) == nullptr; }));
}

}  // namespace vqg
