#include "vqg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "vqg/metrics.hpp"
#include "vqg/retrieval.hpp"

namespace vqg {

// ---------------------------------------------------------------------------
// Special functions

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw UsageError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw UsageError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double dof) {
  if (!(dof > 0.0)) throw UsageError("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(regularized_incomplete_beta(0.5 * dof, 0.5, x), 0.0, 1.0);
}

double normal_two_tailed(double z) {
  return std::clamp(std::erfc(std::fabs(z) / std::numbers::sqrt2), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Correlation

namespace {

void check_pairs(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
  if (x.size() < 3) throw DataError("correlation needs at least 3 samples");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("non-finite sample");
  }
}

double t_test_p(double r, std::size_t n) {
  if (std::fabs(r) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(dof / (1.0 - r * r));
  return student_t_two_tailed(t, dof);
}

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("correlation undefined for zero variance");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {r, t_test_p(r, x.size())};
}

std::vector<double> mid_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share the average of ranks i+1..j+1
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y);
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  return pearson(rx, ry);
}

namespace {

struct TieSums {
  double pairs = 0.0;  // sum t(t-1)/2
  double v0 = 0.0;     // sum t(t-1)(t-2)
  double v1 = 0.0;     // sum t(t-1)(2t+5)
};

TieSums tie_sums(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  TieSums s;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    const double t = static_cast<double>(j - i);
    s.pairs += t * (t - 1.0) / 2.0;
    s.v0 += t * (t - 1.0) * (t - 2.0);
    s.v1 += t * (t - 1.0) * (2.0 * t + 5.0);
    i = j;
  }
  return s;
}

// Merge sort counting inversions (strictly decreasing pairs).
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                               std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace

Correlation kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_pairs(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  // Pairs tied in both coordinates.
  double joint_ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]] && y[order[j]] == y[order[i]]) ++j;
    const double t = static_cast<double>(j - i);
    joint_ties += t * (t - 1.0) / 2.0;
    i = j;
  }

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> buf(n);
  // Within a block of equal x the ys are sorted, so inversions count only
  // pairs that are strictly discordant.
  const auto discordant = static_cast<double>(count_inversions(ys, buf, 0, n));

  const TieSums tx = tie_sums(std::vector<double>(x.begin(), x.end()));
  const TieSums ty = tie_sums(std::vector<double>(y.begin(), y.end()));
  const double nd = static_cast<double>(n);
  const double total_pairs = nd * (nd - 1.0) / 2.0;
  const double untied_x = total_pairs - tx.pairs;
  const double untied_y = total_pairs - ty.pairs;
  if (untied_x == 0.0 || untied_y == 0.0) throw DataError("Kendall tau undefined for all-tied input");

  const double concordant = total_pairs - tx.pairs - ty.pairs + joint_ties - discordant;
  const double s = concordant - discordant;
  const double tau = std::clamp(s / std::sqrt(untied_x * untied_y), -1.0, 1.0);

  const double m = nd * (nd - 1.0);
  const double var = (m * (2.0 * nd + 5.0) - tx.v1 - ty.v1) / 18.0 +
                     (2.0 * tx.pairs * ty.pairs) / m + tx.v0 * ty.v0 / (9.0 * m * (nd - 2.0));
  const double p = var > 0.0 ? normal_two_tailed(s / std::sqrt(var)) : 1.0;
  return {tau, p};
}

CorrelationReport correlate(std::span<const double> x, std::span<const double> y) {
  CorrelationReport r;
  const auto p = pearson(x, y);
  const auto s = spearman(x, y);
  const auto k = kendall_tau_b(x, y);
  r.pearson_r = p.coefficient;
  r.p_pearson = p.p_value;
  r.spearman_rho = s.coefficient;
  r.p_spearman = s.p_value;
  r.kendall_tau_b = k.coefficient;
  r.p_kendall = k.p_value;
  r.n = x.size();
  return r;
}

// ---------------------------------------------------------------------------
// Human baselines

namespace {

struct SystemOutputs {
  std::vector<TokenSequence> hyps;
  std::vector<std::vector<TokenSequence>> refsets;
  std::vector<WeightedReferenceSet> weighted;  // only items with a positive weight
  std::vector<TokenSequence> weighted_hyps;
  std::vector<double> ratings;
  bool all_rated = true;
  std::size_t delta_skipped = 0;
};

void add_item(SystemOutputs& out, const ImageRecord& rec, std::size_t pick) {
  const auto& cand = rec.references[pick];
  std::vector<TokenSequence> rest;
  WeightedReferenceSet weighted;
  bool rated = cand.rated();
  double max_weight = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rec.references.size(); ++j) {
    if (j == pick) continue;
    const auto& ref = rec.references[j];
    rest.push_back(ref.question);
    rated = rated && ref.rated();
    if (ref.weight) {
      weighted.push_back({ref.question, *ref.weight});
      max_weight = std::max(max_weight, *ref.weight);
    }
  }
  out.hyps.push_back(cand.question);
  out.refsets.push_back(std::move(rest));
  out.all_rated = out.all_rated && rated;
  if (rated) {
    out.ratings.push_back(static_cast<double>(*cand.majority_rating));
    if (max_weight > 0.0) {
      out.weighted_hyps.push_back(cand.question);
      out.weighted.push_back(std::move(weighted));
    } else {
      ++out.delta_skipped;
    }
  }
}

BaselineRow score_system(std::string name, const SystemOutputs& out,
                         const EmbeddingTable* table) {
  BaselineRow row;
  row.system = std::move(name);
  row.bleu = corpus_bleu(out.hyps, out.refsets).score;
  double smoothed = 0.0, meteor = 0.0, embed = 0.0;
  for (std::size_t i = 0; i < out.hyps.size(); ++i) {
    smoothed += sentence_bleu_smoothed(out.hyps[i], out.refsets[i]);
    meteor += meteor_exact(out.hyps[i], out.refsets[i]);
    if (table) {
      double s = 0.0;
      for (const auto& r : out.refsets[i]) s += embedding_similarity(out.hyps[i], r, *table);
      embed += s / static_cast<double>(out.refsets[i].size());
    }
  }
  const double n = static_cast<double>(out.hyps.size());
  row.smoothed_bleu = smoothed / n;
  row.meteor_exact = meteor / n;
  if (table) row.embedding = embed / n;
  if (out.all_rated) {
    if (!out.weighted.empty()) row.delta_bleu = delta_bleu(out.weighted_hyps, out.weighted).score;
    row.human = std::accumulate(out.ratings.begin(), out.ratings.end(), 0.0) / n;
  }
  return row;
}

}  // namespace

HumanBaselineReport human_baselines(std::span<const ImageRecord> records,
                                    const EmbeddingTable* table, std::uint64_t seed) {
  HumanBaselineReport report;
  Rng rng(derive_seed(seed, "random-baseline"));
  SystemOutputs consensus, random;
  for (const auto& rec : records) {
    if (rec.references.size() < 2) {
      ++report.skipped;
      continue;
    }
    const auto questions = rec.questions();
    add_item(consensus, rec, one_best_index(questions));
    add_item(random, rec, rng.below(questions.size()));
    ++report.items;
  }
  if (report.items == 0) throw DataError("no record has two or more references");
  report.rows.push_back(score_system("Human_consensus", consensus, table));
  report.rows.push_back(score_system("Human_random", random, table));
  report.delta_skipped = std::max(consensus.delta_skipped, random.delta_skipped);
  return report;
}

// ---------------------------------------------------------------------------
// Dataset statistics

NgramTreeNode* NgramTreeNode::child(const std::string& tok) {
  auto& slot = children[tok];
  if (!slot) {
    slot = std::make_unique<NgramTreeNode>();
    slot->token = tok;
  }
  return slot.get();
}

const NgramTreeNode* NgramTreeNode::find(const std::string& tok) const {
  auto it = children.find(tok);
  return it == children.end() ? nullptr : it->second.get();
}

std::vector<const NgramTreeNode*> NgramTreeNode::sorted_children() const {
  std::vector<const NgramTreeNode*> out;
  for (const auto& [tok, node] : children) out.push_back(node.get());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto* a, const auto* b) { return a->count > b->count; });
  return out;
}

DatasetStats dataset_statistics(std::span<const ImageRecord> records, const Lexicon& abstract_terms,
                                const Lexicon& function_words, std::size_t top_k) {
  if (records.empty()) throw DataError("dataset statistics need at least one record");
  DatasetStats stats;
  stats.ngram_tree = std::make_shared<NgramTreeNode>();
  std::map<std::string, std::size_t> counts;
  std::size_t token_total = 0;

  double similarity_sum = 0.0;
  std::size_t similarity_images = 0;
  for (const auto& rec : records) {
    for (const auto& ref : rec.references) {
      const auto& q = ref.question;
      ++stats.total_questions;
      token_total += q.size();
      ++stats.length_histogram[q.size()];
      for (const auto& t : q) ++counts[t];

      NgramTreeNode* node = stats.ngram_tree.get();
      ++node->count;
      const std::size_t depth = std::min<std::size_t>(q.size(), kTreeDepth);
      for (std::size_t d = 0; d < depth; ++d) {
        node = node->child(q[d]);
        ++node->count;
      }
      if (q.size() < static_cast<std::size_t>(kTreeDepth)) ++node->child(kTreeEndToken)->count;
    }
    if (rec.references.size() >= 2) {
      double s = 0.0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < rec.references.size(); ++i) {
        for (std::size_t j = 0; j < rec.references.size(); ++j) {
          if (i == j) continue;
          s += sentence_bleu_smoothed(rec.references[i].question,
                                      std::span(&rec.references[j].question, 1));
          ++pairs;
        }
      }
      similarity_sum += s / static_cast<double>(pairs);
      ++similarity_images;
    }
  }

  stats.vocab_size = counts.size();
  stats.mean_question_length =
      static_cast<double>(token_total) / static_cast<double>(stats.total_questions);
  stats.inter_annotator_similarity =
      similarity_images ? similarity_sum / static_cast<double>(similarity_images) : 0.0;

  std::vector<std::pair<std::string, std::size_t>> words(counts.begin(), counts.end());
  std::stable_sort(words.begin(), words.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (words.size() > top_k) words.resize(top_k);
  stats.top_words = std::move(words);

  std::size_t abstract = 0, content = 0;
  for (const auto& [tok, n] : counts) {
    if (abstract_terms.count(tok)) ++abstract;
    if (!function_words.count(tok)) ++content;
  }
  stats.abstract_fraction =
      content ? static_cast<double>(abstract) / static_cast<double>(content) : 0.0;
  return stats;
}

}  // namespace vqg
