#include "vqg/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "vqg/metrics.hpp"

namespace vqg {

namespace {

double checked_norm(const FeatureVector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DataError("feature vector has zero or non-finite norm");
  return n;
}

double distance_with_norms(const FeatureVector& a, double norm_a, const FeatureVector& b,
                           double norm_b) {
  if (a.size() != b.size()) {
    throw DataError("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  const double cos = a.dot(b) / (norm_a * norm_b);
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

}  // namespace

double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    throw DataError("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  return distance_with_norms(a, checked_norm(a), b, checked_norm(b));
}

std::size_t one_best_index(std::span<const TokenSequence> refs) {
  if (refs.empty()) throw DataError("one-best selection needs at least one reference");
  if (refs.size() == 1) return 0;
  std::size_t best = 0;
  double best_score = -1.0;
  std::vector<TokenSequence> others;
  others.reserve(refs.size() - 1);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < refs.size(); ++j) {
      if (j != i) others.push_back(refs[j]);
    }
    const double s = sentence_bleu_smoothed(refs[i], others);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

TokenSequence one_best(std::span<const TokenSequence> refs) {
  return refs[one_best_index(refs)];
}

RetrievalIndex::RetrievalIndex(std::vector<IndexEntry> entries) : entries_(std::move(entries)) {
  for (auto& e : entries_) {
    if (dimension_ == 0) dimension_ = e.features.size();
    if (e.features.size() != dimension_) throw DataError("index feature dimensions differ");
    e.norm = checked_norm(e.features);
  }
}

RetrievalIndex build_index(std::span<const ImageRecord> train_records) {
  if (train_records.empty()) throw DataError("cannot build a retrieval index from no records");
  std::vector<IndexEntry> entries;
  entries.reserve(train_records.size());
  for (const auto& rec : train_records) {
    if (rec.split != Split::train) {
      throw DataError("record '" + rec.image_id + "' is not in the train split");
    }
    if (rec.references.empty()) throw DataError("record '" + rec.image_id + "' has no references");
    IndexEntry e;
    e.image_id = rec.image_id;
    e.features = rec.features;
    e.refs = rec.questions();
    e.one_best = e.refs[one_best_index(e.refs)];
    entries.push_back(std::move(e));
  }
  return RetrievalIndex(std::move(entries));
}

void save_index(const std::filesystem::path& path, const RetrievalIndex& index) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : index.entries()) {
    nlohmann::json obj;
    obj["image_id"] = e.image_id;
    obj["one_best"] = e.one_best;
    obj["refs"] = e.refs;
    obj["features_ref"] = e.image_id;
    out << obj.dump() << '\n';
  }
}

RetrievalIndex load_index(const std::filesystem::path& path,
                          std::span<const ImageRecord> feature_source) {
  std::map<std::string_view, const ImageRecord*> by_id;
  for (const auto& r : feature_source) by_id.emplace(r.image_id, &r);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open index " + path.string());
  std::vector<IndexEntry> entries;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    auto obj = nlohmann::json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataError(where + "malformed index entry");
    try {
      IndexEntry e;
      e.image_id = obj.at("image_id").get<std::string>();
      e.one_best = obj.at("one_best").get<TokenSequence>();
      e.refs = obj.at("refs").get<std::vector<TokenSequence>>();
      auto it = by_id.find(obj.at("features_ref").get<std::string>());
      if (it == by_id.end()) throw DataError(where + "unresolved features_ref");
      e.features = it->second->features;
      if (std::find(e.refs.begin(), e.refs.end(), e.one_best) == e.refs.end()) {
        throw DataError(where + "one_best is not among the references");
      }
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(where + ex.what());
    }
  }
  return RetrievalIndex(std::move(entries));
}

std::string_view to_string(SelectionMetric metric) {
  return metric == SelectionMetric::smoothed_bleu ? "smoothed_bleu" : "avg_embedding";
}

SelectionMetric parse_selection_metric(std::string_view name) {
  if (name == "smoothed_bleu" || name == "bleu") return SelectionMetric::smoothed_bleu;
  if (name == "avg_embedding" || name == "embedding" || name == "gensim") {
    return SelectionMetric::avg_embedding;
  }
  throw UsageError("unknown selection metric '" + std::string(name) + "'");
}

void PoolConfig::validate() const {
  if (k < 1) throw UsageError("pool size K must be >= 1");
  if (!(min_distance >= 0.0 && min_distance <= max_distance)) {
    throw UsageError("pool distances must satisfy 0 <= min_distance <= max_distance");
  }
}

CandidatePool query_pool(const RetrievalIndex& index, const FeatureVector& query,
                         const PoolConfig& cfg) {
  cfg.validate();
  if (index.empty()) throw DataError("retrieval index is empty");
  if (query.size() != index.dimension()) {
    throw DataError("query dimension " + std::to_string(query.size()) + " does not match index " +
                    std::to_string(index.dimension()));
  }
  const double qnorm = checked_norm(query);
  const auto entries = index.entries();

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    scored.emplace_back(distance_with_norms(entries[i].features, entries[i].norm, query, qnorm), i);
  }
  auto closer = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return entries[a.second].image_id < entries[b.second].image_id;
  };
  const std::size_t keep = std::min(cfg.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), closer);

  auto member = [&](const std::pair<double, std::size_t>& s) {
    const auto& e = entries[s.second];
    return PoolMember{e.image_id, s.first, e.one_best};
  };

  CandidatePool pool;
  if (scored.front().first <= cfg.min_distance) {
    pool.shortcut_hit = true;
    pool.members.push_back(member(scored.front()));
    return pool;
  }
  for (std::size_t i = 0; i < keep && scored[i].first <= cfg.max_distance; ++i) {
    pool.members.push_back(member(scored[i]));
  }
  if (pool.members.empty()) {
    pool.fallback_used = true;
    pool.members.push_back(member(scored.front()));
  }
  return pool;
}

std::size_t consensus_index(std::span<const TokenSequence> questions, SelectionMetric metric,
                            const EmbeddingTable* table) {
  if (questions.empty()) throw DataError("consensus selection over an empty pool");
  if (metric == SelectionMetric::avg_embedding && table == nullptr) {
    throw UsageError("avg_embedding selection requires an embedding table");
  }
  if (questions.size() == 1) return 0;
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    scores.clear();
    for (std::size_t j = 0; j < questions.size(); ++j) {
      if (j == i) continue;
      scores.push_back(metric == SelectionMetric::smoothed_bleu
                           ? sentence_bleu_smoothed(questions[i], std::span(&questions[j], 1))
                           : embedding_similarity(questions[i], questions[j], *table));
    }
    // Summed in sorted order so duplicate questions tie exactly and the
    // earliest pool position wins.
    std::sort(scores.begin(), scores.end());
    const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
    const double mean = sum / static_cast<double>(questions.size() - 1);
    if (mean > best_score) {
      best_score = mean;
      best = i;
    }
  }
  return best;
}

RetrievalResult retrieve_question(const RetrievalIndex& index, const FeatureVector& query,
                                  const PoolConfig& cfg, const EmbeddingTable* table) {
  if (cfg.selection_metric == SelectionMetric::avg_embedding && table == nullptr) {
    throw UsageError("avg_embedding selection requires an embedding table");
  }
  RetrievalResult result;
  result.pool = query_pool(index, query, cfg);
  std::vector<TokenSequence> questions;
  questions.reserve(result.pool.members.size());
  for (const auto& m : result.pool.members) questions.push_back(m.one_best);
  result.selected = consensus_index(questions, cfg.selection_metric, table);
  result.question = questions[result.selected];
  return result;
}

}  // namespace vqg
