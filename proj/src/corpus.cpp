#include "vqg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace vqg {

using json = nlohmann::json;

std::string_view to_string(Source source) {
  switch (source) {
    case Source::coco: return "coco";
    case Source::flickr: return "flickr";
    case Source::bing: return "bing";
    case Source::custom: return "custom";
  }
  return "custom";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Source parse_source(std::string_view name) {
  if (name == "coco") return Source::coco;
  if (name == "flickr") return Source::flickr;
  if (name == "bing") return Source::bing;
  if (name == "custom") return Source::custom;
  throw DataError("unknown source '" + std::string(name) + "'");
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "unassigned" || name.empty()) return Split::unassigned;
  throw DataError("unknown split '" + std::string(name) + "'");
}

double RatingWeights::operator()(int rating) const {
  if (rating < 1 || rating > 3) {
    throw DataError("rating " + std::to_string(rating) + " outside 1..3");
  }
  return table[static_cast<std::size_t>(rating - 1)];
}

int majority_rating(std::span<const int> ratings) {
  if (ratings.size() != 3) throw DataError("majority rating needs exactly 3 ratings");
  std::array<int, 3> r{ratings[0], ratings[1], ratings[2]};
  for (int v : r) {
    if (v < 1 || v > 3) throw DataError("rating " + std::to_string(v) + " outside 1..3");
  }
  std::sort(r.begin(), r.end());
  // For a sorted triple the median is the majority whenever two values agree,
  // and is 2 when all three differ.
  return r[1];
}

std::vector<TokenSequence> ImageRecord::questions() const {
  std::vector<TokenSequence> out;
  out.reserve(references.size());
  for (const auto& ref : references) out.push_back(ref.question);
  return out;
}

bool ImageRecord::fully_rated() const {
  return !references.empty() &&
         std::all_of(references.begin(), references.end(),
                     [](const RatedReference& r) { return r.rated(); });
}

// ---------------------------------------------------------------------------
// Tokenization

namespace {

bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case '\'':
    case '"': case ':': case ';': case '(': case ')':
      return true;
    default:
      return false;
  }
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_split_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      // Only ASCII is case-folded; other bytes pass through untouched.
      auto u = static_cast<unsigned char>(c);
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  flush();
  if (out.empty()) throw DataError("cannot tokenize blank text into a non-empty sequence");
  return out;
}

std::string join(const TokenSequence& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add(std::string(kBeginToken), 0);
  add(std::string(kEndToken), 0);
  add(std::string(kUnknownToken), 0);
}

void Vocabulary::add(std::string token, std::size_t count) {
  const int id = static_cast<int>(id_to_token_.size());
  auto [it, inserted] = token_to_id_.emplace(token, id);
  if (!inserted) throw DataError("duplicate vocabulary token '" + token + "'");
  id_to_token_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::from_entries(
    const std::vector<std::pair<std::string, std::size_t>>& entries, int threshold) {
  if (threshold < 1) throw DataError("vocabulary threshold must be >= 1");
  Vocabulary vocab;
  vocab.threshold_ = threshold;
  for (const auto& [token, count] : entries) {
    if (is_special(token)) throw DataError("special token in vocabulary entries");
    if (count < static_cast<std::size_t>(threshold)) {
      throw DataError("vocabulary token '" + token + "' below threshold");
    }
    vocab.add(token, count);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.find(token) != token_to_id_.end();
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::size_t Vocabulary::count(std::string_view token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? 0 : counts_[static_cast<std::size_t>(it->second)];
}

bool Vocabulary::is_special(std::string_view token) {
  return token == kBeginToken || token == kEndToken || token == kUnknownToken;
}

Vocabulary build_vocabulary(std::span<const ImageRecord> records, int threshold) {
  if (threshold < 1) throw UsageError("vocabulary threshold must be >= 1");
  std::map<std::string, std::size_t, std::less<>> counts;
  std::size_t train_records = 0;
  for (const auto& record : records) {
    if (record.split != Split::train) continue;
    ++train_records;
    for (const auto& ref : record.references) {
      for (const auto& tok : ref.question) {
        if (!Vocabulary::is_special(tok)) ++counts[tok];
      }
    }
  }
  if (train_records == 0) throw DataError("cannot build a vocabulary from an empty training set");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= static_cast<std::size_t>(threshold)) kept.emplace_back(tok, n);
  }
  // counts is lexically ordered, so a stable sort on count keeps lexical ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return Vocabulary::from_entries(kept, threshold);
}

std::vector<int> encode(const TokenSequence& seq, const Vocabulary& vocab, bool add_sentinels) {
  std::vector<int> ids;
  ids.reserve(seq.size() + 2);
  if (add_sentinels) ids.push_back(Vocabulary::kBegin);
  for (const auto& tok : seq) ids.push_back(vocab.id(tok));
  if (add_sentinels) ids.push_back(Vocabulary::kEnd);
  return ids;
}

TokenSequence decode_ids(std::span<const int> ids, const Vocabulary& vocab) {
  TokenSequence out;
  for (int id : ids) {
    if (id == Vocabulary::kBegin || id == Vocabulary::kEnd) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

[[noreturn]] void fail_at(std::string_view name, std::size_t line, const std::string& what) {
  throw DataError(std::string(name) + ":" + std::to_string(line) + ": " + what);
}

FeatureVector parse_features(const json& value, std::string_view name, std::size_t line) {
  if (!value.is_array() || value.empty()) fail_at(name, line, "'features' must be a non-empty array");
  FeatureVector out(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) fail_at(name, line, "non-numeric feature value");
    const double v = value[i].get<double>();
    if (!std::isfinite(v)) fail_at(name, line, "non-finite feature value");
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

std::map<std::string, FeatureVector> load_companion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::map<std::string, FeatureVector> out;
  std::string text;
  std::size_t line = 0;
  const std::string name = path.string();
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) fail_at(name, line, "malformed record");
    if (!obj.contains("image_id") || !obj["image_id"].is_string()) {
      fail_at(name, line, "missing string 'image_id'");
    }
    if (!obj.contains("features")) fail_at(name, line, "missing 'features'");
    auto id = obj["image_id"].get<std::string>();
    if (out.count(id)) fail_at(name, line, "duplicate image_id '" + id + "'");
    out.emplace(std::move(id), parse_features(obj["features"], name, line));
  }
  return out;
}

}  // namespace

std::vector<ImageRecord> parse_dataset(std::istream& in, const LoadOptions& options,
                                       std::string_view name) {
  std::optional<std::map<std::string, FeatureVector>> companion;
  std::vector<ImageRecord> records;
  std::set<std::string, std::less<>> seen;
  std::optional<Eigen::Index> dim;
  std::string text;
  std::size_t line = 0;

  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) fail_at(name, line, "malformed record");

    ImageRecord rec;
    if (!obj.contains("image_id") || !obj["image_id"].is_string()) {
      fail_at(name, line, "missing string 'image_id'");
    }
    rec.image_id = obj["image_id"].get<std::string>();
    if (rec.image_id.empty()) fail_at(name, line, "empty image_id");
    if (!seen.insert(rec.image_id).second) {
      fail_at(name, line, "duplicate image_id '" + rec.image_id + "'");
    }

    try {
      if (obj.contains("source")) {
        if (!obj["source"].is_string()) fail_at(name, line, "'source' must be a string");
        rec.source = parse_source(obj["source"].get<std::string>());
      }
      if (obj.contains("split") && !obj["split"].is_null()) {
        if (!obj["split"].is_string()) fail_at(name, line, "'split' must be a string");
        rec.split = parse_split(obj["split"].get<std::string>());
      }
    } catch (const DataError& e) {
      if (std::string_view(e.what()).starts_with(name)) throw;
      fail_at(name, line, e.what());
    }

    if (obj.contains("features")) {
      rec.features = parse_features(obj["features"], name, line);
    } else if (obj.contains("features_ref")) {
      if (!obj["features_ref"].is_string()) fail_at(name, line, "'features_ref' must be a string");
      if (!options.features_path) {
        fail_at(name, line, "'features_ref' used but no companion feature file given");
      }
      if (!companion) companion = load_companion(*options.features_path);
      auto key = obj["features_ref"].get<std::string>();
      auto it = companion->find(key);
      if (it == companion->end()) fail_at(name, line, "unresolved features_ref '" + key + "'");
      rec.features = it->second;
    } else {
      fail_at(name, line, "missing 'features' or 'features_ref'");
    }
    if (!dim) dim = rec.features.size();
    if (rec.features.size() != *dim) {
      fail_at(name, line, "feature dimension " + std::to_string(rec.features.size()) +
                              " differs from " + std::to_string(*dim));
    }
    if (rec.features.norm() == 0.0) fail_at(name, line, "feature vector has zero norm");

    if (!obj.contains("questions") || !obj["questions"].is_array()) {
      fail_at(name, line, "missing array 'questions'");
    }
    const json& qs = obj["questions"];
    if (qs.empty() || qs.size() > 5) fail_at(name, line, "'questions' must hold 1..5 entries");
    for (const auto& q : qs) {
      if (!q.is_string()) fail_at(name, line, "question must be a string");
      RatedReference ref;
      try {
        ref.question = tokenize(q.get<std::string>());
      } catch (const DataError&) {
        fail_at(name, line, "blank question");
      }
      rec.references.push_back(std::move(ref));
    }

    if (obj.contains("ratings") && !obj["ratings"].is_null()) {
      const json& rs = obj["ratings"];
      if (!rs.is_array() || rs.size() != qs.size()) {
        fail_at(name, line, "'ratings' must hold one entry per question");
      }
      for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!rs[i].is_array() || (rs[i].size() != 0 && rs[i].size() != 3)) {
          fail_at(name, line, "ratings entry " + std::to_string(i) + " must hold 0 or 3 integers");
        }
        auto& ref = rec.references[i];
        for (const auto& v : rs[i]) {
          if (!v.is_number_integer()) fail_at(name, line, "non-integer rating");
          const int r = v.get<int>();
          if (r < 1 || r > 3) fail_at(name, line, "rating " + std::to_string(r) + " outside 1..3");
          ref.raw_ratings.push_back(r);
        }
        if (!ref.raw_ratings.empty()) {
          ref.majority_rating = majority_rating(ref.raw_ratings);
          ref.weight = options.weights(*ref.majority_rating);
        }
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, options, path.string());
}

void write_dataset(std::ostream& out, std::span<const ImageRecord> records) {
  for (const auto& rec : records) {
    json obj;
    obj["image_id"] = rec.image_id;
    obj["source"] = to_string(rec.source);
    if (rec.split != Split::unassigned) obj["split"] = to_string(rec.split);
    obj["features"] = std::vector<double>(rec.features.data(),
                                          rec.features.data() + rec.features.size());
    json qs = json::array();
    bool any_rated = false;
    for (const auto& ref : rec.references) {
      qs.push_back(join(ref.question));
      any_rated = any_rated || !ref.raw_ratings.empty();
    }
    obj["questions"] = std::move(qs);
    if (any_rated) {
      json rs = json::array();
      for (const auto& ref : rec.references) rs.push_back(ref.raw_ratings);
      obj["ratings"] = std::move(rs);
    }
    out << obj.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, std::span<const ImageRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, records);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<ImageRecord> split_dataset(std::span<const ImageRecord> records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 4) throw DataError("splitting needs at least 4 records, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t n_train = n / 2;
  const std::size_t n_val = n / 4;
  std::vector<ImageRecord> out(records.begin(), records.end());
  for (std::size_t rank = 0; rank < n; ++rank) {
    Split s = rank < n_train ? Split::train : rank < n_train + n_val ? Split::val : Split::test;
    out[order[rank]].split = s;
  }
  return out;
}

std::vector<ImageRecord> select_split(std::span<const ImageRecord> records, Split split) {
  std::vector<ImageRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings and lexicons

void EmbeddingTable::insert(std::string token, Eigen::VectorXd vector) {
  if (dimension_ == 0) dimension_ = static_cast<std::size_t>(vector.size());
  if (static_cast<std::size_t>(vector.size()) != dimension_) {
    throw DataError("embedding for '" + token + "' has dimension " +
                    std::to_string(vector.size()) + ", expected " + std::to_string(dimension_));
  }
  auto [it, inserted] = vectors_.insert_or_assign(std::move(token), std::move(vector));
  if (!inserted) ++duplicates_;
}

const Eigen::VectorXd* EmbeddingTable::find(std::string_view token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embedding_table(std::istream& in, std::string_view name) {
  EmbeddingTable table;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream fields(text);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        fail_at(name, line, "non-numeric embedding field '" + field + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) fail_at(name, line, "embedding line has no values");
    if (table.dimension() != 0 && values.size() != table.dimension()) {
      fail_at(name, line, "embedding dimension " + std::to_string(values.size()) +
                              " differs from " + std::to_string(table.dimension()));
    }
    table.insert(std::move(token),
                 Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                   static_cast<Eigen::Index>(values.size())));
  }
  if (table.size() == 0) throw DataError(std::string(name) + ": empty embedding file");
  return table;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  return parse_embedding_table(in, path.string());
}

std::set<std::string, std::less<>> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  std::set<std::string, std::less<>> out;
  std::string text;
  while (std::getline(in, text)) {
    std::istringstream fields(text);
    std::string token;
    if (fields >> token) {
      for (auto& c : token) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x80) c = static_cast<char>(std::tolower(u));
      }
      out.insert(std::move(token));
    }
  }
  if (out.empty()) throw DataError("lexicon " + path.string() + " is empty");
  return out;
}

}  // namespace vqg
