#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "vqg/common.hpp"

namespace vqg {

/// One question as lowercase tokens. Never contains sentinel tokens.
using TokenSequence = std::vector<std::string>;

/// Dense image descriptor (fc7 activations or a synthetic stand-in).
using FeatureVector = Eigen::VectorXd;

enum class Source { coco, flickr, bing, custom };
enum class Split { train, val, test, unassigned };

std::string_view to_string(Source source);
std::string_view to_string(Split split);
Source parse_source(std::string_view name);
Split parse_split(std::string_view name);

/// Maps a majority rating in {1,2,3} to a reference weight in [-1,1].
struct RatingWeights {
  std::array<double, 3> table{-1.0, 0.0, 1.0};

  double operator()(int rating) const;
};

/// Majority of three ratings. With three distinct values the median (2) is
/// used, so the result is always the median of the sorted triple.
int majority_rating(std::span<const int> ratings);

struct RatedReference {
  TokenSequence question;
  std::vector<int> raw_ratings;  // empty or exactly three values in 1..3
  std::optional<int> majority_rating;
  std::optional<double> weight;

  bool rated() const { return majority_rating.has_value(); }
};

struct ImageRecord {
  std::string image_id;
  Source source = Source::custom;
  Split split = Split::unassigned;
  FeatureVector features;
  std::vector<RatedReference> references;

  std::vector<TokenSequence> questions() const;
  /// True when every reference carries a rating.
  bool fully_rated() const;
};

/// Splits text into lowercase tokens. Punctuation characters
/// . , ? ! ' " : ; ( ) become standalone tokens. Throws DataError on blank text.
TokenSequence tokenize(std::string_view text);

std::string join(const TokenSequence& tokens, std::string_view sep = " ");

/// Token/id bijection. Ids 0, 1, 2 are reserved for <s>, </s>, <unk>; the
/// remaining ids follow descending training count, ties broken lexically.
class Vocabulary {
 public:
  static constexpr int kBegin = 0;
  static constexpr int kEnd = 1;
  static constexpr int kUnknown = 2;
  static constexpr std::string_view kBeginToken = "<s>";
  static constexpr std::string_view kEndToken = "</s>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();

  /// Rebuilds a vocabulary from (token, count) pairs in id order, specials
  /// excluded. Used when reading checkpoints.
  static Vocabulary from_entries(
      const std::vector<std::pair<std::string, std::size_t>>& entries,
      int threshold);

  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t count(std::string_view token) const;
  std::size_t size() const { return id_to_token_.size(); }
  int threshold() const { return threshold_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  static bool is_special(std::string_view token);

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  void add(std::string token, std::size_t count);

  std::vector<std::string> id_to_token_;
  std::vector<std::size_t> counts_;
  std::map<std::string, int, std::less<>> token_to_id_;
  int threshold_ = 1;
};

/// Counts tokens over the references of train-split records and keeps those
/// seen at least `threshold` times.
Vocabulary build_vocabulary(std::span<const ImageRecord> records, int threshold = 3);

std::vector<int> encode(const TokenSequence& seq, const Vocabulary& vocab,
                        bool add_sentinels);

/// Inverse of encode; sentinel ids are dropped.
TokenSequence decode_ids(std::span<const int> ids, const Vocabulary& vocab);

struct LoadOptions {
  /// Companion file resolving `features_ref` keys.
  std::optional<std::filesystem::path> features_path;
  RatingWeights weights;
};

std::vector<ImageRecord> load_dataset(const std::filesystem::path& path,
                                      const LoadOptions& options = {});
std::vector<ImageRecord> parse_dataset(std::istream& in, const LoadOptions& options = {},
                                       std::string_view name = "<stream>");

void save_dataset(const std::filesystem::path& path, std::span<const ImageRecord> records);
void write_dataset(std::ostream& out, std::span<const ImageRecord> records);

/// Returns the records with split tags assigned: a seeded shuffle, then
/// floor(n/2) train, floor(n/4) val and the rest test. Input order is kept.
std::vector<ImageRecord> split_dataset(std::span<const ImageRecord> records,
                                       std::uint64_t seed);

std::vector<ImageRecord> select_split(std::span<const ImageRecord> records, Split split);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  void insert(std::string token, Eigen::VectorXd vector);
  /// nullptr when the token is absent.
  const Eigen::VectorXd* find(std::string_view token) const;

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }
  std::size_t duplicates() const { return duplicates_; }

 private:
  std::size_t dimension_ = 0;
  std::size_t duplicates_ = 0;
  std::map<std::string, Eigen::VectorXd, std::less<>> vectors_;
};

/// Reads `token v1 ... vd` lines. Duplicate tokens: the last one wins and
/// EmbeddingTable::duplicates() counts them.
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
EmbeddingTable parse_embedding_table(std::istream& in, std::string_view name = "<stream>");

/// One token per line; blank lines ignored. Empty lexicons are rejected.
std::set<std::string, std::less<>> load_lexicon(const std::filesystem::path& path);

}  // namespace vqg
