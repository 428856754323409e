#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vqg/corpus.hpp"

using namespace vqg;
using testutil::make_record;
using testutil::toks;

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("Was anyone injured in the crash?") ==
        TokenSequence{"was", "anyone", "injured", "in", "the", "crash", "?"});
  CHECK(tokenize("A   B") == TokenSequence{"a", "b"});
  CHECK(tokenize("don't stop") == TokenSequence{"don", "'", "t", "stop"});
  CHECK(tokenize("(yes); \"no\": maybe!") ==
        TokenSequence{"(", "yes", ")", ";", "\"", "no", "\"", ":", "maybe", "!"});
  CHECK(tokenize("\tmixed\nWhite space ") == TokenSequence{"mixed", "white", "space"});
}

TEST_CASE("tokenize rejects blank text") {
  CHECK_THROWS_AS(tokenize(""), DataError);
  CHECK_THROWS_AS(tokenize("  \t "), DataError);
}

TEST_CASE("tokenize and join round-trip at token level") {
  std::mt19937_64 g(7);
  const std::vector<std::string> pool = {"what", "is", "?", "the", "dog", "'", ",", "cat9", "a-b"};
  for (int trial = 0; trial < 200; ++trial) {
    TokenSequence seq(1 + g() % 10);
    for (auto& t : seq) t = pool[g() % pool.size()];
    CHECK(tokenize(join(seq, " ")) == seq);
  }
}

TEST_CASE("majority rating is the median and permutation invariant") {
  CHECK(majority_rating(std::vector<int>{1, 3, 3}) == 3);
  CHECK(majority_rating(std::vector<int>{1, 2, 3}) == 2);
  CHECK(majority_rating(std::vector<int>{1, 1, 2}) == 1);
  for (int a = 1; a <= 3; ++a) {
    for (int b = 1; b <= 3; ++b) {
      for (int c = 1; c <= 3; ++c) {
        std::vector<int> v{a, b, c};
        const int m = majority_rating(v);
        std::sort(v.begin(), v.end());
        do {
          CHECK(majority_rating(v) == m);
        } while (std::next_permutation(v.begin(), v.end()));
      }
    }
  }
  CHECK_THROWS_AS(majority_rating(std::vector<int>{1, 2}), DataError);
  CHECK_THROWS_AS(majority_rating(std::vector<int>{1, 2, 4}), DataError);
}

TEST_CASE("rating weights default to rating minus two") {
  RatingWeights w;
  CHECK(w(1) == -1.0);
  CHECK(w(2) == 0.0);
  CHECK(w(3) == 1.0);
  CHECK_THROWS_AS(w(0), DataError);
}

TEST_CASE("vocabulary threshold boundary") {
  std::vector<ImageRecord> recs{
      make_record("a", {1, 0}, {"cat cat lynx", "cat lynx dog"}),
      // Counts from non-train records must be ignored.
      make_record("b", {0, 1}, {"lynx lynx lynx lynx"}, Split::test),
  };
  const auto vocab = build_vocabulary(recs, 3);
  CHECK(vocab.contains("cat"));
  CHECK_FALSE(vocab.contains("lynx"));
  CHECK_FALSE(vocab.contains("dog"));
  CHECK(vocab.size() == 4);
  CHECK(vocab.id("<s>") == 0);
  CHECK(vocab.id("</s>") == 1);
  CHECK(vocab.id("<unk>") == 2);
  CHECK(vocab.id("cat") == 3);
  CHECK(vocab.id("lynx") == Vocabulary::kUnknown);

  const auto all = build_vocabulary(recs, 1);
  CHECK(all.contains("lynx"));
  CHECK(all.contains("dog"));
  CHECK(all.size() == 6);
  // Descending count, ties lexical.
  CHECK(all.token(3) == "cat");
  CHECK(all.token(4) == "lynx");
  CHECK(all.token(5) == "dog");
}

TEST_CASE("vocabulary contains a token iff its count reaches the threshold") {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ImageRecord> recs;
    std::map<std::string, std::size_t> counts;
    for (int i = 0; i < 6; ++i) {
      std::vector<std::string> qs;
      for (int q = 0; q < 3; ++q) {
        std::string text;
        const int len = 1 + static_cast<int>(g() % 6);
        for (int t = 0; t < len; ++t) {
          const std::string tok(1, static_cast<char>('a' + g() % 8));
          text += tok + " ";
          ++counts[tok];
        }
        qs.push_back(text);
      }
      recs.push_back(make_record("r" + std::to_string(i), {1, 0}, qs));
    }
    const int threshold = 1 + static_cast<int>(g() % 5);
    const auto vocab = build_vocabulary(recs, threshold);
    for (const auto& [tok, n] : counts) {
      CHECK(vocab.contains(tok) == (n >= static_cast<std::size_t>(threshold)));
      if (vocab.contains(tok)) CHECK(vocab.count(tok) == n);
    }
    for (std::size_t id = 0; id < vocab.size(); ++id) {
      CHECK(vocab.id(vocab.token(static_cast<int>(id))) == static_cast<int>(id));
    }
    // encode never leaves [0, |V|)
    for (const auto& r : recs) {
      for (const auto& q : r.questions()) {
        for (int id : encode(q, vocab, true)) {
          CHECK(id >= 0);
          CHECK(id < static_cast<int>(vocab.size()));
        }
      }
    }
  }
}

TEST_CASE("vocabulary needs training records") {
  std::vector<ImageRecord> recs{make_record("a", {1}, {"x"}, Split::test)};
  CHECK_THROWS_AS(build_vocabulary(recs, 3), DataError);
  CHECK_THROWS(build_vocabulary(recs, 0));
}

TEST_CASE("encode maps unknown tokens and adds sentinels") {
  std::vector<ImageRecord> recs{make_record("a", {1}, {"cat cat cat"})};
  const auto vocab = build_vocabulary(recs, 3);
  const int cat = vocab.id("cat");
  CHECK(encode(toks("cat"), vocab, false) == std::vector<int>{cat});
  CHECK(encode(toks("lynx"), vocab, false) == std::vector<int>{Vocabulary::kUnknown});
  CHECK(encode(toks("cat"), vocab, true) == std::vector<int>{0, cat, 1});
  CHECK(decode_ids(std::vector<int>{0, cat, 1}, vocab) == TokenSequence{"cat"});
}

TEST_CASE("vocabulary from_entries round-trips") {
  std::vector<ImageRecord> recs{make_record("a", {1}, {"b a b c a b"})};
  const auto vocab = build_vocabulary(recs, 1);
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (std::size_t id = 3; id < vocab.size(); ++id) {
    entries.emplace_back(vocab.token(static_cast<int>(id)), vocab.count(vocab.token(static_cast<int>(id))));
  }
  CHECK(Vocabulary::from_entries(entries, 1) == vocab);
}

TEST_CASE("parse_dataset reads records and ratings") {
  std::istringstream in(
      R"({"image_id":"x1","source":"bing","features":[1,0,0],"questions":["Is it red?","Why?"],"ratings":[[1,3,3],[]],"split":"train"})"
      "\n\n"
      R"({"image_id":"x2","source":"coco","features":[0,1,0.5],"questions":["Who won?"]})"
      "\n");
  const auto recs = parse_dataset(in);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].source == Source::bing);
  CHECK(recs[0].split == Split::train);
  CHECK(recs[0].references[0].question == TokenSequence{"is", "it", "red", "?"});
  CHECK(recs[0].references[0].majority_rating == 3);
  CHECK(recs[0].references[0].weight == 1.0);
  CHECK_FALSE(recs[0].references[1].rated());
  CHECK_FALSE(recs[0].references[1].weight.has_value());
  CHECK_FALSE(recs[0].fully_rated());
  CHECK(recs[1].split == Split::unassigned);
  CHECK(recs[1].features.size() == 3);
}

namespace {

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_dataset(in, {}, "data.jsonl");
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse_dataset errors name the line") {
  const std::string good = R"({"image_id":"a","features":[1,2],"questions":["q?"]})";
  CHECK(error_of(good + "\n" +
                 R"({"image_id":"b","features":[1,2],"questions":["q?"],"ratings":[[1,2,3,1]]})")
            .starts_with("data.jsonl:2:"));
  CHECK(error_of(good + "\n" + good).find("duplicate") != std::string::npos);
  CHECK(error_of(good + "\n" + R"({"image_id":"b","features":[1,2,3],"questions":["q?"]})")
            .starts_with("data.jsonl:2:"));
  CHECK(error_of(R"({"image_id":"b","features":[1,2],"questions":["q?"],"ratings":[[1,2,4]]})")
            .starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","features":[0,0],"questions":["q?"]})").find("zero norm") !=
        std::string::npos);
  CHECK(error_of("not json").starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","features":[1],"questions":[]})").starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","features":[1],"questions":["   "]})").starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","features":[1],"questions":["a","b","c","d","e","f"]})")
            .starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","features":[1],"questions":["a"],"source":"web"})")
            .starts_with("data.jsonl:1:"));
  CHECK(error_of(R"({"image_id":"b","questions":["a"]})").starts_with("data.jsonl:1:"));
}

TEST_CASE("features_ref resolves through a companion file") {
  testutil::TempDir dir;
  testutil::write_file(dir / "features.jsonl", R"({"image_id":"f1","features":[0.5,0.5]})"
                                               "\n");
  testutil::write_file(dir / "data.jsonl", R"({"image_id":"a","features_ref":"f1","questions":["q"]})"
                                           "\n");
  LoadOptions opts;
  opts.features_path = dir / "features.jsonl";
  const auto recs = load_dataset(dir / "data.jsonl", opts);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].features[1] == 0.5);
  CHECK_THROWS_AS(load_dataset(dir / "data.jsonl"), DataError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), DataError);
}

TEST_CASE("save_dataset round-trips") {
  testutil::TempDir dir;
  std::istringstream in(
      R"({"image_id":"x1","source":"flickr","features":[0.1,-0.2,0.30000000000000004],"questions":["Is it red?","why ?"],"ratings":[[1,2,3],[3,3,2]],"split":"val"})"
      "\n");
  const auto recs = parse_dataset(in);
  save_dataset(dir / "out.jsonl", recs);
  const auto back = load_dataset(dir / "out.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].image_id == "x1");
  CHECK(back[0].source == Source::flickr);
  CHECK(back[0].split == Split::val);
  CHECK(back[0].features == recs[0].features);
  CHECK(back[0].questions() == recs[0].questions());
  CHECK(back[0].references[1].raw_ratings == std::vector<int>{3, 3, 2});
  CHECK(back[0].references[1].majority_rating == 3);
}

TEST_CASE("split_dataset sizes, partition and determinism") {
  auto make = [](std::size_t n) {
    std::vector<ImageRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back(make_record("id" + std::to_string(i), {1.0 + i, 1.0}, {"q"}, Split::unassigned));
    }
    return recs;
  };
  auto sizes = [](const std::vector<ImageRecord>& recs) {
    std::array<std::size_t, 4> n{};
    for (const auto& r : recs) ++n[static_cast<int>(r.split)];
    return n;
  };
  CHECK(sizes(split_dataset(make(1000), 1)) == std::array<std::size_t, 4>{500, 250, 250, 0});
  CHECK(sizes(split_dataset(make(5), 1)) == std::array<std::size_t, 4>{2, 1, 2, 0});
  for (std::size_t n = 4; n < 40; ++n) {
    const auto recs = make(n);
    const auto s = split_dataset(recs, n);
    CHECK(sizes(s) == std::array<std::size_t, 4>{n / 2, n / 4, n - n / 2 - n / 4, 0});
    // Input order and content are kept; only the tags change.
    for (std::size_t i = 0; i < n; ++i) CHECK(s[i].image_id == recs[i].image_id);
    std::set<std::string> ids;
    for (auto sp : {Split::train, Split::val, Split::test}) {
      for (const auto& r : select_split(s, sp)) CHECK(ids.insert(r.image_id).second);
    }
    CHECK(ids.size() == n);
  }
  const auto recs = make(100);
  const auto a = split_dataset(recs, 42), b = split_dataset(recs, 42), c = split_dataset(recs, 43);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    same = same && a[i].split == b[i].split;
    differs = differs || a[i].split != c[i].split;
  }
  CHECK(same);
  CHECK(differs);
  CHECK_THROWS_AS(split_dataset(make(3), 1), DataError);
}

TEST_CASE("embedding table parsing") {
  {
    std::istringstream in("a 1 0 0 0\nb 0 1 0 0\nc 0 0 1 0\n");
    const auto t = parse_embedding_table(in);
    CHECK(t.dimension() == 4);
    CHECK(t.size() == 3);
    REQUIRE(t.find("b") != nullptr);
    CHECK((*t.find("b"))[1] == 1.0);
    CHECK(t.find("zzz") == nullptr);
  }
  {
    std::istringstream in("a 1 0 0 0\nb 0 1 0\n");
    CHECK_THROWS_AS(parse_embedding_table(in), DataError);
  }
  {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_embedding_table(in), DataError);
  }
  {
    std::istringstream in("a 1 x\n");
    CHECK_THROWS_AS(parse_embedding_table(in), DataError);
  }
  {
    std::istringstream in("a 1 2\na 3 4\n");
    const auto t = parse_embedding_table(in);
    CHECK(t.size() == 1);
    CHECK(t.duplicates() == 1);
    CHECK((*t.find("a"))[0] == 3.0);
  }
}

TEST_CASE("lexicon loading") {
  testutil::TempDir dir;
  testutil::write_file(dir / "lex.txt", "Win\n\nthink\n");
  const auto lex = load_lexicon(dir / "lex.txt");
  CHECK(lex == std::set<std::string, std::less<>>{"win", "think"});
  testutil::write_file(dir / "empty.txt", "\n\n");
  CHECK_THROWS_AS(load_lexicon(dir / "empty.txt"), DataError);
}
