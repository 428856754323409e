#include "vqg/synth.hpp"

#include <array>
#include <cstdio>
#include <string_view>

namespace vqg {

namespace {

constexpr std::array<std::string_view, 36> kNouns = {
    "dog",    "cat",    "man",    "woman", "car",    "bus",    "train",  "boat",   "horse",
    "bird",   "child",  "ball",   "kite",  "cake",   "house",  "tree",   "beach",  "street",
    "field",  "crowd",  "team",   "player", "bike",  "plane",  "fire",   "storm",  "river",
    "road",   "market", "party",  "bridge", "truck", "flower", "garden", "church", "kitchen"};

constexpr std::array<std::string_view, 16> kVerbs = {
    "eating",  "wearing", "holding", "watching", "riding",   "playing", "building", "cooking",
    "selling", "pulling", "chasing", "carrying", "cleaning", "painting", "fixing",  "crossing"};

constexpr std::array<std::string_view, 12> kAdjectives = {
    "red", "old", "happy", "new", "big", "wet", "broken", "small", "tall", "busy", "empty", "dark"};

constexpr std::array<std::string_view, 9> kStarts = {"what",  "why", "how", "who", "where",
                                                     "when", "is",  "did", "will"};

struct Slot {
  std::string canonical;
  std::vector<std::string> alternatives;
};

// A template is a token list where entries "#k" refer to slot k.
struct QuestionTemplate {
  std::vector<std::string> pattern;
  std::vector<Slot> slots;
};

template <std::size_t N>
std::string pick(Rng& rng, const std::array<std::string_view, N>& words) {
  return std::string(words[rng.below(N)]);
}

template <std::size_t N>
Slot make_slot(Rng& rng, const std::array<std::string_view, N>& words) {
  Slot s;
  s.canonical = pick(rng, words);
  while (s.alternatives.size() < 2) {
    auto alt = pick(rng, words);
    if (alt != s.canonical) s.alternatives.push_back(std::move(alt));
  }
  return s;
}

QuestionTemplate make_template(Rng& rng) {
  QuestionTemplate t;
  switch (rng.below(4)) {
    case 0:  // what is the N V ?
      t.pattern = {"what", "is", "the", "#0", "#1", "?"};
      t.slots = {make_slot(rng, kNouns), make_slot(rng, kVerbs)};
      break;
    case 1:  // why is the A N V the N ?
      t.pattern = {"why", "is", "the", "#0", "#1", "#2", "the", "#3", "?"};
      t.slots = {make_slot(rng, kAdjectives), make_slot(rng, kNouns), make_slot(rng, kVerbs),
                 make_slot(rng, kNouns)};
      break;
    case 2:  // who is V the N near the N ?
      t.pattern = {"who", "is", "#0", "the", "#1", "near", "the", "#2", "?"};
      t.slots = {make_slot(rng, kVerbs), make_slot(rng, kNouns), make_slot(rng, kNouns)};
      break;
    default:  // how did the N get so A ?
      t.pattern = {"how", "did", "the", "#0", "get", "so", "#1", "?"};
      t.slots = {make_slot(rng, kNouns), make_slot(rng, kAdjectives)};
      break;
  }
  return t;
}

TokenSequence instantiate(const QuestionTemplate& t, Rng& rng, double variation) {
  TokenSequence out;
  for (const auto& tok : t.pattern) {
    if (tok.size() > 1 && tok[0] == '#') {
      const auto& slot = t.slots[static_cast<std::size_t>(tok[1] - '0')];
      if (rng.uniform() < variation) {
        out.push_back(slot.alternatives[rng.below(slot.alternatives.size())]);
      } else {
        out.push_back(slot.canonical);
      }
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

TokenSequence outlier_question(Rng& rng) {
  TokenSequence out{pick(rng, kStarts)};
  const std::size_t len = 3 + rng.below(4);
  for (std::size_t i = 0; i < len; ++i) {
    switch (rng.below(3)) {
      case 0: out.push_back(pick(rng, kNouns)); break;
      case 1: out.push_back(pick(rng, kVerbs)); break;
      default: out.push_back(pick(rng, kAdjectives)); break;
    }
  }
  out.emplace_back("?");
  return out;
}

FeatureVector unit_gaussian(Rng& rng, int dim) {
  FeatureVector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

}  // namespace

void SynthConfig::validate() const {
  if (n_images < 1) throw UsageError("synthetic data needs at least one image");
  if (n_clusters < 1 || n_clusters > n_images) {
    throw UsageError("n_clusters must lie in 1..n_images");
  }
  if (feature_dim < 2) throw UsageError("feature dimension must be >= 2");
  if (!(sigma >= 0.0)) throw UsageError("sigma must be >= 0");
  if (!(outlier_prob >= 0.0 && outlier_prob <= 1.0)) throw UsageError("outlier_prob must lie in [0,1]");
  if (!(slot_variation >= 0.0 && slot_variation <= 1.0)) {
    throw UsageError("slot_variation must lie in [0,1]");
  }
}

std::vector<ImageRecord> synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng cluster_rng(derive_seed(cfg.seed, "synth-clusters"));
  std::vector<FeatureVector> centroids;
  std::vector<QuestionTemplate> templates;
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    centroids.push_back(unit_gaussian(cluster_rng, cfg.feature_dim));
    templates.push_back(make_template(cluster_rng));
  }

  Rng rng(derive_seed(cfg.seed, "synth-images"));
  const RatingWeights weights;
  std::vector<ImageRecord> records;
  records.reserve(cfg.n_images);
  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    const std::size_t c = i % cfg.n_clusters;
    ImageRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    rec.image_id = id;
    rec.source = Source::custom;

    FeatureVector f = centroids[c];
    for (int k = 0; k < cfg.feature_dim; ++k) f[k] += cfg.sigma * rng.normal();
    const double norm = f.norm();
    rec.features = norm > 0.0 ? FeatureVector(f / norm) : centroids[c];

    auto add = [&](TokenSequence q, std::vector<int> ratings) {
      RatedReference ref;
      ref.question = std::move(q);
      ref.raw_ratings = std::move(ratings);
      ref.majority_rating = majority_rating(ref.raw_ratings);
      ref.weight = weights(*ref.majority_rating);
      rec.references.push_back(std::move(ref));
    };
    for (int k = 0; k < 4; ++k) add(instantiate(templates[c], rng, cfg.slot_variation), {3, 3, 3});
    if (rng.uniform() < cfg.outlier_prob) {
      constexpr std::array<int, 5> kOutlierRatings = {1, 1, 2, 2, 3};
      std::vector<int> ratings;
      for (int k = 0; k < 3; ++k) ratings.push_back(kOutlierRatings[rng.below(5)]);
      add(outlier_question(rng), std::move(ratings));
    } else {
      add(instantiate(templates[c], rng, cfg.slot_variation), {3, 3, 3});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace vqg
