#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "grnn_fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "vqg/grnn.hpp"

using namespace vqg;
using namespace vqg::grnn;
using fixtures::random_params;
using fixtures::tiny_config;

namespace {

Vector to_eigen(const oracle::Vec& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

oracle::Vec to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

double max_abs_diff(const Vector& a, const oracle::Vec& b) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[static_cast<std::size_t>(i)]));
  return m;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  GrnnConfig cfg;
  CHECK(cfg.hidden_dim == 500);
  CHECK(cfg.embed_dim == 500);
  CHECK(cfg.beam_size == 8);
  CHECK(cfg.max_decode_len == 30);
  CHECK(cfg.learning_rate == 0.1);
  CHECK(cfg.lr_decay == 0.5);
  CHECK(cfg.patience == 3);
  CHECK(cfg.grad_clip_norm == 5.0);
  CHECK_FALSE(cfg.length_normalize);
  CHECK_NOTHROW(cfg.validate());
  cfg.beam_size = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.beam_size = 1;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.learning_rate = 0.1;
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("init_parameters is seeded, bounded and has zero biases") {
  const auto cfg = tiny_config(8, 12, 10, 20, 5);
  const auto a = init_parameters(cfg);
  const auto b = init_parameters(cfg);
  CHECK(a == b);
  auto other = cfg;
  other.seed = 6;
  CHECK_FALSE(init_parameters(other) == a);
  CHECK_NOTHROW(a.check_shapes(cfg));
  CHECK(a.proj_b.isZero(0.0));
  CHECK(a.update_b.isZero(0.0));
  CHECK(a.reset_b.isZero(0.0));
  CHECK(a.cand_b.isZero(0.0));
  CHECK(a.out_b.isZero(0.0));
  CHECK(a.proj_w.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(a.update_u.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(12.0));
  CHECK(a.proj_w.rows() == 12);
  CHECK(a.proj_w.cols() == 8);
  CHECK(a.embedding.rows() == 20);
  CHECK(a.embedding.cols() == 10);
  CHECK(a.out_w.rows() == 20);
  CHECK(a.out_w.cols() == 12);
  CHECK(a.tensors().size() == 14);
}

TEST_CASE("gru_step analytic cases") {
  const auto cfg = tiny_config(3, 4, 2, 6);
  const auto zero = GrnnParameters::zeros(3, 4, 2, 6);
  Vector h(4);
  h << 1.0, -2.0, 0.5, 4.0;
  const Vector x = Vector::Constant(2, 0.7);
  CHECK(gru_step(zero, x, h).isApprox(0.5 * h, 1e-15));
  CHECK(gru_step(zero, x, Vector::Zero(4)).isZero(0.0));
}

TEST_CASE("gru_step matches the element-wise oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cfg = tiny_config(5, 7, 6, 9);
    const auto p = random_params(cfg, seed, 0.8);
    std::mt19937_64 g(seed);
    const Vector x = fixtures::random_feature(g, 6);
    const Vector h = fixtures::random_feature(g, 7);
    CHECK(max_abs_diff(gru_step(p, x, h), oracle::gru_step(p, to_std(x), to_std(h))) < 1e-12);
  }
}

TEST_CASE("gru_step rejects non-finite results") {
  const auto cfg = tiny_config(2, 3, 2, 5);
  auto p = random_params(cfg, 1, 0.5);
  p.cand_b[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(gru_step(p, Vector::Ones(2), Vector::Ones(3)), DataError);
}

TEST_CASE("sequence_nll") {
  const auto cfg = tiny_config(4, 5, 3, 11);
  auto p = random_params(cfg, 3, 0.5);
  std::mt19937_64 g(3);
  const FeatureVector f = fixtures::random_feature(g, 4);
  SUBCASE("uniform output layer gives ln|V|") {
    p.out_w.setZero();
    p.out_b.setZero();
    CHECK(sequence_nll(p, f, std::vector<int>{0, 5, 7, 1}) == doctest::Approx(std::log(11.0)).epsilon(1e-14));
  }
  SUBCASE("shortest target is a single prediction") {
    const std::vector<int> ids{0, 1};
    const Vector h1 = gru_step(p, p.embedding.row(0).transpose(), initial_state(p, f));
    const double expect = -log_softmax(p.out_w * h1 + p.out_b)[1];
    CHECK(sequence_nll(p, f, ids) == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("matches the forward oracle and is non-negative") {
    for (int t = 0; t < 30; ++t) {
      const auto ids = fixtures::random_target(g, 11, 8);
      const double nll = sequence_nll(p, f, ids);
      CHECK(nll >= 0.0);
      CHECK(std::fabs(nll - oracle::sequence_nll(p, f, ids)) < 1e-10);
    }
  }
  SUBCASE("malformed targets") {
    CHECK_THROWS(sequence_nll(p, f, std::vector<int>{}));
    CHECK_THROWS(sequence_nll(p, f, std::vector<int>{0}));
    CHECK_THROWS(sequence_nll(p, f, std::vector<int>{5, 1}));
    CHECK_THROWS(sequence_nll(p, f, std::vector<int>{0, 5}));
    CHECK_THROWS(sequence_nll(p, f, std::vector<int>{0, 99, 1}));
  }
}

TEST_CASE("log_softmax rows sum to one") {
  std::mt19937_64 g(9);
  for (int t = 0; t < 50; ++t) {
    Vector logits = 30.0 * fixtures::random_feature(g, 13);
    const Vector lp = log_softmax(logits);
    CHECK(std::fabs(lp.array().exp().sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("gradients match central finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto cfg = tiny_config(8, 12, 10, 20, seed);
    const auto p = random_params(cfg, seed, 0.3);
    const auto batch = fixtures::random_batch(seed, 8, 20, 3);
    for (const auto& r : fixtures::gradient_check(p, batch)) {
      INFO(r.name);
      CHECK(r.relative_error < 1e-4);
    }
  }
}

TEST_CASE("gradient semantics") {
  const auto cfg = tiny_config(3, 4, 3, 8);
  const auto p = random_params(cfg, 2, 0.5);
  const auto batch = fixtures::random_batch(4, 3, 8, 2);
  CHECK_THROWS(gradients(p, std::vector<TrainingExample>{}));
  // A duplicated item has the same mean gradient as the item alone.
  const std::vector<TrainingExample> one{batch[0]}, twice{batch[0], batch[0]};
  const auto g1 = gradients(p, one);
  const auto g2 = gradients(p, twice);
  const auto t1 = g1.tensors();
  const auto t2 = g2.tensors();
  for (std::size_t t = 0; t < t1.size(); ++t) CHECK(t1[t].map().isApprox(t2[t].map(), 1e-14));
  GrnnParameters g3;
  const double loss = loss_and_gradients(p, batch, g3);
  CHECK(loss == doctest::Approx(0.5 * (sequence_nll(p, batch[0].feature, batch[0].target_ids) +
                                       sequence_nll(p, batch[1].feature, batch[1].target_ids)))
                    .epsilon(1e-13));
  CHECK(g3 == gradients(p, batch));
  // Features are constants: the gradient container has no feature slot, and
  // the projection gradient is the outer product with the feature.
  CHECK(g3.proj_w.cols() == 3);
}

TEST_CASE("corpus_nll is token weighted") {
  const auto cfg = tiny_config(3, 4, 3, 8);
  const auto p = random_params(cfg, 2, 0.5);
  const auto batch = fixtures::random_batch(9, 3, 8, 4);
  double total = 0.0, tokens = 0.0;
  for (const auto& ex : batch) {
    const double n = static_cast<double>(ex.target_ids.size() - 1);
    total += n * sequence_nll(p, ex.feature, ex.target_ids);
    tokens += n;
  }
  CHECK(corpus_nll(p, batch) == doctest::Approx(total / tokens).epsilon(1e-13));
}

TEST_CASE("early stopping contract") {
  EarlyStopping s(3);
  CHECK(s.observe(1.0) == EarlyStopping::Verdict::improved);
  CHECK(s.observe(1.1) == EarlyStopping::Verdict::plateau);
  CHECK(s.observe(1.2) == EarlyStopping::Verdict::plateau);
  CHECK(s.observe(1.3) == EarlyStopping::Verdict::stop);
  CHECK(s.best() == 1.0);
  CHECK(s.best_check() == 0);
  EarlyStopping t(2);
  CHECK(t.observe(2.0) == EarlyStopping::Verdict::improved);
  CHECK(t.observe(2.0) == EarlyStopping::Verdict::plateau);
  CHECK(t.observe(1.5) == EarlyStopping::Verdict::improved);
  CHECK(t.checks_since_improvement() == 0);
}

namespace {

std::vector<TrainingExample> constant_target_set(std::uint64_t seed, int d, int token, std::size_t n) {
  std::mt19937_64 g(seed);
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({fixtures::random_feature(g, d), {Vocabulary::kBegin, token, token, Vocabulary::kEnd}});
  }
  return out;
}

}  // namespace

TEST_CASE("training stops exactly patience checks after the best epoch") {
  auto cfg = tiny_config(4, 6, 5, 8, 1);
  cfg.max_epochs = 100;
  cfg.patience = 3;
  cfg.learning_rate = 0.5;
  cfg.lr_decay = 1.0;
  const auto train_set = constant_target_set(1, 4, 3, 10);
  const auto val_set = constant_target_set(2, 4, 4, 5);  // learning token 3 makes token 4 unlikely
  const auto result = train(cfg, train_set, val_set);
  const auto& st = result.state;
  REQUIRE(st.val_nll.size() >= 2);
  CHECK(st.stopped_early);
  const auto best = std::min_element(st.val_nll.begin(), st.val_nll.end());
  CHECK(st.best_epoch == static_cast<int>(best - st.val_nll.begin()) + 1);
  CHECK(st.best_val_nll == *best);
  for (int e = st.best_epoch; e < st.epoch; ++e) CHECK(st.val_nll[e] >= *best);
  CHECK(st.epoch == st.best_epoch + 3);
  CHECK(st.epoch < cfg.max_epochs);
  CHECK(result.params == st.best_params);
  CHECK(corpus_nll(result.params, val_set) == st.best_val_nll);
}

TEST_CASE("training history invariants and determinism") {
  auto cfg = tiny_config(4, 8, 6, 10, 3);
  cfg.max_epochs = 12;
  cfg.batch_size = 2;
  const auto train_set = fixtures::random_batch(11, 4, 10, 16);
  const auto val_set = fixtures::random_batch(12, 4, 10, 6);
  std::vector<int> epochs_seen;
  const auto a = train(cfg, train_set, val_set, [&](const TrainState& s) { epochs_seen.push_back(s.epoch); });
  const auto b = train(cfg, train_set, val_set);
  CHECK(a.state.train_nll == b.state.train_nll);
  CHECK(a.state.val_nll == b.state.val_nll);
  CHECK(a.params == b.params);
  CHECK(epochs_seen.size() == a.state.val_nll.size());
  const auto& h = a.state.best_val_history;
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);
  const double min_val = *std::min_element(a.state.val_nll.begin(), a.state.val_nll.end());
  CHECK(a.state.best_val_nll == min_val);
  CHECK(corpus_nll(a.params, val_set) == min_val);
  // Learning rate halves after each non-improving epoch.
  for (std::size_t i = 1; i < a.state.val_nll.size(); ++i) {
    const bool improved = a.state.val_nll[i - 1] < (i >= 2 ? h[i - 2] : INFINITY);
    CHECK(a.state.learning_rate[i] == (improved ? a.state.learning_rate[i - 1] : 0.5 * a.state.learning_rate[i - 1]));
  }
}

TEST_CASE("training rejects empty data and reports divergence") {
  auto cfg = tiny_config(3, 4, 3, 8);
  const auto data = fixtures::random_batch(1, 3, 8, 3);
  CHECK_THROWS_AS(train(cfg, std::vector<TrainingExample>{}, data), DataError);
  CHECK_THROWS_AS(train(cfg, data, std::vector<TrainingExample>{}), DataError);
  auto bad = data;
  bad[0].feature[0] = std::numeric_limits<double>::infinity();
  try {
    train(cfg, bad, data);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.epoch() == 1);
  } catch (const DataError&) {
    // Non-finite features may also be rejected up front.
  }
}

TEST_CASE("beam size one equals greedy decoding") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = tiny_config(4, 6, 5, 3 + 2 + seed % 6, seed);
    cfg.beam_size = 1;
    cfg.max_decode_len = 8;
    const auto p = random_params(cfg, seed, 1.5);
    std::mt19937_64 g(seed);
    const auto f = fixtures::random_feature(g, 4);
    bool truncated = false;
    const auto expect = oracle::greedy_decode(p, f, cfg.max_decode_len, &truncated);
    const auto got = beam_decode(p, f, cfg);
    CHECK(got.ids == expect);
    CHECK(got.truncated == truncated);
  }
}

TEST_CASE("wide beam equals exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = tiny_config(3, 5, 4, 6, seed);  // three real tokens
    cfg.beam_size = 40;
    cfg.max_decode_len = 3;
    const auto p = random_params(cfg, seed + 1000, 2.0);
    std::mt19937_64 g(seed);
    const auto f = fixtures::random_feature(g, 3);
    const auto got = beam_decode(p, f, cfg);
    CHECK(got.ids == oracle::exhaustive_decode(p, f, cfg.max_decode_len));
    CHECK_FALSE(got.truncated);
  }
}

TEST_CASE("decoded output never contains sentinels or <unk>") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto cfg = tiny_config(3, 4, 3, 6, seed);
    cfg.beam_size = 1 + static_cast<int>(seed % 4);
    cfg.max_decode_len = 6;
    auto p = random_params(cfg, seed, 1.0);
    // Make <unk> and <s> the most attractive outputs.
    p.out_b[Vocabulary::kUnknown] = 10.0;
    p.out_b[Vocabulary::kBegin] = 9.0;
    std::mt19937_64 g(seed);
    const auto r = beam_decode(p, fixtures::random_feature(g, 3), cfg);
    for (int id : r.ids) {
      CHECK(id != Vocabulary::kUnknown);
      CHECK(id != Vocabulary::kBegin);
      CHECK(id != Vocabulary::kEnd);
    }
    for (const auto& t : r.tokens) CHECK_FALSE(Vocabulary::is_special(t));
    CHECK(r.log_prob <= 0.0);
  }
}

TEST_CASE("beam decode truncation and log-probability") {
  auto cfg = tiny_config(2, 3, 2, 5);
  cfg.max_decode_len = 4;
  cfg.beam_size = 3;
  auto p = random_params(cfg, 7, 0.5);
  p.out_b[Vocabulary::kEnd] = -50.0;  // never ends
  const FeatureVector f = FeatureVector::Ones(2);
  const auto r = beam_decode(p, f, cfg);
  CHECK(r.truncated);
  CHECK(r.ids.size() == 4);
  // Log-probability is the teacher-forced sum of the emitted steps.
  oracle::Vec h = oracle::initial_state(p, f);
  int prev = Vocabulary::kBegin;
  double lp = 0.0;
  for (int id : r.ids) {
    h = oracle::gru_step(p, oracle::embedding_row(p, prev), h);
    lp += oracle::log_probs(p, h)[static_cast<std::size_t>(id)];
    prev = id;
  }
  CHECK(r.log_prob == doctest::Approx(lp).epsilon(1e-12));
  cfg.beam_size = 0;
  CHECK_THROWS_AS(beam_decode(p, f, cfg), UsageError);
}

TEST_CASE("length normalisation flag changes the ranking only when enabled") {
  auto cfg = tiny_config(3, 4, 3, 7, 2);
  cfg.max_decode_len = 6;
  int differs = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = random_params(cfg, seed, 1.5);
    std::mt19937_64 g(seed);
    const auto f = fixtures::random_feature(g, 3);
    auto plain = cfg;
    auto norm = cfg;
    norm.length_normalize = true;
    const auto a = beam_decode(p, f, plain);
    CHECK(a.ids == beam_decode(p, f, plain).ids);
    differs += a.ids != beam_decode(p, f, norm).ids;
  }
  CHECK(differs > 0);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  testutil::TempDir dir;
  auto cfg = tiny_config(4, 5, 3, 9, 77);
  cfg.learning_rate = 0.3;
  cfg.grad_clip_norm = 0.0;
  cfg.length_normalize = true;
  const auto p = random_params(cfg, 5, 1.0 / 3.0);
  save_checkpoint(dir / "a.ckpt", cfg, p);
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.params == p);
  CHECK(ck.config.vocab == cfg.vocab);
  CHECK(ck.config.learning_rate == 0.3);
  CHECK(ck.config.grad_clip_norm == 0.0);
  CHECK(ck.config.length_normalize);
  CHECK(ck.config.seed == 77);
  save_checkpoint(dir / "b.ckpt", ck.config, ck.params);
  CHECK(testutil::read_file(dir / "a.ckpt") == testutil::read_file(dir / "b.ckpt"));

  SUBCASE("shape mismatch is rejected") {
    std::string text = testutil::read_file(dir / "a.ckpt");
    const auto pos = text.find("tensor proj_w 5 4");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 17, "tensor proj_w 4 5");
    std::istringstream in(text);
    CHECK_THROWS_AS(read_checkpoint(in), DataError);
  }
  SUBCASE("truncation is rejected") {
    const std::string text = testutil::read_file(dir / "a.ckpt");
    std::istringstream in(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(read_checkpoint(in), DataError);
  }
  SUBCASE("garbage is rejected") {
    std::istringstream in("hello");
    CHECK_THROWS_AS(read_checkpoint(in), DataError);
  }
}

TEST_CASE("training on records end to end is deterministic") {
  std::vector<ImageRecord> recs;
  std::mt19937_64 g(4);
  for (int i = 0; i < 12; ++i) {
    const auto f = fixtures::random_feature(g, 3);
    recs.push_back(testutil::make_record("r" + std::to_string(i), {f[0], f[1], f[2]},
                                         {i % 2 ? "what is it ?" : "who is it ?", "is it red ?"}));
  }
  const auto vocab = build_vocabulary(recs, 1);
  const auto ex = make_examples(recs, vocab);
  CHECK(ex.size() == 24);
  CHECK(ex[0].target_ids.front() == Vocabulary::kBegin);
  CHECK(ex[0].target_ids.back() == Vocabulary::kEnd);
  auto cfg = tiny_config(3, 6, 4, vocab.size(), 8);
  cfg.vocab = vocab;
  cfg.max_epochs = 3;
  testutil::TempDir dir;
  const auto a = train(cfg, ex, ex);
  const auto b = train(cfg, ex, ex);
  save_checkpoint(dir / "a", cfg, a.params);
  save_checkpoint(dir / "b", cfg, b.params);
  CHECK(testutil::read_file(dir / "a") == testutil::read_file(dir / "b"));
}
