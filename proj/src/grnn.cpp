#include "vqg/grnn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vqg::grnn {

void GrnnConfig::validate() const {
  if (feature_dim <= 0 || hidden_dim <= 0 || embed_dim <= 0) {
    throw UsageError("model dimensions must be positive");
  }
  if (beam_size < 1) throw UsageError("beam size must be >= 1");
  if (max_decode_len < 1) throw UsageError("max decode length must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw UsageError("lr decay must lie in (0, 1]");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (grad_clip_norm < 0.0) throw UsageError("gradient clip norm must be >= 0");
  if (max_epochs < 1) throw UsageError("max epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
}

// ---------------------------------------------------------------------------
// Parameter container

GrnnParameters GrnnParameters::zeros(int feature_dim, int hidden_dim, int embed_dim,
                                     std::size_t vocab_size) {
  const Eigen::Index d = feature_dim, h = hidden_dim, e = embed_dim;
  const auto v = static_cast<Eigen::Index>(vocab_size);
  GrnnParameters p;
  p.proj_w = Matrix::Zero(h, d);
  p.proj_b = Vector::Zero(h);
  p.embedding = Matrix::Zero(v, e);
  p.update_w = Matrix::Zero(h, e);
  p.update_u = Matrix::Zero(h, h);
  p.update_b = Vector::Zero(h);
  p.reset_w = Matrix::Zero(h, e);
  p.reset_u = Matrix::Zero(h, h);
  p.reset_b = Vector::Zero(h);
  p.cand_w = Matrix::Zero(h, e);
  p.cand_u = Matrix::Zero(h, h);
  p.cand_b = Vector::Zero(h);
  p.out_w = Matrix::Zero(v, h);
  p.out_b = Vector::Zero(v);
  return p;
}

GrnnParameters GrnnParameters::zeros_like(const GrnnParameters& other) {
  return zeros(other.feature_dim(), other.hidden_dim(), other.embed_dim(), other.vocab_size());
}

namespace {

template <class Params, class View>
std::vector<View> collect(Params& p) {
  auto view = [](std::string_view name, auto& t) {
    return View{name, t.data(), t.rows(), t.cols()};
  };
  return {view("proj_w", p.proj_w),     view("proj_b", p.proj_b),
          view("embedding", p.embedding), view("update_w", p.update_w),
          view("update_u", p.update_u), view("update_b", p.update_b),
          view("reset_w", p.reset_w),   view("reset_u", p.reset_u),
          view("reset_b", p.reset_b),   view("cand_w", p.cand_w),
          view("cand_u", p.cand_u),     view("cand_b", p.cand_b),
          view("out_w", p.out_w),       view("out_b", p.out_b)};
}

}  // namespace

std::vector<TensorView> GrnnParameters::tensors() {
  return collect<GrnnParameters, TensorView>(*this);
}

std::vector<ConstTensorView> GrnnParameters::tensors() const {
  return collect<const GrnnParameters, ConstTensorView>(*this);
}

void GrnnParameters::check_shapes(const GrnnConfig& cfg) const {
  const GrnnParameters expected =
      zeros(cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim, cfg.vocab.size());
  const auto want = expected.tensors();
  const auto have = tensors();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].rows != have[i].rows || want[i].cols != have[i].cols) {
      throw DataError("tensor " + std::string(want[i].name) + " has shape " +
                      std::to_string(have[i].rows) + "x" + std::to_string(have[i].cols) +
                      ", expected " + std::to_string(want[i].rows) + "x" +
                      std::to_string(want[i].cols));
    }
  }
}

bool GrnnParameters::all_finite() const {
  for (const auto& t : tensors()) {
    if (!t.map().allFinite()) return false;
  }
  return true;
}

double GrnnParameters::squared_norm() const {
  double sum = 0.0;
  for (const auto& t : tensors()) sum += t.map().squaredNorm();
  return sum;
}

void GrnnParameters::scale(double factor) {
  for (auto& t : tensors()) t.map() *= factor;
}

void GrnnParameters::add_scaled(const GrnnParameters& other, double factor) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].map() += factor * theirs[i].map();
}

bool operator==(const GrnnParameters& a, const GrnnParameters& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].rows != tb[i].rows || ta[i].cols != tb[i].cols) return false;
    if (!std::equal(ta[i].data, ta[i].data + ta[i].size(), tb[i].data)) return false;
  }
  return true;
}

GrnnParameters init_parameters(const GrnnConfig& cfg) {
  cfg.validate();
  GrnnParameters p =
      GrnnParameters::zeros(cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim, cfg.vocab.size());
  Rng rng(derive_seed(cfg.seed, "init"));
  auto fill = [&](Matrix& m, int fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  };
  fill(p.proj_w, cfg.feature_dim);
  fill(p.embedding, cfg.embed_dim);
  fill(p.update_w, cfg.embed_dim);
  fill(p.update_u, cfg.hidden_dim);
  fill(p.reset_w, cfg.embed_dim);
  fill(p.reset_u, cfg.hidden_dim);
  fill(p.cand_w, cfg.embed_dim);
  fill(p.cand_u, cfg.hidden_dim);
  fill(p.out_w, cfg.hidden_dim);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pieces

namespace {

Vector sigmoid(const Vector& a) {
  return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

struct StepCache {
  Vector z, r, c, h;  // gates and the new state
};

StepCache forward_step(const GrnnParameters& p, const Vector& x, const Vector& h_prev) {
  StepCache s;
  s.z = sigmoid(p.update_w * x + p.update_u * h_prev + p.update_b);
  s.r = sigmoid(p.reset_w * x + p.reset_u * h_prev + p.reset_b);
  const Vector gated = s.r.cwiseProduct(h_prev);
  s.c = (p.cand_w * x + p.cand_u * gated + p.cand_b).array().tanh().matrix();
  s.h = (Vector::Ones(s.z.size()) - s.z).cwiseProduct(h_prev) + s.z.cwiseProduct(s.c);
  return s;
}

void check_target(const GrnnParameters& p, std::span<const int> target) {
  if (target.size() < 2) throw DataError("target sequence needs at least <s> and </s>");
  if (target.front() != Vocabulary::kBegin || target.back() != Vocabulary::kEnd) {
    throw DataError("target sequence must start with <s> and end with </s>");
  }
  for (int id : target) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size()) {
      throw DataError("target id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

void check_feature(const GrnnParameters& p, const FeatureVector& f) {
  if (f.size() != p.proj_w.cols()) {
    throw DataError("feature dimension " + std::to_string(f.size()) + " does not match model " +
                    std::to_string(p.proj_w.cols()));
  }
}

}  // namespace

Vector gru_step(const GrnnParameters& params, const Vector& x, const Vector& h_prev) {
  Vector h = forward_step(params, x, h_prev).h;
  if (!h.allFinite()) throw DataError("recurrent state became non-finite");
  return h;
}

Vector initial_state(const GrnnParameters& params, const FeatureVector& feature) {
  check_feature(params, feature);
  return params.proj_w * feature + params.proj_b;
}

Vector log_softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

double sequence_nll(const GrnnParameters& params, const FeatureVector& feature,
                    std::span<const int> target_ids) {
  check_target(params, target_ids);
  Vector h = initial_state(params, feature);
  double nll = 0.0;
  const std::size_t steps = target_ids.size() - 1;
  for (std::size_t k = 0; k < steps; ++k) {
    h = gru_step(params, params.embedding.row(target_ids[k]).transpose(), h);
    const Vector lp = log_softmax(params.out_w * h + params.out_b);
    nll -= lp[target_ids[k + 1]];
  }
  return nll / static_cast<double>(steps);
}

std::vector<TrainingExample> make_examples(std::span<const ImageRecord> records,
                                           const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  for (const auto& rec : records) {
    for (const auto& ref : rec.references) {
      out.push_back({rec.features, encode(ref.question, vocab, true)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backpropagation through time

namespace {

// Adds scale * d(sequence_nll)/d(params) into grad; returns the summed
// (not averaged) token NLL of the example.
double accumulate_example(const GrnnParameters& p, const TrainingExample& ex, double scale,
                          GrnnParameters& grad) {
  check_target(p, ex.target_ids);
  const auto& target = ex.target_ids;
  const std::size_t steps = target.size() - 1;

  std::vector<Vector> states;
  std::vector<StepCache> cache;
  std::vector<Vector> probs;
  states.reserve(steps + 1);
  cache.reserve(steps);
  probs.reserve(steps);
  states.push_back(initial_state(p, ex.feature));

  double nll = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    cache.push_back(forward_step(p, p.embedding.row(target[k]).transpose(), states.back()));
    states.push_back(cache.back().h);
    const Vector lp = log_softmax(p.out_w * states.back() + p.out_b);
    nll -= lp[target[k + 1]];
    probs.push_back(lp.array().exp().matrix());
  }

  const double step_scale = scale / static_cast<double>(steps);
  Vector dh_next = Vector::Zero(p.hidden_dim());
  for (std::size_t k = steps; k-- > 0;) {
    const StepCache& s = cache[k];
    const Vector& h_prev = states[k];
    const auto x = p.embedding.row(target[k]).transpose();

    Vector dlogits = probs[k];
    dlogits[target[k + 1]] -= 1.0;
    dlogits *= step_scale;
    grad.out_w.noalias() += dlogits * s.h.transpose();
    grad.out_b += dlogits;

    const Vector dh = p.out_w.transpose() * dlogits + dh_next;
    const Vector one = Vector::Ones(dh.size());

    const Vector da_z = dh.cwiseProduct(s.c - h_prev).cwiseProduct(s.z.cwiseProduct(one - s.z));
    const Vector da_c = dh.cwiseProduct(s.z).cwiseProduct(one - s.c.cwiseProduct(s.c));
    const Vector gated = s.r.cwiseProduct(h_prev);
    const Vector dgated = p.cand_u.transpose() * da_c;
    const Vector da_r = dgated.cwiseProduct(h_prev).cwiseProduct(s.r.cwiseProduct(one - s.r));

    grad.update_w.noalias() += da_z * x.transpose();
    grad.update_u.noalias() += da_z * h_prev.transpose();
    grad.update_b += da_z;
    grad.reset_w.noalias() += da_r * x.transpose();
    grad.reset_u.noalias() += da_r * h_prev.transpose();
    grad.reset_b += da_r;
    grad.cand_w.noalias() += da_c * x.transpose();
    grad.cand_u.noalias() += da_c * gated.transpose();
    grad.cand_b += da_c;

    const Vector dx = p.update_w.transpose() * da_z + p.reset_w.transpose() * da_r +
                      p.cand_w.transpose() * da_c;
    grad.embedding.row(target[k]) += dx.transpose();

    dh_next = dh.cwiseProduct(one - s.z) + p.update_u.transpose() * da_z +
              p.reset_u.transpose() * da_r + dgated.cwiseProduct(s.r);
  }
  grad.proj_w.noalias() += dh_next * ex.feature.transpose();
  grad.proj_b += dh_next;
  return nll;
}

}  // namespace

double loss_and_gradients(const GrnnParameters& params, std::span<const TrainingExample> batch,
                          GrnnParameters& grad) {
  if (batch.empty()) throw DataError("gradient batch is empty");
  grad = GrnnParameters::zeros_like(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    check_feature(params, ex.feature);
    const double nll = accumulate_example(params, ex, scale, grad);
    loss += nll / static_cast<double>(ex.target_ids.size() - 1);
  }
  if (!grad.all_finite()) throw DataError("non-finite gradient");
  return loss * scale;
}

GrnnParameters gradients(const GrnnParameters& params, std::span<const TrainingExample> batch) {
  GrnnParameters grad;
  loss_and_gradients(params, batch, grad);
  return grad;
}

double corpus_nll(const GrnnParameters& params, std::span<const TrainingExample> data) {
  if (data.empty()) throw DataError("cannot evaluate NLL on an empty set");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    const std::size_t steps = ex.target_ids.size() - 1;
    total += sequence_nll(params, ex.feature, ex.target_ids) * static_cast<double>(steps);
    tokens += steps;
  }
  return total / static_cast<double>(tokens);
}

// ---------------------------------------------------------------------------
// Training

EarlyStopping::Verdict EarlyStopping::observe(double val_nll) {
  const int check = checks_++;
  if (val_nll < best_) {
    best_ = val_nll;
    best_check_ = check;
    since_best_ = 0;
    return Verdict::improved;
  }
  ++since_best_;
  return since_best_ >= patience_ ? Verdict::stop : Verdict::plateau;
}

TrainResult train(const GrnnConfig& cfg, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (val_set.empty()) throw DataError("validation set is empty");

  GrnnParameters params = init_parameters(cfg);
  TrainState state;
  state.best_params = params;
  EarlyStopping stopper(cfg.patience);
  Rng order_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double lr = cfg.learning_rate;
  GrnnParameters grad = GrnnParameters::zeros_like(params);
  std::vector<const TrainingExample*> batch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& t : grad.tensors()) t.map().setZero();
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = train_set[order[i]];
        check_feature(params, ex.feature);
        double nll;
        try {
          nll = accumulate_example(params, ex, scale, grad);
        } catch (const DataError& e) {
          throw TrainingDivergence(epoch, e.what());
        }
        epoch_nll += nll;
        epoch_tokens += ex.target_ids.size() - 1;
      }
      const double norm = std::sqrt(grad.squared_norm());
      if (!std::isfinite(norm)) throw TrainingDivergence(epoch, "non-finite gradient");
      if (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm) {
        grad.scale(cfg.grad_clip_norm / norm);
      }
      params.add_scaled(grad, -lr);
    }

    const double train_nll = epoch_nll / static_cast<double>(epoch_tokens);
    if (!std::isfinite(train_nll)) throw TrainingDivergence(epoch, "non-finite training loss");
    double val_nll;
    try {
      val_nll = corpus_nll(params, val_set);
    } catch (const DataError& e) {
      throw TrainingDivergence(epoch, e.what());
    }
    if (!std::isfinite(val_nll)) throw TrainingDivergence(epoch, "non-finite validation loss");

    state.epoch = epoch;
    state.train_nll.push_back(train_nll);
    state.val_nll.push_back(val_nll);
    state.learning_rate.push_back(lr);
    const auto verdict = stopper.observe(val_nll);
    if (verdict == EarlyStopping::Verdict::improved) {
      state.best_params = params;
      state.best_epoch = epoch;
    } else {
      lr *= cfg.lr_decay;
    }
    state.best_val_nll = stopper.best();
    state.best_val_history.push_back(stopper.best());
    state.checks_since_improvement = stopper.checks_since_improvement();
    if (on_epoch) on_epoch(state);
    if (verdict == EarlyStopping::Verdict::stop) {
      state.stopped_early = true;
      break;
    }
  }
  return {state.best_params, std::move(state)};
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Hypothesis {
  std::vector<int> ids;
  double log_prob = 0.0;
  Vector state;
  bool ended = false;      // last token is </s>
  bool truncated = false;  // hit max_decode_len without </s>

  bool finished() const { return ended || truncated; }
};

struct Candidate {
  std::size_t parent;
  int token;  // -1 for a carried-over finished hypothesis
  double log_prob;
  double score;
};

}  // namespace

DecodeResult beam_decode(const GrnnParameters& params, const FeatureVector& feature,
                         const GrnnConfig& cfg) {
  if (cfg.beam_size < 1) throw UsageError("beam size must be >= 1");
  if (cfg.max_decode_len < 1) throw UsageError("max decode length must be >= 1");
  const auto width = static_cast<std::size_t>(cfg.beam_size);
  const auto max_len = static_cast<std::size_t>(cfg.max_decode_len);
  const auto vocab = static_cast<int>(params.vocab_size());

  std::vector<Hypothesis> beam(1);
  beam[0].state = initial_state(params, feature);

  auto score_of = [&](double log_prob, std::size_t len) {
    return cfg.length_normalize && len > 0 ? log_prob / static_cast<double>(len) : log_prob;
  };

  std::vector<Vector> next_states(width);
  std::vector<Vector> step_log_probs(width);
  while (!std::all_of(beam.begin(), beam.end(), [](const auto& h) { return h.finished(); })) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const auto& hyp = beam[b];
      if (hyp.finished()) {
        candidates.push_back({b, -1, hyp.log_prob, score_of(hyp.log_prob, hyp.ids.size())});
        continue;
      }
      const int prev = hyp.ids.empty() ? Vocabulary::kBegin : hyp.ids.back();
      next_states[b] = gru_step(params, params.embedding.row(prev).transpose(), hyp.state);
      step_log_probs[b] = log_softmax(params.out_w * next_states[b] + params.out_b);
      for (int tok = 0; tok < vocab; ++tok) {
        if (tok == Vocabulary::kUnknown || tok == Vocabulary::kBegin) continue;
        const double lp = hyp.log_prob + step_log_probs[b][tok];
        candidates.push_back({b, tok, lp, score_of(lp, hyp.ids.size() + 1)});
      }
    }

    // Orders by score, then by the id sequence the candidate stands for.
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& ia = beam[a.parent].ids;
      const auto& ib = beam[b.parent].ids;
      const std::size_t la = ia.size() + (a.token >= 0);
      const std::size_t lb = ib.size() + (b.token >= 0);
      for (std::size_t i = 0; i < std::min(la, lb); ++i) {
        const int xa = i < ia.size() ? ia[i] : a.token;
        const int xb = i < ib.size() ? ib[i] : b.token;
        if (xa != xb) return xa < xb;
      }
      return la < lb;
    };
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);

    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      const Hypothesis& parent = beam[c.parent];
      if (c.token < 0) {
        next.push_back(parent);
        continue;
      }
      Hypothesis h;
      h.ids = parent.ids;
      h.ids.push_back(c.token);
      h.log_prob = c.log_prob;
      h.ended = c.token == Vocabulary::kEnd;
      h.truncated = !h.ended && h.ids.size() >= max_len;
      if (!h.ended) h.state = next_states[c.parent];
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  // The beam is sorted best-first; prefer hypotheses that reached </s>.
  const Hypothesis* best = nullptr;
  for (const auto& h : beam) {
    if (h.ended) {
      best = &h;
      break;
    }
  }
  DecodeResult result;
  if (best == nullptr) {
    best = &beam.front();
    result.truncated = true;
  }
  result.log_prob = best->log_prob;
  for (int id : best->ids) {
    if (id != Vocabulary::kEnd) result.ids.push_back(id);
  }
  result.tokens = decode_ids(result.ids, cfg.vocab);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "vqg-grnn-checkpoint";
constexpr int kFormatVersion = 1;

std::string hex_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  if (ec != std::errc()) throw DataError("cannot format checkpoint value");
  return std::string(buf, ptr);
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("malformed checkpoint value '" + s + "'");
  }
  return v;
}

template <class T>
T read_field(std::istream& in, std::string_view key) {
  std::string name;
  T value{};
  if (!(in >> name) || name != key || !(in >> value)) {
    throw DataError("checkpoint: expected field '" + std::string(key) + "'");
  }
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const GrnnConfig& cfg, const GrnnParameters& params) {
  params.check_shapes(cfg);
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "feature_dim " << cfg.feature_dim << '\n';
  out << "hidden_dim " << cfg.hidden_dim << '\n';
  out << "embed_dim " << cfg.embed_dim << '\n';
  out << "beam_size " << cfg.beam_size << '\n';
  out << "max_decode_len " << cfg.max_decode_len << '\n';
  out << "length_normalize " << (cfg.length_normalize ? 1 : 0) << '\n';
  out << "learning_rate " << hex_double(cfg.learning_rate) << '\n';
  out << "lr_decay " << hex_double(cfg.lr_decay) << '\n';
  out << "patience " << cfg.patience << '\n';
  out << "grad_clip_norm " << hex_double(cfg.grad_clip_norm) << '\n';
  out << "max_epochs " << cfg.max_epochs << '\n';
  out << "batch_size " << cfg.batch_size << '\n';
  out << "seed " << cfg.seed << '\n';
  out << "vocab_threshold " << cfg.vocab.threshold() << '\n';
  out << "vocab_entries " << cfg.vocab.size() - 3 << '\n';
  for (std::size_t id = 3; id < cfg.vocab.size(); ++id) {
    const auto& tok = cfg.vocab.token(static_cast<int>(id));
    out << tok << ' ' << cfg.vocab.count(tok) << '\n';
  }
  for (const auto& t : params.tensors()) {
    out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (i) out << ' ';
      out << hex_double(t.data[i]);
    }
    out << '\n';
  }
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const GrnnConfig& cfg,
                     const GrnnParameters& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(out, cfg, params);
  if (!out) throw DataError("write failed for checkpoint " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw DataError("not a GRNN checkpoint");
  if (version != kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  GrnnConfig& cfg = ck.config;
  cfg.feature_dim = read_field<int>(in, "feature_dim");
  cfg.hidden_dim = read_field<int>(in, "hidden_dim");
  cfg.embed_dim = read_field<int>(in, "embed_dim");
  cfg.beam_size = read_field<int>(in, "beam_size");
  cfg.max_decode_len = read_field<int>(in, "max_decode_len");
  cfg.length_normalize = read_field<int>(in, "length_normalize") != 0;
  cfg.learning_rate = parse_hex_double(read_field<std::string>(in, "learning_rate"));
  cfg.lr_decay = parse_hex_double(read_field<std::string>(in, "lr_decay"));
  cfg.patience = read_field<int>(in, "patience");
  cfg.grad_clip_norm = parse_hex_double(read_field<std::string>(in, "grad_clip_norm"));
  cfg.max_epochs = read_field<int>(in, "max_epochs");
  cfg.batch_size = read_field<int>(in, "batch_size");
  cfg.seed = read_field<std::uint64_t>(in, "seed");
  const int threshold = read_field<int>(in, "vocab_threshold");
  const auto entries = read_field<std::size_t>(in, "vocab_entries");
  std::vector<std::pair<std::string, std::size_t>> vocab_entries;
  for (std::size_t i = 0; i < entries; ++i) {
    std::string tok;
    std::size_t count = 0;
    if (!(in >> tok >> count)) throw DataError("checkpoint: truncated vocabulary");
    vocab_entries.emplace_back(std::move(tok), count);
  }
  cfg.vocab = Vocabulary::from_entries(vocab_entries, threshold);
  cfg.validate();

  ck.params = GrnnParameters::zeros(cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim,
                                    cfg.vocab.size());
  for (auto& t : ck.params.tensors()) {
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "tensor") {
      throw DataError("checkpoint: expected tensor header");
    }
    if (name != t.name || rows != t.rows || cols != t.cols) {
      throw DataError("checkpoint: tensor " + name + " " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " does not match expected " + std::string(t.name) +
                      " " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
    }
    std::string value;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (!(in >> value)) throw DataError("checkpoint: truncated tensor " + name);
      t.data[i] = parse_hex_double(value);
    }
  }
  std::string end;
  if (!(in >> end) || end != "end") throw DataError("checkpoint: missing end marker");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace vqg::grnn
