#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vqg/corpus.hpp"

namespace vqg::grnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GrnnConfig {
  int feature_dim = 4096;
  int hidden_dim = 500;
  int embed_dim = 500;
  Vocabulary vocab;
  int beam_size = 8;
  int max_decode_len = 30;
  bool length_normalize = false;
  double learning_rate = 0.1;
  double lr_decay = 0.5;  // applied on every non-improving validation check; 1 disables
  int patience = 3;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  int max_epochs = 50;
  int batch_size = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mutable view of one parameter tensor, column-major.
struct TensorView {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
  Eigen::Index size() const { return rows * cols; }
};

struct ConstTensorView {
  std::string_view name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Map<const Matrix> map() const { return {data, rows, cols}; }
  Eigen::Index size() const { return rows * cols; }
};

/// Every trainable tensor of the model.
///   h0 = proj_w * feature + proj_b
///   z  = sigmoid(update_w x + update_u h + update_b)
///   r  = sigmoid(reset_w x + reset_u h + reset_b)
///   c  = tanh(cand_w x + cand_u (r . h) + cand_b)
///   h' = (1 - z) . h + z . c
///   logits = out_w h' + out_b
/// where x is the embedding row of the previous token.
struct GrnnParameters {
  Matrix proj_w;
  Vector proj_b;
  Matrix embedding;  // |V| x e, one row per token
  Matrix update_w, update_u;
  Vector update_b;
  Matrix reset_w, reset_u;
  Vector reset_b;
  Matrix cand_w, cand_u;
  Vector cand_b;
  Matrix out_w;
  Vector out_b;

  /// Same shapes, all zeros.
  static GrnnParameters zeros_like(const GrnnParameters& other);
  static GrnnParameters zeros(int feature_dim, int hidden_dim, int embed_dim,
                              std::size_t vocab_size);

  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;

  int hidden_dim() const { return static_cast<int>(proj_b.size()); }
  int feature_dim() const { return static_cast<int>(proj_w.cols()); }
  int embed_dim() const { return static_cast<int>(embedding.cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(out_b.size()); }

  /// Throws DataError unless all shapes agree with the configuration.
  void check_shapes(const GrnnConfig& cfg) const;
  bool all_finite() const;
  double squared_norm() const;
  void scale(double factor);
  /// this += factor * other
  void add_scaled(const GrnnParameters& other, double factor);

  friend bool operator==(const GrnnParameters& a, const GrnnParameters& b);
};

/// Uniform(-s, s) with s = 1/sqrt(fan_in) for matrices, zero biases.
GrnnParameters init_parameters(const GrnnConfig& cfg);

/// One recurrent step. Throws DataError if the result is not finite.
Vector gru_step(const GrnnParameters& params, const Vector& x, const Vector& h_prev);

/// Initial recurrent state from an image feature.
Vector initial_state(const GrnnParameters& params, const FeatureVector& feature);

/// Numerically stable log-softmax.
Vector log_softmax(const Vector& logits);

/// Mean per-token negative log-likelihood under teacher forcing. The target
/// must start with <s> and end with </s>.
double sequence_nll(const GrnnParameters& params, const FeatureVector& feature,
                    std::span<const int> target_ids);

struct TrainingExample {
  FeatureVector feature;
  std::vector<int> target_ids;  // <s> ... </s>
};

/// One example per reference question of each record.
std::vector<TrainingExample> make_examples(std::span<const ImageRecord> records,
                                           const Vocabulary& vocab);

/// Gradient of the batch mean of sequence_nll with respect to every
/// parameter. Features are constants.
GrnnParameters gradients(const GrnnParameters& params, std::span<const TrainingExample> batch);

/// Same as gradients but also returns the batch mean loss.
double loss_and_gradients(const GrnnParameters& params, std::span<const TrainingExample> batch,
                          GrnnParameters& grad);

/// Token-weighted mean NLL over a data set (nats per predicted token).
double corpus_nll(const GrnnParameters& params, std::span<const TrainingExample> data);

/// Patience-based plateau tracking on validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  enum class Verdict { improved, plateau, stop };

  Verdict observe(double val_nll);

  double best() const { return best_; }
  int checks_since_improvement() const { return since_best_; }
  int best_check() const { return best_check_; }

 private:
  int patience_;
  int checks_ = 0;
  int best_check_ = -1;
  int since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainState {
  int epoch = 0;  // epochs completed
  double best_val_nll = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int checks_since_improvement = 0;
  GrnnParameters best_params;
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  std::vector<double> best_val_history;
  std::vector<double> learning_rate;
  bool stopped_early = false;
};

/// Raised when the training loss or gradients stop being finite.
class TrainingDivergence : public DataError {
 public:
  TrainingDivergence(int epoch, const std::string& what)
      : DataError("training diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

using EpochCallback = std::function<void(const TrainState&)>;

struct TrainResult {
  GrnnParameters params;  // the best validation snapshot
  TrainState state;
};

/// Plain SGD with optional gradient-norm clipping, validation after every
/// epoch, learning-rate decay on plateaus and early stopping.
TrainResult train(const GrnnConfig& cfg, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set, const EpochCallback& on_epoch = {});

struct DecodeResult {
  std::vector<int> ids;  // generated ids without sentinels
  TokenSequence tokens;
  double log_prob = 0.0;
  bool truncated = false;  // no hypothesis reached </s> within max_decode_len
};

/// Beam search over summed log-probabilities. <unk> and <s> are never
/// emitted. Ties are broken towards the lexicographically smaller sequence.
DecodeResult beam_decode(const GrnnParameters& params, const FeatureVector& feature,
                         const GrnnConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const GrnnConfig& cfg,
                     const GrnnParameters& params);
void write_checkpoint(std::ostream& out, const GrnnConfig& cfg, const GrnnParameters& params);

struct Checkpoint {
  GrnnConfig config;
  GrnnParameters params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace vqg::grnn
