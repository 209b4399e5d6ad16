#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kernelsmith/compressor.hpp"
#include "kernelsmith/step_model.hpp"
#include "kernelsmith/vocab.hpp"

namespace ks {

// Sizes of an encoder-decoder. The full-scale reference configuration is
// 4 layers of 1024 units over a 50k vocabulary; the desk default is one
// 64-unit GRU layer with 32-dimensional embeddings.
struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t layers = 1;

  bool operator==(const ModelDims&) const = default;
};

// Named block of the flat parameter vector. Matrices are column-major.
struct ParamBlock {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;

  std::size_t size() const { return rows * cols; }
};

// Parameter order (this is also the checkpoint order):
//   embedding                         E x V
//   encoder.<l>.W / .U / .b           3H x in, 3H x H, 3H x 1   (in = E, then H)
//   decoder.<l>.W / .U / .b           3H x in, 3H x H, 3H x 1   (in = E + H, then H)
//   attention.W / .U / .v             H x H, H x H, H x 1
//   combine.W / .b                    H x 2H, H x 1
//   output.W / .b                     V x H, V x 1
// GRU gate rows are ordered update, reset, candidate.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelDims& dims);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  std::size_t total() const { return total_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

// GRU encoder, input-feeding GRU decoder with additive attention over the
// encoder's top-layer states, tanh combination layer and softmax output.
// All parameters live in one flat vector so optimizers, checkpoints and
// finite-difference checks see a single array.
class ExpansionModel {
 public:
  using Matrix = Eigen::MatrixXd;
  using Vector = Eigen::VectorXd;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  ExpansionModel(const ModelDims& dims, Vocab vocab);

  // Uniform(-scale, scale) weights, zero biases.
  void initialize(std::uint64_t seed, double scale = 0.1);

  const ModelDims& dims() const { return dims_; }
  const Vocab& vocab() const { return vocab_; }
  const ParamLayout& layout() const { return layout_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  ConstMatrixMap param(const std::string& name) const;
  MatrixMap param(const std::string& name);

  bool all_finite() const;

 private:
  ModelDims dims_;
  Vocab vocab_;
  ParamLayout layout_;
  std::vector<double> params_;
};

struct FocusedLossConfig {
  double lambda = 9.0;

  void validate() const;
};

struct FocusedLoss {
  double loss = 0.0;
  std::vector<double> weights;  // 1 or 1 + lambda per position
};

// Per-position weights 1 + lambda * [target token not among source tokens].
// Membership is by surface string; the end-of-sentence symbol is treated as
// present in every source.
std::vector<double> focus_weights(const std::vector<std::string>& target_tokens,
                                  const std::vector<std::string>& source_tokens, double lambda);

// -sum_t w_t * gold_log_probs[t].
FocusedLoss focused_loss(std::span<const double> gold_log_probs,
                         const std::vector<std::string>& target_tokens,
                         const std::vector<std::string>& source_tokens,
                         const FocusedLossConfig& config);

double negative_log_likelihood(std::span<const double> gold_log_probs);

// Encoder output for one input sentence.
struct EncoderMemory {
  Eigen::MatrixXd states;  // H x n, top-layer outputs
  Eigen::MatrixXd keys;    // H x n, attention.U * states
  std::vector<Eigen::VectorXd> final_hidden;  // per layer
};

struct DecoderState {
  std::vector<Eigen::VectorXd> hidden;  // per layer
  Eigen::VectorXd feed;                 // previous attentional vector
  Eigen::VectorXd attention;            // last attention weights (length n)
};

// Throws kEmptyInput for an empty kernel.
std::pair<std::shared_ptr<const EncoderMemory>, DecoderState> encode(
    const ExpansionModel& model, std::span<const TokenId> kernel);

// Log-probabilities over the vocabulary with <pad>, <unk> and <s> banned
// (-infinity) and the rest renormalized.
std::pair<Eigen::VectorXd, DecoderState> decoder_step(const ExpansionModel& model,
                                                      const EncoderMemory& memory,
                                                      const DecoderState& state, TokenId prev);

// Training-time view of one pair: ids plus surface tokens for the focus
// indicator.
struct EncodedPair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;  // original tokens followed by </s>
  std::vector<double> weights;  // focus weight per target position
};

EncodedPair encode_pair(const Vocab& vocab, const SentencePair& pair, double lambda);

// Teacher-forced focused loss of one pair (unnormalized sum) and, when
// gradient is non-null, its gradient in the flat parameter layout
// (accumulated into *gradient). dropout_seed is ignored when dropout == 0.
double pair_loss(const ExpansionModel& model, const EncodedPair& pair,
                 std::vector<double>* gradient, double dropout = 0.0,
                 std::uint64_t dropout_seed = 0);

// Gold-token log-probabilities along the teacher-forced path (training
// distribution, no emission ban).
std::vector<double> gold_log_probs(const ExpansionModel& model, const EncodedPair& pair);

struct TrainConfig {
  std::size_t steps = 2000;
  double learning_rate = 0.005;
  double dropout = 0.0;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  std::size_t log_every = 50;
  double clip_norm = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double init_scale = 0.1;
};

struct TrainResult {
  ExpansionModel model;
  // (step, mean per-token focused loss over the logging interval)
  std::vector<std::pair<std::size_t, double>> loss_history;
};

// Adam on mini-batches drawn from seeded epoch shuffles. The objective is
// the batch mean of per-sequence focused loss divided by target length.
// Throws kEmptyDataset when pairs is empty.
TrainResult train(const std::vector<SentencePair>& pairs, const Vocab& vocab,
                  const ModelDims& dims, const FocusedLossConfig& loss_config,
                  const TrainConfig& train_config);

// Binary checkpoint: "KSMD", u32 version, u32 V, E, H, L, u64 parameter
// count, then little-endian float32 parameters in ParamLayout order.
// A JSON sidecar at path + ".json" stores the vocabulary and configs.
void save_checkpoint(const ExpansionModel& model, const std::string& path,
                     const FocusedLossConfig& loss_config = {},
                     const TrainConfig& train_config = {});
ExpansionModel load_checkpoint(const std::string& path);

// The seq2seq model behind the step-model contract.
class Seq2SeqStepModel final : public StepModel {
 public:
  explicit Seq2SeqStepModel(std::shared_ptr<const ExpansionModel> model) : model_(std::move(model)) {}

  std::size_t vocab_size() const override { return model_->dims().vocab; }
  StatePtr start(std::span<const TokenId> input) const override;
  StepOutput step(const StepState& state, TokenId prev) const override;

  const ExpansionModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ExpansionModel> model_;
};

}  // namespace ks
