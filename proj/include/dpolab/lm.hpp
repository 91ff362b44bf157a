#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dpolab/tokens.hpp"

namespace dpolab::lm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t context_window = 3;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;

  /// Throws ConfigError when any dimension is zero.
  void validate() const;
  std::size_t parameter_count() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weights of the windowed feedforward language model
///
///   x      = [E[c_1]; ...; E[c_k]]          (k*d)
///   hidden = tanh(W_h^T x + b_h)            (h)
///   logits = W_o^T hidden + b_o             (V)
///
/// stored in one contiguous buffer in the order embeddings (V x d),
/// hidden weights (k*d x h), hidden bias (h), output weights (h x V),
/// output bias (V); all matrices row-major. Copies are deep.
///
/// The same type doubles as a gradient container.
class ModelParameters {
 public:
  ModelParameters() = default;
  /// All-zero parameters.
  explicit ModelParameters(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> embeddings() { return block(0); }
  std::span<double> hidden_weights() { return block(1); }
  std::span<double> hidden_bias() { return block(2); }
  std::span<double> output_weights() { return block(3); }
  std::span<double> output_bias() { return block(4); }
  std::span<const double> embeddings() const { return block(0); }
  std::span<const double> hidden_weights() const { return block(1); }
  std::span<const double> hidden_bias() const { return block(2); }
  std::span<const double> output_weights() const { return block(3); }
  std::span<const double> output_bias() const { return block(4); }

  void fill(double value);
  bool all_finite() const;
  /// Byte-for-byte comparison of configuration and every weight.
  bool bitwise_equal(const ModelParameters& other) const;

 private:
  std::span<double> block(std::size_t i);
  std::span<const double> block(std::size_t i) const;

  ModelConfig config_;
  std::vector<double> values_;
  std::size_t offsets_[6] = {};
};

/// Uniform weights in [-0.1, 0.1], zero biases.
ModelParameters initialize_parameters(const ModelConfig& config,
                                      std::uint64_t seed);

/// Log-probability of each response token given the prompt and the preceding
/// response tokens. The context of token i is the last k tokens of
/// prompt ++ response[0, i), left-padded with <pad>.
using TokenLogProbs = std::vector<double>;

TokenLogProbs token_log_probs(const ModelParameters& params,
                              std::span<const TokenId> prompt,
                              std::span<const TokenId> response);

/// Full next-token log distribution after `history` (only its last k tokens
/// are used).
std::vector<double> next_token_log_distribution(const ModelParameters& params,
                                                std::span<const TokenId> history);

/// Sum of token_log_probs. Throws DomainError on an empty response.
double sequence_log_prob(const ModelParameters& params,
                         std::span<const TokenId> prompt,
                         std::span<const TokenId> response);

/// Backward pass for any loss that depends on the model only through the
/// response token log-probabilities: adds
///   sum_i coefficients[i] * d log p(y_i | context_i) / d theta
/// to `grad`. Returns the token log-probabilities of the forward pass.
TokenLogProbs accumulate_log_prob_gradient(const ModelParameters& params,
                                           std::span<const TokenId> prompt,
                                           std::span<const TokenId> response,
                                           std::span<const double> coefficients,
                                           ModelParameters& grad);

/// Greedy continuation of `prompt`; stops after `eos` (included) or after
/// `max_new_tokens` tokens.
TokenSequence greedy_decode(const ModelParameters& params,
                            std::span<const TokenId> prompt,
                            std::size_t max_new_tokens, TokenId eos = kEosId);

// --- objectives and gradients ------------------------------------------------

/// A scalar function of the model parameters with bound data.
class ScalarObjective {
 public:
  virtual ~ScalarObjective() = default;
  virtual double value(const ModelParameters& params) const = 0;
  /// Returns the value and overwrites `grad` with the analytic gradient.
  virtual double value_and_gradient(const ModelParameters& params,
                                    ModelParameters& grad) const = 0;
};

/// f(theta) = 0.
class ZeroObjective final : public ScalarObjective {
 public:
  double value(const ModelParameters&) const override { return 0.0; }
  double value_and_gradient(const ModelParameters& params,
                            ModelParameters& grad) const override;
};

struct LmExample {
  TokenSequence prompt;
  TokenSequence response;
};

/// Mean token negative log-likelihood over all response tokens of a batch.
class CrossEntropyObjective final : public ScalarObjective {
 public:
  explicit CrossEntropyObjective(std::span<const LmExample> examples)
      : examples_(examples) {}
  double value(const ModelParameters& params) const override;
  double value_and_gradient(const ModelParameters& params,
                            ModelParameters& grad) const override;

 private:
  std::span<const LmExample> examples_;
};

/// Analytic gradient of `objective` at `params`.
ModelParameters grad_scalar(const ModelParameters& params,
                            const ScalarObjective& objective);

// --- optimization -------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelConfig& config, AdamOptions options = {});
  void step(ModelParameters& params, const ModelParameters& grad,
            double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Linear warm-up over the first `warmup_fraction` of `total_steps`, then
/// constant.
double warmup_learning_rate(double base, std::size_t step,
                            std::size_t total_steps, double warmup_fraction);

struct TrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double warmup_fraction = 0.1;

  void validate() const;
};

struct PretrainResult {
  ModelParameters params;
  /// Mean token cross-entropy of each epoch (mean over its mini-batches).
  std::vector<double> loss_trace;
};

/// Mini-batch Adam on mean token cross-entropy, starting from `init`.
/// Throws TrainingDivergence on a non-finite loss.
PretrainResult pretrain(std::span<const LmExample> corpus, ModelParameters init,
                        const TrainOptions& options);

// --- checkpoints --------------------------------------------------------------

/// Checkpoint layout: 8-byte magic "DPOLABLM", uint32 format version (1),
/// uint32 reserved (0), four uint64 dimensions (V, k, d, h), then every
/// parameter as an IEEE-754 binary64 in ModelParameters buffer order. All
/// integers and floats are little-endian.
void save_checkpoint(const std::filesystem::path& path,
                     const ModelParameters& params);
ModelParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace dpolab::lm
