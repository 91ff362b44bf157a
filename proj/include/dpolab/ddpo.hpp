#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dpolab/corpus.hpp"
#include "dpolab/lm.hpp"
#include "dpolab/segdiff.hpp"

namespace dpolab::ddpo {

using corpus::PreferencePair;
using segdiff::SegmentAnnotation;
using segdiff::SegmentLabel;

/// How token log-probabilities are aggregated into a response score.
///   Sum      : sum_i log p_i
///   Mean     : sum_i log p_i / |y|
///   Weighted : (sum_{u} log p_i + gamma * sum_{c} log p_i) / (|y_u| + gamma |y_c|)
enum class ScoreMode { Sum, Mean, Weighted };

std::string_view to_string(ScoreMode mode);
/// Throws ConfigError for anything but "sum", "mean" or "weighted".
ScoreMode parse_score_mode(std::string_view text);

struct DdpoConfig {
  double beta = 0.5;
  double gamma = 5.0;
  std::size_t epochs = 7;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  ScoreMode score_mode = ScoreMode::Weighted;
  double warmup_fraction = 0.1;

  /// beta > 0, gamma >= 1, positive learning rate and batch size.
  void validate() const;
};

/// score = sum_i weights[i] * log p_i / normalizer. The weights are the exact
/// per-token coefficients (1 or gamma), kept apart from the normalizer so the
/// corrected/unchanged ratio is available without rounding.
struct ScoreWeights {
  std::vector<double> weights;
  double normalizer = 1.0;
};

ScoreWeights score_weights(std::span<const SegmentLabel> labels, ScoreMode mode,
                           double gamma);

/// Aggregates precomputed token log-probabilities.
double aggregate_score(std::span<const double> log_probs,
                       std::span<const SegmentLabel> labels, ScoreMode mode,
                       double gamma);

/// Dense segment-weighted response score. Throws DomainError on an empty
/// response or gamma < 1.
double weighted_score(const lm::ModelParameters& params,
                      std::span<const TokenId> prompt,
                      const SegmentAnnotation& response, double gamma);

double response_score(const lm::ModelParameters& params,
                      std::span<const TokenId> prompt,
                      const SegmentAnnotation& response, ScoreMode mode,
                      double gamma);

/// log(1 + exp(-z)) without overflow for large |z|.
double log1p_exp_neg(double z);

/// -log sigmoid(beta * ((policy_chosen - reference_chosen) -
///                      (policy_rejected - reference_rejected)))
double preference_loss(double beta, double policy_chosen,
                       double reference_chosen, double policy_rejected,
                       double reference_rejected);

/// Preference loss of one pair with both responses scored by cfg.score_mode.
/// Throws NumericError when a score is not finite.
double ddpo_loss(const lm::ModelParameters& policy,
                 const lm::ModelParameters& reference,
                 const PreferencePair& pair, const DdpoConfig& cfg);

/// beta * (log pi(y|x) - log pi_ref(y|x)), i.e. the reward up to the
/// prompt-only term beta * log Z(x).
double implicit_reward(const lm::ModelParameters& policy,
                       const lm::ModelParameters& reference,
                       std::span<const TokenId> prompt,
                       std::span<const TokenId> response, double beta);

/// Same with both log-likelihoods replaced by the weighted score.
double implicit_reward_dense(const lm::ModelParameters& policy,
                             const lm::ModelParameters& reference,
                             std::span<const TokenId> prompt,
                             const SegmentAnnotation& response, double beta,
                             double gamma);

/// implicit_reward(chosen) - implicit_reward(rejected).
double reward_margin(const lm::ModelParameters& policy,
                     const lm::ModelParameters& reference,
                     const PreferencePair& pair, double beta);

/// (d score / d log p_c) / (d score / d log p_u) for a corrected token c and
/// an unchanged token u of the weighted score. Throws DomainError unless the
/// response holds both kinds of token.
double segment_gradient_ratio(const lm::ModelParameters& policy,
                              std::span<const TokenId> prompt,
                              const SegmentAnnotation& response, double gamma);

/// Mean preference loss over a pair set, as a function of the policy. The
/// reference scores are computed once at construction.
class PreferenceObjective final : public lm::ScalarObjective {
 public:
  PreferenceObjective(const lm::ModelParameters& reference,
                      std::span<const PreferencePair> pairs, double beta,
                      double gamma, ScoreMode mode);

  double value(const lm::ModelParameters& policy) const override;
  double value_and_gradient(const lm::ModelParameters& policy,
                            lm::ModelParameters& grad) const override;

  /// Mean over pairs[indices]; `grad` is overwritten.
  double batch_value_and_gradient(const lm::ModelParameters& policy,
                                  std::span<const std::size_t> indices,
                                  lm::ModelParameters& grad) const;

  std::size_t size() const { return pairs_.size(); }

 private:
  double pair_loss(const lm::ModelParameters& policy, std::size_t i,
                   lm::ModelParameters* grad, double scale) const;

  std::span<const PreferencePair> pairs_;
  double beta_;
  double gamma_;
  ScoreMode mode_;
  std::vector<ScoreWeights> chosen_weights_;
  std::vector<ScoreWeights> rejected_weights_;
  std::vector<double> reference_chosen_;
  std::vector<double> reference_rejected_;
};

struct DdpoEpoch {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  /// Mean reward_margin over all training pairs after the epoch.
  double mean_margin = 0.0;
};

struct DdpoResult {
  lm::ModelParameters policy;
  std::vector<DdpoEpoch> trace;
  /// Mean loss over all pairs before the first update.
  double initial_loss = 0.0;
};

/// Trains a copy of `reference` with mini-batch Adam on the mean preference
/// loss; `reference` is never modified. Throws TrainingDivergence with the
/// step index when the loss stops being finite.
DdpoResult train_ddpo(const lm::ModelParameters& reference,
                      std::span<const PreferencePair> pairs,
                      const DdpoConfig& cfg);

/// Mean reward_margin over a pair set.
double mean_reward_margin(const lm::ModelParameters& policy,
                          const lm::ModelParameters& reference,
                          std::span<const PreferencePair> pairs, double beta);

}  // namespace dpolab::ddpo
