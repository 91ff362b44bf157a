#include "dpolab/ddpo.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "dpolab/errors.hpp"
#include "dpolab/rng.hpp"

namespace dpolab::ddpo {
namespace {

// sigma(-z), the magnitude of d/dz log(1 + exp(-z)).
double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

double dot_score(std::span<const double> log_probs, const ScoreWeights& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) acc += w.weights[i] * log_probs[i];
  return acc / w.normalizer;
}

void check_gamma(double gamma) {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) {
    throw DomainError("gamma must be a finite value >= 1");
  }
}

}  // namespace

std::string_view to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Sum: return "sum";
    case ScoreMode::Mean: return "mean";
    case ScoreMode::Weighted: return "weighted";
  }
  return "weighted";
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "sum") return ScoreMode::Sum;
  if (text == "mean") return ScoreMode::Mean;
  if (text == "weighted") return ScoreMode::Weighted;
  throw ConfigError("unknown score mode '" + std::string(text) + "'");
}

void DdpoConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("warmup fraction must lie in [0, 1]");
  }
}

ScoreWeights score_weights(std::span<const SegmentLabel> labels, ScoreMode mode,
                           double gamma) {
  if (labels.empty()) throw DomainError("cannot score an empty response");
  ScoreWeights w{std::vector<double>(labels.size(), 1.0), 1.0};
  switch (mode) {
    case ScoreMode::Sum:
      break;
    case ScoreMode::Mean:
      w.normalizer = static_cast<double>(labels.size());
      break;
    case ScoreMode::Weighted: {
      check_gamma(gamma);
      double unchanged = 0.0;
      double corrected = 0.0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == SegmentLabel::Corrected) {
          w.weights[i] = gamma;
          corrected += 1.0;
        } else {
          unchanged += 1.0;
        }
      }
      w.normalizer = unchanged + gamma * corrected;
      break;
    }
  }
  return w;
}

double aggregate_score(std::span<const double> log_probs,
                       std::span<const SegmentLabel> labels, ScoreMode mode,
                       double gamma) {
  if (log_probs.size() != labels.size()) {
    throw DomainError("one label per token log-probability is required");
  }
  return dot_score(log_probs, score_weights(labels, mode, gamma));
}

double response_score(const lm::ModelParameters& params,
                      std::span<const TokenId> prompt,
                      const SegmentAnnotation& response, ScoreMode mode,
                      double gamma) {
  if (response.empty()) throw DomainError("cannot score an empty response");
  const auto lp = lm::token_log_probs(params, prompt, response.tokens());
  return aggregate_score(lp, response.labels(), mode, gamma);
}

double weighted_score(const lm::ModelParameters& params,
                      std::span<const TokenId> prompt,
                      const SegmentAnnotation& response, double gamma) {
  check_gamma(gamma);
  return response_score(params, prompt, response, ScoreMode::Weighted, gamma);
}

double log1p_exp_neg(double z) {
  if (z >= 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double preference_loss(double beta, double policy_chosen,
                       double reference_chosen, double policy_rejected,
                       double reference_rejected) {
  const double z = beta * ((policy_chosen - reference_chosen) -
                           (policy_rejected - reference_rejected));
  return log1p_exp_neg(z);
}

double ddpo_loss(const lm::ModelParameters& policy,
                 const lm::ModelParameters& reference,
                 const PreferencePair& pair, const DdpoConfig& cfg) {
  if (!(policy.config() == reference.config())) {
    throw DomainError("policy and reference configurations differ");
  }
  auto score = [&](const lm::ModelParameters& m, const SegmentAnnotation& y) {
    return response_score(m, pair.prompt, y, cfg.score_mode, cfg.gamma);
  };
  const double pw = score(policy, pair.chosen);
  const double rw = score(reference, pair.chosen);
  const double pl = score(policy, pair.rejected);
  const double rl = score(reference, pair.rejected);
  if (!std::isfinite(pw) || !std::isfinite(rw) || !std::isfinite(pl) ||
      !std::isfinite(rl)) {
    throw NumericError("non-finite response score for pair with a " +
                       std::to_string(pair.prompt.size()) + "-token prompt");
  }
  return preference_loss(cfg.beta, pw, rw, pl, rl);
}

double implicit_reward(const lm::ModelParameters& policy,
                       const lm::ModelParameters& reference,
                       std::span<const TokenId> prompt,
                       std::span<const TokenId> response, double beta) {
  return beta * (lm::sequence_log_prob(policy, prompt, response) -
                 lm::sequence_log_prob(reference, prompt, response));
}

double implicit_reward_dense(const lm::ModelParameters& policy,
                             const lm::ModelParameters& reference,
                             std::span<const TokenId> prompt,
                             const SegmentAnnotation& response, double beta,
                             double gamma) {
  return beta * (weighted_score(policy, prompt, response, gamma) -
                 weighted_score(reference, prompt, response, gamma));
}

double reward_margin(const lm::ModelParameters& policy,
                     const lm::ModelParameters& reference,
                     const PreferencePair& pair, double beta) {
  return implicit_reward(policy, reference, pair.prompt, pair.chosen.tokens(), beta) -
         implicit_reward(policy, reference, pair.prompt, pair.rejected.tokens(), beta);
}

double mean_reward_margin(const lm::ModelParameters& policy,
                          const lm::ModelParameters& reference,
                          std::span<const PreferencePair> pairs, double beta) {
  if (pairs.empty()) throw DomainError("no pairs to average over");
  double total = 0.0;
  for (const auto& p : pairs) total += reward_margin(policy, reference, p, beta);
  return total / static_cast<double>(pairs.size());
}

double segment_gradient_ratio(const lm::ModelParameters& policy,
                              std::span<const TokenId> prompt,
                              const SegmentAnnotation& response, double gamma) {
  const auto& labels = response.labels();
  const auto corrected =
      std::find(labels.begin(), labels.end(), SegmentLabel::Corrected);
  const auto unchanged =
      std::find(labels.begin(), labels.end(), SegmentLabel::Unchanged);
  if (corrected == labels.end() || unchanged == labels.end()) {
    throw DomainError(
        "gradient ratio needs at least one corrected and one unchanged token");
  }
  // The score must be defined for this input.
  weighted_score(policy, prompt, response, gamma);
  const ScoreWeights w = score_weights(labels, ScoreMode::Weighted, gamma);
  // d score / d log p_i = weights[i] / normalizer; the normalizer cancels.
  return w.weights[static_cast<std::size_t>(corrected - labels.begin())] /
         w.weights[static_cast<std::size_t>(unchanged - labels.begin())];
}

PreferenceObjective::PreferenceObjective(const lm::ModelParameters& reference,
                                         std::span<const PreferencePair> pairs,
                                         double beta, double gamma,
                                         ScoreMode mode)
    : pairs_(pairs), beta_(beta), gamma_(gamma), mode_(mode) {
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  chosen_weights_.reserve(pairs.size());
  rejected_weights_.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    chosen_weights_.push_back(score_weights(p.chosen.labels(), mode, gamma));
    rejected_weights_.push_back(score_weights(p.rejected.labels(), mode, gamma));
    reference_chosen_.push_back(dot_score(
        lm::token_log_probs(reference, p.prompt, p.chosen.tokens()),
        chosen_weights_.back()));
    reference_rejected_.push_back(dot_score(
        lm::token_log_probs(reference, p.prompt, p.rejected.tokens()),
        rejected_weights_.back()));
    if (!std::isfinite(reference_chosen_.back()) ||
        !std::isfinite(reference_rejected_.back())) {
      throw NumericError("non-finite reference score for pair #" + std::to_string(i));
    }
  }
}

double PreferenceObjective::pair_loss(const lm::ModelParameters& policy,
                                      std::size_t i, lm::ModelParameters* grad,
                                      double scale) const {
  const auto& p = pairs_[i];
  const auto lw = lm::token_log_probs(policy, p.prompt, p.chosen.tokens());
  const auto ll = lm::token_log_probs(policy, p.prompt, p.rejected.tokens());
  const double sw = dot_score(lw, chosen_weights_[i]);
  const double sl = dot_score(ll, rejected_weights_[i]);
  if (!std::isfinite(sw) || !std::isfinite(sl)) {
    throw NumericError("non-finite policy score for pair #" + std::to_string(i));
  }
  const double z = beta_ * ((sw - reference_chosen_[i]) - (sl - reference_rejected_[i]));
  const double loss = log1p_exp_neg(z);
  if (grad != nullptr) {
    // dL/dz = -sigma(-z); dz/dlogp = +-beta * w_i / N.
    const double dz = -sigmoid_neg(z) * beta_ * scale;
    auto coefficients = [&](const ScoreWeights& w, double sign) {
      std::vector<double> c(w.weights.size());
      for (std::size_t t = 0; t < c.size(); ++t) {
        c[t] = sign * dz * w.weights[t] / w.normalizer;
      }
      return c;
    };
    lm::accumulate_log_prob_gradient(policy, p.prompt, p.chosen.tokens(),
                                     coefficients(chosen_weights_[i], 1.0), *grad);
    lm::accumulate_log_prob_gradient(policy, p.prompt, p.rejected.tokens(),
                                     coefficients(rejected_weights_[i], -1.0),
                                     *grad);
  }
  return loss;
}

double PreferenceObjective::value(const lm::ModelParameters& policy) const {
  if (pairs_.empty()) throw DomainError("preference objective over zero pairs");
  double total = 0.0;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    total += pair_loss(policy, i, nullptr, 0.0);
  }
  return total / static_cast<double>(pairs_.size());
}

double PreferenceObjective::value_and_gradient(const lm::ModelParameters& policy,
                                               lm::ModelParameters& grad) const {
  std::vector<std::size_t> all(pairs_.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return batch_value_and_gradient(policy, all, grad);
}

double PreferenceObjective::batch_value_and_gradient(
    const lm::ModelParameters& policy, std::span<const std::size_t> indices,
    lm::ModelParameters& grad) const {
  if (indices.empty()) throw DomainError("preference objective over zero pairs");
  grad = lm::ModelParameters(policy.config());
  const double scale = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) total += pair_loss(policy, i, &grad, scale);
  return total * scale;
}

DdpoResult train_ddpo(const lm::ModelParameters& reference,
                      std::span<const PreferencePair> pairs,
                      const DdpoConfig& cfg) {
  if (pairs.empty()) throw DomainError("train_ddpo needs at least one pair");
  cfg.validate();

  std::size_t no_op = 0;
  for (const auto& p : pairs) {
    if (segdiff::segment_counts(p.rejected).corrected_tokens == 0) ++no_op;
  }
  if (no_op > 0) {
    std::cerr << "warning: " << no_op
              << " pair(s) have no corrected tokens in the rejected response\n";
  }

  const PreferenceObjective objective(reference, pairs, cfg.beta, cfg.gamma,
                                      cfg.score_mode);
  DdpoResult result{reference, {}, objective.value(reference)};
  lm::ModelParameters& policy = result.policy;
  lm::AdamOptimizer adam(policy.config());

  const std::size_t n = pairs.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  std::vector<std::size_t> order(n);
  lm::ModelParameters grad(policy.config());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, "ddpo-shuffle", epoch));
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const double loss = objective.batch_value_and_gradient(policy, batch, grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw TrainingDivergence(step, "non-finite preference loss");
      }
      epoch_loss += loss;
      adam.step(policy, grad,
                lm::warmup_learning_rate(cfg.learning_rate, step, total_steps,
                                         cfg.warmup_fraction));
      ++step;
    }
    result.trace.push_back({epoch + 1, epoch_loss / static_cast<double>(batches),
                            mean_reward_margin(policy, reference, pairs, cfg.beta)});
  }
  return result;
}

}  // namespace dpolab::ddpo
