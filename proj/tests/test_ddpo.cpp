#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dpolab/ddpo.hpp"
#include "dpolab/errors.hpp"
#include "support.hpp"

using namespace dpolab;
using namespace dpolab::ddpo;
using segdiff::SegmentAnnotation;

namespace {

constexpr auto U = SegmentLabel::Unchanged;
constexpr auto C = SegmentLabel::Corrected;
const lm::ModelConfig kSmall{12, 3, 4, 8};
const double kLn2 = std::numbers::ln2;

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(DdpoScore, ModesParseAndPrint) {
  for (auto m : {ScoreMode::Sum, ScoreMode::Mean, ScoreMode::Weighted}) {
    EXPECT_EQ(parse_score_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_score_mode("median"), ConfigError);
}

TEST(DdpoScore, WeightedArithmeticExample) {
  const std::vector<double> lp = {-1.0, -1.0, -2.0};
  const std::vector<SegmentLabel> labels = {U, U, C};
  EXPECT_NEAR(aggregate_score(lp, labels, ScoreMode::Weighted, 5.0), -12.0 / 7.0, 1e-15);
  EXPECT_NEAR(aggregate_score(lp, labels, ScoreMode::Sum, 5.0), -4.0, 1e-15);
  EXPECT_NEAR(aggregate_score(lp, labels, ScoreMode::Mean, 5.0), -4.0 / 3.0, 1e-15);
}

TEST(DdpoScore, WeightsAreExactCoefficients) {
  const std::vector<SegmentLabel> labels = {U, C, C, U};
  const auto w = score_weights(labels, ScoreMode::Weighted, 5.0);
  EXPECT_EQ(w.weights, (std::vector<double>{1, 5, 5, 1}));
  EXPECT_EQ(w.normalizer, 12.0);
  EXPECT_EQ(score_weights(labels, ScoreMode::Mean, 5.0).normalizer, 4.0);
  EXPECT_EQ(score_weights(labels, ScoreMode::Sum, 5.0).normalizer, 1.0);
  EXPECT_THROW(score_weights({}, ScoreMode::Weighted, 5.0), DomainError);
}

TEST(DdpoScore, AllUnchangedCollapsesToMean) {
  const auto p = oracle::random_model(kSmall, 1);
  const TokenSequence prompt = {1, 2};
  const auto ann = SegmentAnnotation::unchanged({3, 4, 5, 6});
  for (double gamma : {1.0, 2.0, 5.0, 10.0}) {
    EXPECT_NEAR(weighted_score(p, prompt, ann, gamma),
                lm::sequence_log_prob(p, prompt, ann.tokens()) / 4.0, 1e-14);
  }
}

TEST(DdpoScore, GammaOneIsMeanLogProbProperty) {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = oracle::random_model(kSmall, seed);
    const auto pair = oracle::random_pair(rng, 12);
    const auto lp = lm::token_log_probs(p, pair.prompt, pair.chosen.tokens());
    EXPECT_NEAR(weighted_score(p, pair.prompt, pair.chosen, 1.0), mean(lp), 1e-12);
  }
}

TEST(DdpoScore, ReplicationLeavesFormulaUnchanged) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5.0, 0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ann = oracle::random_annotation(rng, 12, 8);
    std::vector<double> lp(ann.size());
    for (auto& v : lp) v = u(rng);
    const std::vector<SegmentLabel> labels(ann.labels().begin(), ann.labels().end());
    std::vector<double> lp3;
    std::vector<SegmentLabel> labels3;
    for (int m = 0; m < 3; ++m) {
      lp3.insert(lp3.end(), lp.begin(), lp.end());
      labels3.insert(labels3.end(), labels.begin(), labels.end());
    }
    EXPECT_NEAR(aggregate_score(lp, labels, ScoreMode::Weighted, 5.0),
                aggregate_score(lp3, labels3, ScoreMode::Weighted, 5.0), 1e-12);
  }
}

TEST(DdpoScore, Preconditions) {
  const auto p = oracle::random_model(kSmall, 1);
  EXPECT_THROW(weighted_score(p, TokenSequence{1}, SegmentAnnotation({}, {}), 5.0),
               DomainError);
  EXPECT_THROW(weighted_score(p, TokenSequence{1}, SegmentAnnotation::unchanged({3}), 0.5),
               DomainError);
}

TEST(DdpoLoss, StableLogistic) {
  EXPECT_NEAR(log1p_exp_neg(0.0), kLn2, 1e-16);
  EXPECT_NEAR(log1p_exp_neg(800.0), 0.0, 1e-300);
  EXPECT_NEAR(log1p_exp_neg(-800.0), 800.0, 1e-9);
  EXPECT_NEAR(log1p_exp_neg(1.5), std::log1p(std::exp(-1.5)), 1e-16);
  EXPECT_NEAR(log1p_exp_neg(-1.5), std::log1p(std::exp(1.5)), 1e-15);
}

TEST(DdpoLoss, ArithmeticExample) {
  EXPECT_NEAR(preference_loss(0.5, 0.4, 0.0, -0.4, 0.0), 0.513015, 5e-7);
  EXPECT_NEAR(preference_loss(0.5, 0.4, 0.0, -0.4, 0.0), log1p_exp_neg(0.4), 1e-16);
}

TEST(DdpoLoss, BetaToZeroIsLn2) {
  EXPECT_NEAR(preference_loss(1e-12, 3.0, -1.0, -2.0, 4.0), kLn2, 1e-11);
}

TEST(DdpoLoss, IdenticalModelsGiveLn2Property) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> beta(0.01, 5.0);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto p = oracle::random_model(kSmall, seed);
    const auto pair = oracle::random_pair(rng, 12);
    DdpoConfig cfg;
    cfg.beta = beta(rng);
    for (auto mode : {ScoreMode::Sum, ScoreMode::Mean, ScoreMode::Weighted}) {
      cfg.score_mode = mode;
      EXPECT_NEAR(ddpo_loss(p, p, pair, cfg), kLn2, 1e-12);
    }
  }
}

TEST(DdpoLoss, GammaOneEqualsMeanModeDpoProperty) {
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto policy = oracle::random_model(kSmall, seed);
    const auto reference = oracle::random_model(kSmall, seed + 1000);
    const auto pair = oracle::random_pair(rng, 12);
    DdpoConfig weighted;
    weighted.gamma = 1.0;
    DdpoConfig mean_mode = weighted;
    mean_mode.score_mode = ScoreMode::Mean;
    const double loss = ddpo_loss(policy, reference, pair, weighted);
    EXPECT_GT(loss, 0.0);
    EXPECT_NEAR(loss, ddpo_loss(policy, reference, pair, mean_mode), 1e-12);
  }
}

TEST(DdpoReward, Basics) {
  const auto p = oracle::random_model(kSmall, 1);
  const auto r = oracle::random_model(kSmall, 2);
  const TokenSequence prompt = {1};
  const TokenSequence y = {3, 4, 5};
  EXPECT_EQ(implicit_reward(p, p, prompt, y, 0.5), 0.0);
  EXPECT_NEAR(implicit_reward(p, r, prompt, y, 1.0), 2.0 * implicit_reward(p, r, prompt, y, 0.5),
              1e-14);
  EXPECT_NEAR(implicit_reward(p, r, prompt, y, 0.5),
              0.5 * (lm::sequence_log_prob(p, prompt, y) - lm::sequence_log_prob(r, prompt, y)),
              1e-14);
  const auto ann = SegmentAnnotation::unchanged(y);
  EXPECT_NEAR(implicit_reward_dense(p, r, prompt, ann, 0.5, 5.0),
              implicit_reward(p, r, prompt, y, 0.5) / 3.0, 1e-14);
}

TEST(DdpoReward, HandSetLogRatio) {
  // Reference uniform over two tokens; the policy puts 0.5 * e^0.3 on token 0,
  // so log pi - log pi_ref = 0.3 exactly.
  lm::ModelParameters reference({2, 1, 1, 1});
  lm::ModelParameters policy = reference;
  const double p0 = 0.5 * std::exp(0.3);
  policy.output_bias()[0] = std::log(p0 / (1.0 - p0));
  EXPECT_NEAR(implicit_reward(policy, reference, TokenSequence{}, TokenSequence{0}, 0.5), 0.15,
              1e-14);
}

TEST(DdpoGradientRatio, EqualsGammaExactly) {
  std::mt19937_64 rng(9);
  for (double gamma : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = oracle::random_model(kSmall, seed);
      auto ann = oracle::random_annotation(rng, 12, 8);
      std::vector<SegmentLabel> labels(ann.labels().begin(), ann.labels().end());
      labels.push_back(U);
      labels.push_back(C);
      TokenSequence tokens = ann.tokens();
      tokens.push_back(3);
      tokens.push_back(4);
      const SegmentAnnotation y(tokens, labels);
      EXPECT_EQ(segment_gradient_ratio(p, TokenSequence{1}, y, gamma), gamma);
    }
  }
}

TEST(DdpoGradientRatio, DegenerateLabelingIsDomainError) {
  const auto p = oracle::random_model(kSmall, 1);
  EXPECT_THROW(segment_gradient_ratio(p, TokenSequence{1},
                                      SegmentAnnotation::unchanged({3, 4}), 5.0),
               DomainError);
  EXPECT_THROW(segment_gradient_ratio(p, TokenSequence{1}, SegmentAnnotation({3, 4}, {C, C}),
                                      5.0),
               DomainError);
}

TEST(DdpoGradient, MatchesFiniteDifferencesProperty) {
  for (auto mode : {ScoreMode::Sum, ScoreMode::Mean, ScoreMode::Weighted}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<PreferencePair> pairs;
      for (int i = 0; i < 3; ++i) pairs.push_back(oracle::random_pair(rng, 12));
      const auto reference = oracle::random_model(kSmall, 500 + seed);
      const auto policy = oracle::random_model(kSmall, 900 + seed);
      const PreferenceObjective objective(reference, pairs, 0.5, 5.0, mode);
      const auto analytic = lm::grad_scalar(policy, objective);
      const auto numeric = oracle::numeric_gradient(
          policy, [&](const lm::ModelParameters& q) { return objective.value(q); });
      EXPECT_LT(oracle::max_relative_error(analytic.values(), numeric), 1e-4)
          << to_string(mode) << " seed " << seed;
    }
  }
}

TEST(DdpoObjective, ValueIsMeanPairLoss) {
  std::mt19937_64 rng(2);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(oracle::random_pair(rng, 12));
  const auto reference = oracle::random_model(kSmall, 1);
  const auto policy = oracle::random_model(kSmall, 2);
  DdpoConfig cfg;
  const PreferenceObjective objective(reference, pairs, cfg.beta, cfg.gamma, cfg.score_mode);
  double total = 0.0;
  for (const auto& p : pairs) total += ddpo_loss(policy, reference, p, cfg);
  EXPECT_NEAR(objective.value(policy), total / 4.0, 1e-14);
  EXPECT_NEAR(objective.value(reference), kLn2, 1e-14);
}

TEST(DdpoTrain, ZeroEpochsKeepsReference) {
  std::mt19937_64 rng(1);
  std::vector<PreferencePair> pairs = {oracle::random_pair(rng, 12)};
  const auto reference = oracle::random_model(kSmall, 3);
  DdpoConfig cfg;
  cfg.epochs = 0;
  const auto result = train_ddpo(reference, pairs, cfg);
  EXPECT_TRUE(result.policy.bitwise_equal(reference));
  EXPECT_TRUE(result.trace.empty());
  EXPECT_NEAR(result.initial_loss, kLn2, 1e-9);
}

TEST(DdpoTrain, SinglePairMarginTurnsPositive) {
  const auto reference = lm::initialize_parameters(kSmall, 4);
  const PreferencePair pair{{1, 7},
                            SegmentAnnotation({3, 4, 5, 2}, {U, C, U, U}),
                            SegmentAnnotation({3, 6, 5, 2}, {U, C, U, U}),
                            {}};
  const std::vector<PreferencePair> pairs = {pair};
  DdpoConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  const auto copy = reference;
  const auto result = train_ddpo(reference, pairs, cfg);
  EXPECT_GT(reward_margin(result.policy, reference, pair, cfg.beta), 0.0);
  EXPECT_TRUE(reference.bitwise_equal(copy));
  ASSERT_EQ(result.trace.size(), 50u);
  EXPECT_EQ(result.trace.front().epoch, 1u);
  for (const auto& e : result.trace) EXPECT_TRUE(std::isfinite(e.mean_loss));
  EXPECT_LT(result.trace.back().mean_loss, kLn2);
}

TEST(DdpoTrain, DeterministicGivenSeed) {
  std::mt19937_64 rng(12);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10; ++i) pairs.push_back(oracle::random_pair(rng, 12));
  const auto reference = oracle::random_model(kSmall, 5, 0.1);
  DdpoConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const auto a = train_ddpo(reference, pairs, cfg);
  const auto b = train_ddpo(reference, pairs, cfg);
  EXPECT_TRUE(a.policy.bitwise_equal(b.policy));
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].mean_loss, b.trace[i].mean_loss);
    EXPECT_EQ(a.trace[i].mean_margin, b.trace[i].mean_margin);
  }
}

TEST(DdpoTrain, DivergenceReportsStep) {
  std::mt19937_64 rng(1);
  std::vector<PreferencePair> pairs = {oracle::random_pair(rng, 12)};
  auto reference = oracle::random_model(kSmall, 3);
  reference.output_bias()[0] = std::numeric_limits<double>::infinity();
  DdpoConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_ddpo(reference, pairs, cfg), NumericError);
}

TEST(DdpoConfigTest, Validation) {
  DdpoConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.beta = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = 0.99;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = 1.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
