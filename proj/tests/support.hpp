#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dpolab/corpus.hpp"
#include "dpolab/lm.hpp"
#include "dpolab/segdiff.hpp"

namespace dpolab::oracle {

/// Every parameter, biases included, uniform in [-scale, scale].
inline lm::ModelParameters random_model(const lm::ModelConfig& config,
                                        std::uint64_t seed, double scale = 0.5) {
  lm::ModelParameters p(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.values()) v = u(rng);
  return p;
}

inline TokenSequence random_tokens(std::mt19937_64& rng, std::size_t vocab,
                                   std::size_t min_len, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(vocab) - 1);
  TokenSequence out(len(rng));
  for (auto& t : out) t = tok(rng);
  return out;
}

inline segdiff::SegmentAnnotation random_annotation(std::mt19937_64& rng,
                                                    std::size_t vocab,
                                                    std::size_t max_len) {
  auto tokens = random_tokens(rng, vocab, 1, max_len);
  std::bernoulli_distribution corrected(0.4);
  std::vector<segdiff::SegmentLabel> labels(tokens.size());
  for (auto& l : labels) {
    l = corrected(rng) ? segdiff::SegmentLabel::Corrected : segdiff::SegmentLabel::Unchanged;
  }
  return {std::move(tokens), std::move(labels)};
}

inline corpus::PreferencePair random_pair(std::mt19937_64& rng, std::size_t vocab,
                                          std::size_t max_len = 6) {
  corpus::PreferencePair p;
  p.prompt = random_tokens(rng, vocab, 1, 4);
  p.chosen = random_annotation(rng, vocab, max_len);
  p.rejected = random_annotation(rng, vocab, max_len);
  return p;
}

/// Central finite-difference gradient of f at params.
template <typename F>
std::vector<double> numeric_gradient(const lm::ModelParameters& params, F&& f,
                                     double step = 1e-4) {
  lm::ModelParameters probe = params;
  std::vector<double> grad(params.values().size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double x = probe.values()[i];
    probe.values()[i] = x + step;
    const double plus = f(probe);
    probe.values()[i] = x - step;
    const double minus = f(probe);
    probe.values()[i] = x;
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

/// Entries smaller than this in both gradients are compared in absolute
/// terms; central differences cannot resolve them relatively.
inline constexpr double kGradientFloor = 1e-6;

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, kGradientFloor)
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), kGradientFloor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

/// Textbook prefix LCS length, independent of the library's suffix DP.
template <typename T>
std::size_t lcs_length(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1
                                     : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

}  // namespace dpolab::oracle
