#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dpolab/tokens.hpp"

namespace dpolab::segdiff {

enum class SegmentLabel : std::uint8_t { Unchanged = 0, Corrected = 1 };

/// Half-open token range [start, end) with a uniform label.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  SegmentLabel label = SegmentLabel::Unchanged;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Maximal runs of equal labels, in order, covering the whole input.
std::vector<Segment> maximal_runs(std::span<const SegmentLabel> labels);

/// A response with one unchanged/corrected flag per token.
///
/// Corrected tokens are the ones a correction touched: on a flawed response
/// they were removed or replaced, on a corrected response they were inserted.
class SegmentAnnotation {
 public:
  SegmentAnnotation() = default;
  /// Throws std::invalid_argument when the label count differs from the
  /// token count.
  SegmentAnnotation(TokenSequence tokens, std::vector<SegmentLabel> labels);

  /// All tokens labeled unchanged.
  static SegmentAnnotation unchanged(TokenSequence tokens);

  const TokenSequence& tokens() const { return tokens_; }
  const std::vector<SegmentLabel>& labels() const { return labels_; }
  std::vector<Segment> segments() const { return maximal_runs(labels_); }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  friend bool operator==(const SegmentAnnotation&,
                         const SegmentAnnotation&) = default;

 private:
  TokenSequence tokens_;
  std::vector<SegmentLabel> labels_;
};

struct SegmentCounts {
  std::size_t unchanged_tokens = 0;
  std::size_t corrected_tokens = 0;
  std::size_t corrected_segments = 0;

  friend bool operator==(const SegmentCounts&, const SegmentCounts&) = default;
};

SegmentCounts segment_counts(const SegmentAnnotation& annotation);

/// Per-side labels of a longest-common-subsequence alignment.
struct AlignmentLabels {
  std::vector<SegmentLabel> first;
  std::vector<SegmentLabel> second;
};

/// Token-level LCS alignment. Ties prefer the leftmost match: when the
/// current heads are equal they are matched, otherwise the side whose
/// removal keeps the longer remaining LCS is advanced, deleting from `first`
/// when both are equally good.
template <typename T>
AlignmentLabels align(std::span<const T> first, std::span<const T> second) {
  const std::size_t n = first.size();
  const std::size_t m = second.size();
  // suffix[i][j] = LCS length of first[i:] and second[j:]
  std::vector<std::uint32_t> suffix((n + 1) * (m + 1), 0);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      suffix[at(i, j)] = first[i] == second[j]
                             ? suffix[at(i + 1, j + 1)] + 1
                             : std::max(suffix[at(i + 1, j)],
                                        suffix[at(i, j + 1)]);
    }
  }

  AlignmentLabels out{std::vector<SegmentLabel>(n, SegmentLabel::Corrected),
                      std::vector<SegmentLabel>(m, SegmentLabel::Corrected)};
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    if (first[i] == second[j]) {
      out.first[i++] = SegmentLabel::Unchanged;
      out.second[j++] = SegmentLabel::Unchanged;
    } else if (suffix[at(i + 1, j)] >= suffix[at(i, j + 1)]) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

/// Labels a (flawed, corrected) response pair. Total function.
std::pair<SegmentAnnotation, SegmentAnnotation> diff_segments(
    const TokenSequence& flawed, const TokenSequence& corrected);

/// Number of edit sites: gaps between consecutive aligned (unchanged) tokens
/// in which either side holds corrected tokens. A replacement counts once.
std::size_t count_edit_hunks(const SegmentAnnotation& flawed,
                             const SegmentAnnotation& corrected);

}  // namespace dpolab::segdiff
