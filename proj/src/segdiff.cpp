#include "dpolab/segdiff.hpp"

#include <stdexcept>
#include <string>

namespace dpolab::segdiff {

std::vector<Segment> maximal_runs(std::span<const SegmentLabel> labels) {
  std::vector<Segment> runs;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i == labels.size() || labels[i] != labels[start]) {
      runs.push_back({start, i, labels[start]});
      start = i;
    }
  }
  return runs;
}

SegmentAnnotation::SegmentAnnotation(TokenSequence tokens,
                                     std::vector<SegmentLabel> labels)
    : tokens_(std::move(tokens)), labels_(std::move(labels)) {
  if (tokens_.size() != labels_.size()) {
    throw std::invalid_argument(
        "label count " + std::to_string(labels_.size()) +
        " does not match token count " + std::to_string(tokens_.size()));
  }
}

SegmentAnnotation SegmentAnnotation::unchanged(TokenSequence tokens) {
  std::vector<SegmentLabel> labels(tokens.size(), SegmentLabel::Unchanged);
  return SegmentAnnotation(std::move(tokens), std::move(labels));
}

SegmentCounts segment_counts(const SegmentAnnotation& annotation) {
  SegmentCounts counts;
  for (const auto& run : annotation.segments()) {
    if (run.label == SegmentLabel::Corrected) {
      counts.corrected_tokens += run.length();
      ++counts.corrected_segments;
    } else {
      counts.unchanged_tokens += run.length();
    }
  }
  return counts;
}

std::pair<SegmentAnnotation, SegmentAnnotation> diff_segments(
    const TokenSequence& flawed, const TokenSequence& corrected) {
  auto labels = align<TokenId>(flawed, corrected);
  return {SegmentAnnotation(flawed, std::move(labels.first)),
          SegmentAnnotation(corrected, std::move(labels.second))};
}

std::size_t count_edit_hunks(const SegmentAnnotation& flawed,
                             const SegmentAnnotation& corrected) {
  const auto& a = flawed.labels();
  const auto& b = corrected.labels();
  std::size_t hunks = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    bool edited = false;
    while (i < a.size() && a[i] == SegmentLabel::Corrected) {
      edited = true;
      ++i;
    }
    while (j < b.size() && b[j] == SegmentLabel::Corrected) {
      edited = true;
      ++j;
    }
    if (edited) ++hunks;
    // Both heads are now aligned tokens (or exhausted); step over the pair.
    if (i < a.size()) ++i;
    if (j < b.size()) ++j;
  }
  return hunks;
}

}  // namespace dpolab::segdiff
