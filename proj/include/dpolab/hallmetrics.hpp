#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dpolab/corpus.hpp"
#include "dpolab/tokens.hpp"

namespace dpolab::hallmetrics {

using corpus::HallucinationType;

/// Maps surface tokens (singular, plural, synonyms) to canonical object names.
class Lexicon {
 public:
  Lexicon() = default;
  /// Entries whose surface form is not in the vocabulary are ignored.
  Lexicon(const Vocabulary& vocab,
          std::span<const std::pair<std::string, std::string>> entries);

  /// Canonical name for a token, or nullptr when the token is no object.
  const std::string* lookup(TokenId token) const;
  std::size_t size() const { return canonical_.size(); }

 private:
  std::unordered_map<TokenId, std::string> canonical_;
};

struct Mention {
  std::string object;
  std::size_t position = 0;
  friend bool operator==(const Mention&, const Mention&) = default;
};

struct MentionSet {
  std::size_t response_id = 0;
  std::vector<Mention> mentions;
};

/// One mention per lexicon hit, in response order.
MentionSet extract_mentions(std::span<const TokenId> response,
                            const Lexicon& lexicon, std::size_t response_id = 0);

/// A generated response with the ground truth of its sample.
struct EvalRecord {
  TokenSequence prompt;
  TokenSequence response;
  std::vector<std::string> ground_truth_objects;
  std::string scene;
  /// Optional layout ground truth; enables number and position checks.
  std::map<std::string, int> ground_truth_counts;
  std::map<std::string, corpus::Cell> ground_truth_layout;
};

/// Grammar tokens used to read counts and relations out of a response.
struct ResponseGrammar {
  std::unordered_map<TokenId, int> numerals;  // "a" -> 1, "two" -> 2, ...
  std::unordered_map<TokenId, corpus::Relation> relations;

  /// Resolves the synthetic grammar words that exist in `vocab`.
  static ResponseGrammar from_vocabulary(const Vocabulary& vocab);
};

struct ResponseHallucinations {
  std::size_t mentions = 0;
  std::size_t false_mentions = 0;
  std::size_t position = 0;
  std::size_t number = 0;
  std::vector<std::string> false_objects;

  std::size_t total() const { return false_mentions + position + number; }
};

/// Scores one response. Number and position checks need a grammar and the
/// record's counts/layout; without them only object hallucinations count.
ResponseHallucinations score_response(const EvalRecord& record,
                                      const Lexicon& lexicon,
                                      const ResponseGrammar* grammar = nullptr);

struct HallucinationReport {
  /// Responses with a false mention / responses with any mention; unset when
  /// no response mentions an object.
  std::optional<double> response_level_rate;
  /// False mentions / all mentions; unset when there are no mentions.
  std::optional<double> mention_level_rate;
  std::map<HallucinationType, std::size_t> per_type_counts;
  std::size_t n_scored_responses = 0;
  std::size_t n_mentions = 0;
  std::size_t n_hallucinated_responses = 0;
  std::size_t n_false_mentions = 0;
  std::size_t n_responses = 0;
};

HallucinationReport hallucination_rates(std::span<const EvalRecord> corpus,
                                        const Lexicon& lexicon,
                                        const ResponseGrammar* grammar = nullptr);

struct SceneDelta {
  std::string scene;
  double h_all = 0.0;    // rate on the full corpus
  double h_scene = 0.0;  // rate on responses of the scene
  double delta = 0.0;    // h_scene - h_all
};

SceneDelta make_scene_delta(std::string scene, double h_all, double h_scene);
/// Mean delta; unset for an empty list.
std::optional<double> mean_delta(std::span<const SceneDelta> deltas);

struct SceneAnalysis {
  std::vector<SceneDelta> deltas;
  std::optional<double> delta_bar;
};

/// Over-generalization analysis. For each scene, the k most frequent
/// ground-truth objects of that scene are taken; the rate of an object is the
/// fraction of responses mentioning it in which it is absent from the ground
/// truth. H_a averages those per-object rates over the full corpus, H_s over
/// the scene's responses only; objects never mentioned in a subset are left
/// out of that subset's average. Scenes without responses, or without any
/// rated object, are skipped with a warning.
SceneAnalysis scene_analysis(std::span<const EvalRecord> corpus,
                             std::span<const std::string> scenes,
                             const Lexicon& lexicon, std::size_t k = 10);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Cumulative hallucination-count share against hallucinated-response share,
/// responses taken in descending count order.
class ConcentrationCurve {
 public:
  explicit ConcentrationCurve(std::vector<CurvePoint> points)
      : points_(std::move(points)) {}
  const std::vector<CurvePoint>& points() const { return points_; }
  /// Step interpolation: y of the last point with point.x <= x.
  double y_at(double x) const;

 private:
  std::vector<CurvePoint> points_;
};

/// Throws DomainError when no count is positive.
ConcentrationCurve concentration_curve(std::span<const std::size_t> counts);

/// Per-response totals from score_response, in corpus order.
std::vector<std::size_t> hallucination_counts(std::span<const EvalRecord> corpus,
                                              const Lexicon& lexicon,
                                              const ResponseGrammar* grammar = nullptr);

// --- files --------------------------------------------------------------------

/// Evaluation corpus JSONL: {"prompt", "response", "ground_truth_objects",
/// "scene"} plus the optional "ground_truth_counts" and "ground_truth_layout".
std::vector<EvalRecord> load_eval_corpus(const std::filesystem::path& path);
void save_eval_corpus(const std::filesystem::path& path,
                      std::span<const EvalRecord> corpus);

/// Report as JSON; undefined rates are written as null.
std::string report_json(const HallucinationReport& report);
std::string scene_csv(const SceneAnalysis& analysis);
std::string curve_csv(const ConcentrationCurve& curve);

}  // namespace dpolab::hallmetrics
