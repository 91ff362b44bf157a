#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpolab/segdiff.hpp"
#include "dpolab/tokens.hpp"

namespace dpolab::corpus {

/// A scene category and the objects that may appear in it.
struct SceneSpec {
  std::string scene_name;
  /// Canonical object names, most frequent first by convention.
  std::vector<std::string> object_inventory;
  /// Probability that an object appears in a sample of this scene.
  std::map<std::string, double> cooccurrence_weights;

  /// Throws ConfigError on an empty inventory, duplicate objects, missing
  /// weights or weights outside [0, 1].
  void validate() const;
  double weight(const std::string& object) const;
};

/// Eight scenes over a shared pool of 47 everyday objects.
std::vector<SceneSpec> default_scenes();

enum class HallucinationType { Object, Position, Number };

std::string_view to_string(HallucinationType type);
/// Throws DataError for anything but "object", "position" or "number".
HallucinationType parse_hallucination_type(std::string_view text);

/// Relative frequency of each hallucination type among injections.
struct TypeWeights {
  double object = 0.412;
  double position = 0.203;
  double number = 0.165;
};

struct GenerationKnobs {
  double hallucination_rate = 0.6;
  double style_bias_rate = 0.2;
  double noise_rate = 0.3;
  std::uint64_t seed = 1;
  TypeWeights type_weights;

  void validate() const;
};

/// Grid cell on a 3x3 layout; x grows to the right, y grows downwards.
struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Relation { LeftOf, RightOf, Above, Below, Near };

std::string_view to_string(Relation relation);
std::optional<Relation> parse_relation(std::string_view text);
/// Whether "a <relation> b" is true for objects placed at cells a and b.
bool relation_holds(Relation relation, Cell a, Cell b);

struct SampleRecord {
  std::string scene;
  TokenSequence prompt;
  /// Sorted canonical names.
  std::vector<std::string> ground_truth_objects;
  std::map<std::string, int> ground_truth_counts;
  std::map<std::string, Cell> ground_truth_layout;
  TokenSequence flawed_response;
  TokenSequence corrected_response;
  /// One tag per injection, in injection order.
  std::vector<HallucinationType> hallucination_types;
  /// Objects added to the flawed response by object injections.
  std::vector<std::string> injected_objects;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

std::string plural_of(std::string_view object);

/// The closed vocabulary for a scene set: reserved tokens, grammar words,
/// scene names, object names and their plurals.
Vocabulary build_vocabulary(std::span<const SceneSpec> scenes);

/// (surface token, canonical object) for every singular and plural form.
std::vector<std::pair<std::string, std::string>> lexicon_entries(
    std::span<const SceneSpec> scenes);

/// Generates `n` samples. The output is a pure function of the inputs; token
/// ids refer to build_vocabulary(scenes).
std::vector<SampleRecord> generate_corpus(std::span<const SceneSpec> scenes,
                                          const GenerationKnobs& knobs,
                                          std::size_t n);

struct CorpusStats {
  double mean_words = 0.0;
  double mean_corrected_segments = 0.0;
};

/// Mean corrected-response length in tokens and mean number of edit sites
/// between flawed and corrected responses.
CorpusStats corpus_stats(std::span<const SampleRecord> records);

/// A prompt with a preferred (chosen) and dispreferred (rejected) response,
/// both carrying per-token segment labels.
struct PreferencePair {
  TokenSequence prompt;
  segdiff::SegmentAnnotation chosen;
  segdiff::SegmentAnnotation rejected;
  std::vector<HallucinationType> types;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// chosen = corrected response, rejected = flawed response, labels from the
/// LCS diff of the two.
PreferencePair make_pair(const SampleRecord& record);

/// Pairs from every record whose flawed and corrected responses differ.
std::vector<PreferencePair> make_pairs(std::span<const SampleRecord> records);

// --- file formats -----------------------------------------------------------

/// Preference-pair JSONL. Validates every line; errors carry the line number.
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);
std::vector<PreferencePair> parse_pairs(std::string_view text);
void save_pairs(const std::filesystem::path& path,
                std::span<const PreferencePair> pairs);
std::string format_pair(const PreferencePair& pair);

/// Full sample records as JSONL (superset of the evaluation schema).
std::vector<SampleRecord> load_records(const std::filesystem::path& path);
void save_records(const std::filesystem::path& path,
                  std::span<const SampleRecord> records);

/// Lexicon file: one "surface canonical" pair per line.
void save_lexicon(const std::filesystem::path& path,
                  std::span<const std::pair<std::string, std::string>> entries);
std::vector<std::pair<std::string, std::string>> load_lexicon(
    const std::filesystem::path& path);

}  // namespace dpolab::corpus
