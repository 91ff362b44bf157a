#include "dpolab/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "dpolab/errors.hpp"
#include "dpolab/rng.hpp"
#include "jsonl.hpp"

namespace dpolab::corpus {
namespace {

using detail::json;
using segdiff::SegmentAnnotation;
using segdiff::SegmentLabel;

SceneSpec make_scene(std::string name,
                     std::initializer_list<std::pair<const char*, double>> objs) {
  SceneSpec scene;
  scene.scene_name = std::move(name);
  for (const auto& [obj, w] : objs) {
    scene.object_inventory.emplace_back(obj);
    scene.cooccurrence_weights[obj] = w;
  }
  return scene;
}

// Prompt templates; "@" is replaced by the scene token.
const std::array<std::vector<std::string_view>, 4> kPromptTemplates = {{
    {"describe", "the", "@", "."},
    {"what", "is", "in", "the", "@", "?"},
    {"list", "the", "objects", "in", "the", "@", "."},
    {"tell", "me", "about", "the", "@", "."},
}};

struct Item {
  std::string object;
  int count = 1;
  bool injected = false;
  bool renumbered = false;
};

struct RelationClause {
  std::string first;
  Relation relation = Relation::LeftOf;
  std::string second;
  bool swapped = false;
};

// Structured description; rendered to tokens only at the end so that the
// flawed and corrected versions share every unaffected token.
struct Description {
  std::vector<Item> items;
  std::optional<RelationClause> relation;
  std::array<std::optional<std::string>, 3> markers;
};

Relation opposite(Relation r) {
  switch (r) {
    case Relation::LeftOf: return Relation::RightOf;
    case Relation::RightOf: return Relation::LeftOf;
    case Relation::Above: return Relation::Below;
    case Relation::Below: return Relation::Above;
    case Relation::Near: return Relation::LeftOf;
  }
  return r;
}

Relation relation_between(Cell a, Cell b) {
  if (a.x < b.x) return Relation::LeftOf;
  if (a.x > b.x) return Relation::RightOf;
  if (a.y < b.y) return Relation::Above;
  if (a.y > b.y) return Relation::Below;
  return Relation::Near;
}

TokenSequence render(const Description& d, const std::string& scene,
                     const Vocabulary& vocab) {
  TokenSequence out;
  auto put = [&](std::string_view w) { out.push_back(vocab.id(w)); };
  if (d.markers[0]) put(*d.markers[0]);
  put(words::kThe);
  put(scene);
  put(words::kContains);
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    if (i == 1 && d.relation) {
      if (d.markers[2]) put(*d.markers[2]);
      put(to_string(d.relation->relation));
    } else if (i > 0) {
      put(words::kAnd);
    }
    const Item& item = d.items[i];
    if (item.count == 1) {
      put(words::kA);
      put(item.object);
    } else {
      put(words::kNumerals[static_cast<std::size_t>(item.count - 1)]);
      put(plural_of(item.object));
    }
  }
  if (d.markers[1]) put(*d.markers[1]);
  put(words::kPeriod);
  out.push_back(kEosId);
  return out;
}

std::size_t pick_weighted(Rng& rng, std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total <= 0.0) return rng.below(weights.size());
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding left u just past the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

int draw_count(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.60) return 1;
  if (u < 0.85) return 2;
  if (u < 0.95) return 3;
  if (u < 0.98) return 4;
  return 5;
}

// Applies one hallucination of the requested type. Returns false when the
// description offers no slot for it.
bool inject(HallucinationType type, Description& flawed, const SceneSpec& scene,
            const std::set<std::string>& truth, SampleRecord& record, Rng& rng) {
  switch (type) {
    case HallucinationType::Object: {
      std::vector<std::string> candidates;
      std::vector<double> weights;
      for (const auto& obj : scene.object_inventory) {
        if (truth.count(obj) > 0) continue;
        if (std::find(record.injected_objects.begin(),
                      record.injected_objects.end(),
                      obj) != record.injected_objects.end()) {
          continue;
        }
        candidates.push_back(obj);
        weights.push_back(scene.weight(obj));
      }
      if (candidates.empty()) return false;
      const std::string& obj = candidates[pick_weighted(rng, weights)];
      // The relation links the first two items, so insertions go after them.
      auto from = flawed.items.begin() +
                  (flawed.relation ? std::min<std::ptrdiff_t>(
                                         2, std::ssize(flawed.items))
                                   : 0);
      auto at = std::find_if(from, flawed.items.end(),
                             [&](const Item& item) { return obj < item.object; });
      flawed.items.insert(at, Item{obj, 1, true, false});
      record.injected_objects.push_back(obj);
      return true;
    }
    case HallucinationType::Position: {
      if (!flawed.relation || flawed.relation->swapped) return false;
      flawed.relation->relation = opposite(flawed.relation->relation);
      flawed.relation->swapped = true;
      return true;
    }
    case HallucinationType::Number: {
      std::vector<std::size_t> slots;
      for (std::size_t i = 0; i < flawed.items.size(); ++i) {
        if (!flawed.items[i].injected && !flawed.items[i].renumbered) {
          slots.push_back(i);
        }
      }
      if (slots.empty()) return false;
      Item& item = flawed.items[slots[rng.below(slots.size())]];
      int count = static_cast<int>(rng.below(4)) + 1;  // one of four others
      if (count >= item.count) ++count;
      item.count = count;
      item.renumbered = true;
      return true;
    }
  }
  return false;
}

std::vector<int> ids_of(const TokenSequence& seq) {
  return std::vector<int>(seq.begin(), seq.end());
}

TokenSequence tokens_from(const json& j, const char* name, std::size_t line) {
  const json& arr = detail::field(j, name, line);
  if (!arr.is_array()) {
    throw ParseError(line, std::string("field '") + name + "' must be an array");
  }
  TokenSequence out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) {
      throw ParseError(line, std::string("field '") + name +
                                 "' must hold integer token ids");
    }
    const auto id = v.get<std::int64_t>();
    if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
      throw SchemaError(line, std::string("negative or oversized token id in '") +
                                  name + "'");
    }
    out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

std::vector<SegmentLabel> labels_from(const json& j, const char* name,
                                      std::size_t line) {
  const json& arr = detail::field(j, name, line);
  if (!arr.is_array()) {
    throw ParseError(line, std::string("field '") + name + "' must be an array");
  }
  std::vector<SegmentLabel> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
      throw SchemaError(line, std::string("field '") + name +
                                  "' must hold 0 or 1 per token");
    }
    out.push_back(v.get<int>() == 1 ? SegmentLabel::Corrected
                                    : SegmentLabel::Unchanged);
  }
  return out;
}

std::vector<int> label_ints(const SegmentAnnotation& a) {
  std::vector<int> out;
  out.reserve(a.size());
  for (auto l : a.labels()) out.push_back(l == SegmentLabel::Corrected ? 1 : 0);
  return out;
}

std::vector<HallucinationType> types_from(const json& j, std::size_t line) {
  std::vector<HallucinationType> out;
  auto it = j.find("types");
  if (it == j.end()) return out;
  if (!it->is_array()) throw ParseError(line, "field 'types' must be an array");
  for (const auto& v : *it) {
    if (!v.is_string()) throw ParseError(line, "types must be strings");
    try {
      out.push_back(parse_hallucination_type(v.get<std::string>()));
    } catch (const DataError& e) {
      throw SchemaError(line, e.what());
    }
  }
  return out;
}

json types_json(std::span<const HallucinationType> types) {
  json arr = json::array();
  for (auto t : types) arr.push_back(std::string(to_string(t)));
  return arr;
}

}  // namespace

void SceneSpec::validate() const {
  if (object_inventory.empty()) {
    throw ConfigError("scene '" + scene_name + "' has an empty inventory");
  }
  std::set<std::string> seen;
  for (const auto& obj : object_inventory) {
    if (!seen.insert(obj).second) {
      throw ConfigError("scene '" + scene_name + "' lists '" + obj + "' twice");
    }
    auto it = cooccurrence_weights.find(obj);
    if (it == cooccurrence_weights.end()) {
      throw ConfigError("scene '" + scene_name + "' has no weight for '" + obj +
                        "'");
    }
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw ConfigError("scene '" + scene_name + "' weight for '" + obj +
                        "' outside [0, 1]");
    }
  }
}

double SceneSpec::weight(const std::string& object) const {
  auto it = cooccurrence_weights.find(object);
  return it == cooccurrence_weights.end() ? 0.0 : it->second;
}

std::vector<SceneSpec> default_scenes() {
  return {
      make_scene("living_room", {{"couch", .8}, {"tv", .7}, {"chair", .6},
                                 {"book", .5}, {"person", .5}, {"remote", .4},
                                 {"lamp", .4}, {"vase", .3}, {"clock", .3},
                                 {"cat", .2}}),
      make_scene("kitchen", {{"sink", .8}, {"oven", .7}, {"bottle", .6},
                             {"bowl", .6}, {"cup", .5}, {"refrigerator", .5},
                             {"person", .4}, {"chair", .4}, {"knife", .3},
                             {"microwave", .3}}),
      make_scene("bathroom", {{"toilet", .9}, {"sink", .8}, {"towel", .6},
                              {"mirror", .5}, {"bathtub", .5},
                              {"toothbrush", .4}, {"bottle", .4}, {"cup", .3},
                              {"person", .2}, {"vase", .1}}),
      make_scene("street", {{"car", .8}, {"person", .8}, {"traffic_light", .6},
                            {"truck", .5}, {"bus", .4}, {"bicycle", .4},
                            {"motorcycle", .3}, {"handbag", .3}, {"bench", .3},
                            {"dog", .2}}),
      make_scene("bedroom", {{"bed", .9}, {"pillow", .7}, {"lamp", .5},
                             {"book", .4}, {"clock", .4}, {"chair", .3},
                             {"tv", .3}, {"person", .3}, {"cat", .2},
                             {"laptop", .2}}),
      make_scene("office", {{"desk", .8}, {"chair", .8}, {"laptop", .7},
                            {"keyboard", .6}, {"mouse", .5}, {"phone", .4},
                            {"person", .4}, {"book", .4}, {"cup", .3},
                            {"clock", .3}}),
      make_scene("park", {{"tree", .8}, {"person", .7}, {"bench", .6},
                          {"dog", .5}, {"bicycle", .4}, {"bird", .4},
                          {"ball", .3}, {"kite", .3}, {"umbrella", .2},
                          {"frisbee", .2}}),
      make_scene("beach", {{"person", .8}, {"umbrella", .7}, {"surfboard", .5},
                           {"boat", .5}, {"kite", .4}, {"bird", .4},
                           {"ball", .3}, {"dog", .3}, {"chair", .2},
                           {"frisbee", .2}}),
  };
}

std::string_view to_string(HallucinationType type) {
  switch (type) {
    case HallucinationType::Object: return "object";
    case HallucinationType::Position: return "position";
    case HallucinationType::Number: return "number";
  }
  return "object";
}

HallucinationType parse_hallucination_type(std::string_view text) {
  if (text == "object") return HallucinationType::Object;
  if (text == "position") return HallucinationType::Position;
  if (text == "number") return HallucinationType::Number;
  throw DataError("unknown hallucination type '" + std::string(text) + "'");
}

void GenerationKnobs::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string(name) + " must lie in [0, 1]");
    }
  };
  check(hallucination_rate, "hallucination_rate");
  check(style_bias_rate, "style_bias_rate");
  check(noise_rate, "noise_rate");
  const TypeWeights& w = type_weights;
  if (w.object < 0 || w.position < 0 || w.number < 0 ||
      !(w.object + w.position + w.number > 0)) {
    throw ConfigError("type weights must be non-negative with a positive sum");
  }
}

std::string_view to_string(Relation relation) {
  return words::kRelations[static_cast<std::size_t>(relation)];
}

std::optional<Relation> parse_relation(std::string_view text) {
  for (std::size_t i = 0; i < std::size(words::kRelations); ++i) {
    if (words::kRelations[i] == text) return static_cast<Relation>(i);
  }
  return std::nullopt;
}

bool relation_holds(Relation relation, Cell a, Cell b) {
  switch (relation) {
    case Relation::LeftOf: return a.x < b.x;
    case Relation::RightOf: return a.x > b.x;
    case Relation::Above: return a.y < b.y;
    case Relation::Below: return a.y > b.y;
    case Relation::Near:
      return std::abs(a.x - b.x) <= 1 && std::abs(a.y - b.y) <= 1;
  }
  return false;
}

std::string plural_of(std::string_view object) {
  static const std::map<std::string_view, std::string_view> kIrregular = {
      {"person", "people"}, {"knife", "knives"}, {"mouse", "mice"}};
  if (auto it = kIrregular.find(object); it != kIrregular.end()) {
    return std::string(it->second);
  }
  std::string s(object);
  if (s.ends_with("s") || s.ends_with("ch") || s.ends_with("sh") ||
      s.ends_with("x")) {
    return s + "es";
  }
  return s + "s";
}

Vocabulary build_vocabulary(std::span<const SceneSpec> scenes) {
  std::vector<std::string> tokens = {std::string(kPadToken),
                                     std::string(kBosToken),
                                     std::string(kEosToken)};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto add = [&](std::string_view w) {
    if (seen.insert(std::string(w)).second) tokens.emplace_back(w);
  };
  for (auto w : {words::kThe, words::kContains, words::kA, words::kAnd,
                 words::kIs, words::kPeriod, words::kQuestion}) {
    add(w);
  }
  for (auto w : words::kNumerals) add(w);
  for (auto w : words::kRelations) add(w);
  for (auto w : words::kMarkers) add(w);
  for (auto w : words::kPromptWords) add(w);
  for (const auto& scene : scenes) add(scene.scene_name);
  std::set<std::string> objects;
  for (const auto& scene : scenes) {
    objects.insert(scene.object_inventory.begin(), scene.object_inventory.end());
  }
  for (const auto& obj : objects) add(obj);
  for (const auto& obj : objects) add(plural_of(obj));
  return Vocabulary(std::move(tokens));
}

std::vector<std::pair<std::string, std::string>> lexicon_entries(
    std::span<const SceneSpec> scenes) {
  std::set<std::string> objects;
  for (const auto& scene : scenes) {
    objects.insert(scene.object_inventory.begin(), scene.object_inventory.end());
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& obj : objects) entries.emplace_back(obj, obj);
  for (const auto& obj : objects) entries.emplace_back(plural_of(obj), obj);
  return entries;
}

std::vector<SampleRecord> generate_corpus(std::span<const SceneSpec> scenes,
                                          const GenerationKnobs& knobs,
                                          std::size_t n) {
  if (scenes.empty()) throw ConfigError("scene list is empty");
  if (n == 0) throw ConfigError("corpus size must be at least 1");
  for (const auto& scene : scenes) scene.validate();
  knobs.validate();
  const Vocabulary vocab = build_vocabulary(scenes);

  const std::array<double, 3> type_weights = {knobs.type_weights.object,
                                              knobs.type_weights.position,
                                              knobs.type_weights.number};
  std::vector<SampleRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // One substream per factor so each knob can be changed without shifting
    // the draws of the others.
    Rng base(derive_seed(knobs.seed, "base", i));
    Rng halluc(derive_seed(knobs.seed, "hallucination", i));
    Rng style(derive_seed(knobs.seed, "style", i));
    Rng noise(derive_seed(knobs.seed, "noise", i));

    const SceneSpec& scene = scenes[base.below(scenes.size())];
    const auto& tmpl = kPromptTemplates[base.below(kPromptTemplates.size())];

    SampleRecord record;
    record.scene = scene.scene_name;
    record.prompt.push_back(kBosId);
    for (auto w : tmpl) {
      record.prompt.push_back(vocab.id(w == "@" ? std::string_view(scene.scene_name)
                                                : w));
    }

    std::vector<std::string> present;
    for (const auto& obj : scene.object_inventory) {
      if (base.uniform() < scene.weight(obj)) present.push_back(obj);
    }
    const auto& inv = scene.object_inventory;
    if (present.empty()) {
      present.push_back(*std::max_element(
          inv.begin(), inv.end(), [&](const auto& a, const auto& b) {
            return scene.weight(a) < scene.weight(b);
          }));
    } else if (present.size() == inv.size() && inv.size() > 1) {
      // Keep at least one absent object available for injection.
      auto lowest = std::min_element(
          present.rbegin(), present.rend(), [&](const auto& a, const auto& b) {
            return scene.weight(a) < scene.weight(b);
          });
      present.erase(std::next(lowest).base());
    }

    std::sort(present.begin(), present.end());

    std::vector<Cell> cells;
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) cells.push_back({x, y});
    }
    for (std::size_t k = cells.size(); k > 1; --k) {
      std::swap(cells[k - 1], cells[base.below(k)]);
    }

    Description truth;
    for (std::size_t k = 0; k < present.size(); ++k) {
      const int count = draw_count(base);
      record.ground_truth_counts[present[k]] = count;
      if (k < cells.size()) record.ground_truth_layout[present[k]] = cells[k];
      truth.items.push_back(Item{present[k], count, false, false});
    }
    record.ground_truth_objects = present;

    if (truth.items.size() >= 2 && noise.bernoulli(knobs.noise_rate)) {
      const std::size_t j = noise.below(truth.items.size() - 1);
      std::swap(truth.items[j], truth.items[j + 1]);
    }
    if (truth.items.size() >= 2) {
      const auto& first = truth.items[0].object;
      const auto& second = truth.items[1].object;
      truth.relation = RelationClause{
          first,
          relation_between(record.ground_truth_layout.at(first),
                           record.ground_truth_layout.at(second)),
          second, false};
    }
    for (std::size_t slot = 0; slot < truth.markers.size(); ++slot) {
      if (style.bernoulli(knobs.style_bias_rate)) {
        truth.markers[slot] =
            std::string(words::kMarkers[style.below(std::size(words::kMarkers))]);
      }
    }

    Description flawed = truth;
    const std::set<std::string> truth_set(present.begin(), present.end());
    for (int k = 0; k < 3; ++k) {
      const double p = k == 0 ? knobs.hallucination_rate
                              : 0.5 * knobs.hallucination_rate;
      if (!halluc.bernoulli(p)) break;
      std::array<double, 3> w = type_weights;
      bool injected = false;
      while (!injected && (w[0] + w[1] + w[2]) > 0) {
        const std::size_t t = pick_weighted(halluc, w);
        const auto type = static_cast<HallucinationType>(t);
        injected = inject(type, flawed, scene, truth_set, record, halluc);
        if (injected) {
          record.hallucination_types.push_back(type);
        } else {
          w[t] = 0.0;
        }
      }
      if (!injected) break;
    }

    record.corrected_response = render(truth, scene.scene_name, vocab);
    record.flawed_response = render(flawed, scene.scene_name, vocab);
    records.push_back(std::move(record));
  }
  return records;
}

CorpusStats corpus_stats(std::span<const SampleRecord> records) {
  if (records.empty()) throw DomainError("corpus_stats needs at least one record");
  double words = 0.0;
  double segments = 0.0;
  for (const auto& r : records) {
    for (TokenId t : r.corrected_response) {
      if (t != kPadId && t != kBosId && t != kEosId) words += 1.0;
    }
    const auto [flawed, corrected] =
        segdiff::diff_segments(r.flawed_response, r.corrected_response);
    segments += static_cast<double>(segdiff::count_edit_hunks(flawed, corrected));
  }
  const auto n = static_cast<double>(records.size());
  return {words / n, segments / n};
}

PreferencePair make_pair(const SampleRecord& record) {
  auto [flawed, corrected] =
      segdiff::diff_segments(record.flawed_response, record.corrected_response);
  return PreferencePair{record.prompt, std::move(corrected), std::move(flawed),
                        record.hallucination_types};
}

std::vector<PreferencePair> make_pairs(std::span<const SampleRecord> records) {
  std::vector<PreferencePair> pairs;
  for (const auto& r : records) {
    if (r.flawed_response != r.corrected_response) pairs.push_back(make_pair(r));
  }
  return pairs;
}

std::vector<PreferencePair> parse_pairs(std::string_view text) {
  std::vector<PreferencePair> pairs;
  detail::for_each_jsonl(text, [&](const json& j, std::size_t line) {
    PreferencePair pair;
    pair.prompt = tokens_from(j, "prompt", line);
    auto chosen = tokens_from(j, "chosen", line);
    auto rejected = tokens_from(j, "rejected", line);
    auto chosen_labels = labels_from(j, "chosen_labels", line);
    auto rejected_labels = labels_from(j, "rejected_labels", line);
    if (chosen_labels.size() != chosen.size()) {
      throw SchemaError(line, "chosen_labels has " +
                                  std::to_string(chosen_labels.size()) +
                                  " entries for " + std::to_string(chosen.size()) +
                                  " chosen tokens");
    }
    if (rejected_labels.size() != rejected.size()) {
      throw SchemaError(line, "rejected_labels has " +
                                  std::to_string(rejected_labels.size()) +
                                  " entries for " +
                                  std::to_string(rejected.size()) +
                                  " rejected tokens");
    }
    if (chosen.empty() || rejected.empty()) {
      throw SchemaError(line, "chosen and rejected responses must be non-empty");
    }
    pair.chosen = SegmentAnnotation(std::move(chosen), std::move(chosen_labels));
    pair.rejected =
        SegmentAnnotation(std::move(rejected), std::move(rejected_labels));
    pair.types = types_from(j, line);
    pairs.push_back(std::move(pair));
  });
  return pairs;
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(detail::read_file(path));
}

std::string format_pair(const PreferencePair& pair) {
  json j;
  j["prompt"] = ids_of(pair.prompt);
  j["chosen"] = ids_of(pair.chosen.tokens());
  j["rejected"] = ids_of(pair.rejected.tokens());
  j["chosen_labels"] = label_ints(pair.chosen);
  j["rejected_labels"] = label_ints(pair.rejected);
  j["types"] = types_json(pair.types);
  return j.dump();
}

void save_pairs(const std::filesystem::path& path,
                std::span<const PreferencePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += format_pair(p);
    out += '\n';
  }
  detail::write_file(path, out);
}

std::vector<SampleRecord> load_records(const std::filesystem::path& path) {
  std::vector<SampleRecord> records;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& j,
                                                      std::size_t line) {
    SampleRecord r;
    r.scene = detail::field(j, "scene", line).get<std::string>();
    r.prompt = tokens_from(j, "prompt", line);
    r.ground_truth_objects =
        detail::field(j, "ground_truth_objects", line).get<std::vector<std::string>>();
    if (auto it = j.find("ground_truth_counts"); it != j.end()) {
      r.ground_truth_counts = it->get<std::map<std::string, int>>();
    }
    if (auto it = j.find("ground_truth_layout"); it != j.end()) {
      for (const auto& [obj, xy] : it->items()) {
        r.ground_truth_layout[obj] = Cell{xy.at(0).get<int>(), xy.at(1).get<int>()};
      }
    }
    r.flawed_response = tokens_from(j, "flawed", line);
    r.corrected_response = tokens_from(j, "corrected", line);
    r.hallucination_types = types_from(j, line);
    if (auto it = j.find("injected_objects"); it != j.end()) {
      r.injected_objects = it->get<std::vector<std::string>>();
    }
    records.push_back(std::move(r));
  });
  return records;
}

void save_records(const std::filesystem::path& path,
                  std::span<const SampleRecord> records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["scene"] = r.scene;
    j["prompt"] = ids_of(r.prompt);
    j["ground_truth_objects"] = r.ground_truth_objects;
    j["ground_truth_counts"] = r.ground_truth_counts;
    json layout = json::object();
    for (const auto& [obj, cell] : r.ground_truth_layout) {
      layout[obj] = {cell.x, cell.y};
    }
    j["ground_truth_layout"] = layout;
    j["flawed"] = ids_of(r.flawed_response);
    j["corrected"] = ids_of(r.corrected_response);
    j["types"] = types_json(r.hallucination_types);
    j["injected_objects"] = r.injected_objects;
    out += j.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

void save_lexicon(const std::filesystem::path& path,
                  std::span<const std::pair<std::string, std::string>> entries) {
  std::string out;
  for (const auto& [surface, canonical] : entries) {
    out += surface + ' ' + canonical + '\n';
  }
  detail::write_file(path, out);
}

std::vector<std::pair<std::string, std::string>> load_lexicon(
    const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string surface;
    std::string canonical;
    std::string extra;
    if (!(fields >> surface)) continue;
    if (!(fields >> canonical) || (fields >> extra)) {
      throw ParseError(line_no, "lexicon lines hold exactly two fields");
    }
    entries.emplace_back(std::move(surface), std::move(canonical));
  }
  return entries;
}

}  // namespace dpolab::corpus
