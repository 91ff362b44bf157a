#include "dpolab/hallmetrics.hpp"

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "dpolab/errors.hpp"
#include "jsonl.hpp"

namespace dpolab::hallmetrics {
namespace {

using detail::json;

bool contains(const std::vector<std::string>& sorted_or_not,
              const std::string& name) {
  return std::find(sorted_or_not.begin(), sorted_or_not.end(), name) !=
         sorted_or_not.end();
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(12) << v;
  return out.str();
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

Lexicon::Lexicon(const Vocabulary& vocab,
                 std::span<const std::pair<std::string, std::string>> entries) {
  for (const auto& [surface, canonical] : entries) {
    if (vocab.contains(surface)) canonical_[vocab.id(surface)] = canonical;
  }
}

const std::string* Lexicon::lookup(TokenId token) const {
  auto it = canonical_.find(token);
  return it == canonical_.end() ? nullptr : &it->second;
}

MentionSet extract_mentions(std::span<const TokenId> response,
                            const Lexicon& lexicon, std::size_t response_id) {
  MentionSet set{response_id, {}};
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (const std::string* name = lexicon.lookup(response[i])) {
      set.mentions.push_back({*name, i});
    }
  }
  return set;
}

ResponseGrammar ResponseGrammar::from_vocabulary(const Vocabulary& vocab) {
  ResponseGrammar g;
  if (vocab.contains(words::kA)) g.numerals[vocab.id(words::kA)] = 1;
  for (std::size_t i = 0; i < std::size(words::kNumerals); ++i) {
    if (vocab.contains(words::kNumerals[i])) {
      g.numerals[vocab.id(words::kNumerals[i])] = static_cast<int>(i) + 1;
    }
  }
  for (std::size_t i = 0; i < std::size(words::kRelations); ++i) {
    if (vocab.contains(words::kRelations[i])) {
      g.relations[vocab.id(words::kRelations[i])] =
          static_cast<corpus::Relation>(i);
    }
  }
  return g;
}

ResponseHallucinations score_response(const EvalRecord& record,
                                      const Lexicon& lexicon,
                                      const ResponseGrammar* grammar) {
  ResponseHallucinations out;
  const auto& r = record.response;
  const MentionSet set = extract_mentions(r, lexicon);
  out.mentions = set.mentions.size();
  for (const auto& m : set.mentions) {
    const bool present = contains(record.ground_truth_objects, m.object);
    if (!present) {
      ++out.false_mentions;
      out.false_objects.push_back(m.object);
    }
    if (grammar == nullptr || !present) continue;

    // "<numeral> <object>": compare with the true count.
    if (m.position > 0 && !record.ground_truth_counts.empty()) {
      auto num = grammar->numerals.find(r[m.position - 1]);
      auto truth = record.ground_truth_counts.find(m.object);
      if (num != grammar->numerals.end() &&
          truth != record.ground_truth_counts.end() &&
          num->second != truth->second) {
        ++out.number;
      }
    }

    // "<object> [marker] <relation> <numeral> <object>": check the layout.
    if (record.ground_truth_layout.empty()) continue;
    std::size_t q = m.position + 1;
    if (q < r.size() && grammar->relations.count(r[q]) == 0) ++q;  // marker
    if (q + 2 >= r.size()) continue;
    auto rel = grammar->relations.find(r[q]);
    if (rel == grammar->relations.end() || grammar->numerals.count(r[q + 1]) == 0) {
      continue;
    }
    const std::string* other = lexicon.lookup(r[q + 2]);
    if (other == nullptr) continue;
    auto a = record.ground_truth_layout.find(m.object);
    auto b = record.ground_truth_layout.find(*other);
    if (a == record.ground_truth_layout.end() ||
        b == record.ground_truth_layout.end()) {
      continue;
    }
    if (!corpus::relation_holds(rel->second, a->second, b->second)) ++out.position;
  }
  return out;
}

HallucinationReport hallucination_rates(std::span<const EvalRecord> corpus,
                                        const Lexicon& lexicon,
                                        const ResponseGrammar* grammar) {
  HallucinationReport report;
  report.n_responses = corpus.size();
  report.per_type_counts = {{HallucinationType::Object, 0},
                            {HallucinationType::Position, 0},
                            {HallucinationType::Number, 0}};
  for (const auto& record : corpus) {
    const auto h = score_response(record, lexicon, grammar);
    report.n_mentions += h.mentions;
    report.n_false_mentions += h.false_mentions;
    if (h.mentions > 0) ++report.n_scored_responses;
    if (h.false_mentions > 0) ++report.n_hallucinated_responses;
    report.per_type_counts[HallucinationType::Object] += h.false_mentions;
    report.per_type_counts[HallucinationType::Position] += h.position;
    report.per_type_counts[HallucinationType::Number] += h.number;
  }
  if (report.n_scored_responses > 0) {
    report.response_level_rate =
        static_cast<double>(report.n_hallucinated_responses) /
        static_cast<double>(report.n_scored_responses);
  }
  if (report.n_mentions > 0) {
    report.mention_level_rate = static_cast<double>(report.n_false_mentions) /
                                static_cast<double>(report.n_mentions);
  }
  return report;
}

SceneDelta make_scene_delta(std::string scene, double h_all, double h_scene) {
  return SceneDelta{std::move(scene), h_all, h_scene, h_scene - h_all};
}

std::optional<double> mean_delta(std::span<const SceneDelta> deltas) {
  if (deltas.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& d : deltas) total += d.delta;
  return total / static_cast<double>(deltas.size());
}

SceneAnalysis scene_analysis(std::span<const EvalRecord> corpus,
                             std::span<const std::string> scenes,
                             const Lexicon& lexicon, std::size_t k) {
  // Per response: the set of mentioned objects.
  std::vector<std::set<std::string>> mentioned(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& m : extract_mentions(corpus[i].response, lexicon).mentions) {
      mentioned[i].insert(m.object);
    }
  }
  // Response-level rate of one object over the responses selected by `keep`.
  auto object_rate = [&](const std::string& object,
                         const auto& keep) -> std::optional<double> {
    std::size_t mentioning = 0;
    std::size_t hallucinated = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (!keep(corpus[i]) || mentioned[i].count(object) == 0) continue;
      ++mentioning;
      if (!contains(corpus[i].ground_truth_objects, object)) ++hallucinated;
    }
    if (mentioning == 0) return std::nullopt;
    return static_cast<double>(hallucinated) / static_cast<double>(mentioning);
  };
  auto mean_rate = [&](const std::vector<std::string>& objects,
                       const auto& keep) -> std::optional<double> {
    double total = 0.0;
    std::size_t rated = 0;
    for (const auto& o : objects) {
      if (auto r = object_rate(o, keep)) {
        total += *r;
        ++rated;
      }
    }
    if (rated == 0) return std::nullopt;
    return total / static_cast<double>(rated);
  };

  SceneAnalysis analysis;
  for (const auto& scene : scenes) {
    std::map<std::string, std::size_t> frequency;
    std::size_t responses = 0;
    for (const auto& rec : corpus) {
      if (rec.scene != scene) continue;
      ++responses;
      for (const auto& o : rec.ground_truth_objects) ++frequency[o];
    }
    if (responses == 0) {
      std::cerr << "warning: scene '" << scene << "' has no responses; skipped\n";
      continue;
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(frequency.begin(),
                                                            frequency.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second > b.second;
    });
    std::vector<std::string> top;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
      top.push_back(ranked[i].first);
    }
    const auto h_all = mean_rate(top, [](const EvalRecord&) { return true; });
    const auto h_scene =
        mean_rate(top, [&](const EvalRecord& rec) { return rec.scene == scene; });
    if (!h_all || !h_scene) {
      std::cerr << "warning: scene '" << scene
                << "' has no mentions of its frequent objects; skipped\n";
      continue;
    }
    analysis.deltas.push_back(make_scene_delta(scene, *h_all, *h_scene));
  }
  analysis.delta_bar = mean_delta(analysis.deltas);
  return analysis;
}

double ConcentrationCurve::y_at(double x) const {
  double y = 0.0;
  for (const auto& p : points_) {
    if (p.x <= x) y = p.y;
  }
  return y;
}

ConcentrationCurve concentration_curve(std::span<const std::size_t> counts) {
  std::vector<std::size_t> positive;
  for (std::size_t c : counts) {
    if (c > 0) positive.push_back(c);
  }
  if (positive.empty()) {
    throw DomainError("concentration curve needs at least one positive count");
  }
  std::sort(positive.begin(), positive.end(), std::greater<>());
  double total = 0.0;
  for (std::size_t c : positive) total += static_cast<double>(c);

  std::vector<CurvePoint> points = {{0.0, 0.0}};
  const auto m = static_cast<double>(positive.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    cumulative += static_cast<double>(positive[i]);
    points.push_back({static_cast<double>(i + 1) / m, cumulative / total});
  }
  return ConcentrationCurve(std::move(points));
}

std::vector<std::size_t> hallucination_counts(std::span<const EvalRecord> corpus,
                                              const Lexicon& lexicon,
                                              const ResponseGrammar* grammar) {
  std::vector<std::size_t> counts;
  counts.reserve(corpus.size());
  for (const auto& rec : corpus) {
    counts.push_back(score_response(rec, lexicon, grammar).total());
  }
  return counts;
}

std::vector<EvalRecord> load_eval_corpus(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  auto ids = [](const json& arr, std::size_t line, const char* name) {
    if (!arr.is_array()) {
      throw ParseError(line, std::string("field '") + name + "' must be an array");
    }
    TokenSequence seq;
    for (const auto& v : arr) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw SchemaError(line, std::string("field '") + name +
                                    "' must hold non-negative token ids");
      }
      seq.push_back(v.get<TokenId>());
    }
    return seq;
  };
  detail::for_each_jsonl(detail::read_file(path), [&](const json& j,
                                                      std::size_t line) {
    EvalRecord rec;
    rec.prompt = ids(detail::field(j, "prompt", line), line, "prompt");
    rec.response = ids(detail::field(j, "response", line), line, "response");
    rec.ground_truth_objects =
        detail::field(j, "ground_truth_objects", line).get<std::vector<std::string>>();
    rec.scene = detail::field(j, "scene", line).get<std::string>();
    if (auto it = j.find("ground_truth_counts"); it != j.end()) {
      rec.ground_truth_counts = it->get<std::map<std::string, int>>();
    }
    if (auto it = j.find("ground_truth_layout"); it != j.end()) {
      for (const auto& [obj, xy] : it->items()) {
        rec.ground_truth_layout[obj] =
            corpus::Cell{xy.at(0).get<int>(), xy.at(1).get<int>()};
      }
    }
    out.push_back(std::move(rec));
  });
  return out;
}

void save_eval_corpus(const std::filesystem::path& path,
                      std::span<const EvalRecord> corpus) {
  std::string text;
  for (const auto& rec : corpus) {
    json j;
    j["prompt"] = std::vector<int>(rec.prompt.begin(), rec.prompt.end());
    j["response"] = std::vector<int>(rec.response.begin(), rec.response.end());
    j["ground_truth_objects"] = rec.ground_truth_objects;
    j["scene"] = rec.scene;
    if (!rec.ground_truth_counts.empty()) {
      j["ground_truth_counts"] = rec.ground_truth_counts;
    }
    if (!rec.ground_truth_layout.empty()) {
      json layout = json::object();
      for (const auto& [obj, cell] : rec.ground_truth_layout) {
        layout[obj] = {cell.x, cell.y};
      }
      j["ground_truth_layout"] = layout;
    }
    text += j.dump();
    text += '\n';
  }
  detail::write_file(path, text);
}

std::string report_json(const HallucinationReport& report) {
  json j;
  j["response_level_rate"] = optional_json(report.response_level_rate);
  j["mention_level_rate"] = optional_json(report.mention_level_rate);
  json types = json::object();
  for (const auto& [type, count] : report.per_type_counts) {
    types[std::string(corpus::to_string(type))] = count;
  }
  j["per_type_counts"] = types;
  j["n_responses"] = report.n_responses;
  j["n_scored_responses"] = report.n_scored_responses;
  j["n_hallucinated_responses"] = report.n_hallucinated_responses;
  j["n_mentions"] = report.n_mentions;
  j["n_false_mentions"] = report.n_false_mentions;
  return j.dump(2);
}

std::string scene_csv(const SceneAnalysis& analysis) {
  std::string out = "scene,H_a,H_s,delta\n";
  for (const auto& d : analysis.deltas) {
    out += d.scene + ',' + fmt(d.h_all) + ',' + fmt(d.h_scene) + ',' +
           fmt(d.delta) + '\n';
  }
  return out;
}

std::string curve_csv(const ConcentrationCurve& curve) {
  std::string out = "x,y\n";
  for (const auto& p : curve.points()) out += fmt(p.x) + ',' + fmt(p.y) + '\n';
  return out;
}

}  // namespace dpolab::hallmetrics
