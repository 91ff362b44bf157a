#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "dpolab/errors.hpp"
#include "dpolab/hallmetrics.hpp"

using namespace dpolab;
using namespace dpolab::hallmetrics;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v({"<pad>", "<bos>", "<eos>", "a", "two", "three", "and", ".",
                             "car", "cars", "dog", "dogs", "cat", "cats", "sofa", "couch",
                             "left-of", "above", "near", "indeed"});
  return v;
}

const Lexicon& lexicon() {
  static const std::vector<std::pair<std::string, std::string>> entries = {
      {"car", "car"},   {"cars", "car"},  {"dog", "dog"},    {"dogs", "dog"},
      {"cat", "cat"},   {"cats", "cat"},  {"sofa", "couch"}, {"couch", "couch"},
      {"zebra", "zebra"}};
  static const Lexicon l(vocab(), entries);
  return l;
}

TokenSequence say(std::initializer_list<std::string_view> words) {
  TokenSequence out;
  for (auto w : words) out.push_back(vocab().id(w));
  return out;
}

EvalRecord record(TokenSequence response, std::vector<std::string> truth,
                  std::string scene = "room") {
  EvalRecord r;
  r.prompt = {kBosId};
  r.response = std::move(response);
  r.ground_truth_objects = std::move(truth);
  r.scene = std::move(scene);
  return r;
}

// Naive recount: every token looked up in a plain map.
struct BruteCount {
  std::size_t scored = 0, hallucinated = 0, mentions = 0, false_mentions = 0;
};

BruteCount brute_force(const std::vector<EvalRecord>& corpus) {
  const std::map<std::string, std::string> table = {
      {"car", "car"}, {"cars", "car"}, {"dog", "dog"},     {"dogs", "dog"},
      {"cat", "cat"}, {"cats", "cat"}, {"sofa", "couch"}, {"couch", "couch"}};
  BruteCount c;
  for (const auto& rec : corpus) {
    std::size_t here = 0, wrong = 0;
    for (TokenId t : rec.response) {
      auto it = table.find(vocab().token(t));
      if (it == table.end()) continue;
      ++here;
      bool found = false;
      for (const auto& g : rec.ground_truth_objects) found = found || g == it->second;
      if (!found) ++wrong;
    }
    c.mentions += here;
    c.false_mentions += wrong;
    if (here > 0) ++c.scored;
    if (wrong > 0) ++c.hallucinated;
  }
  return c;
}

std::vector<EvalRecord> random_corpus(std::mt19937_64& rng) {
  const std::vector<std::string> objects = {"car", "dog", "cat", "couch"};
  std::uniform_int_distribution<std::size_t> n(0, 20);
  std::uniform_int_distribution<std::size_t> len(0, 8);
  std::uniform_int_distribution<TokenId> tok(3, static_cast<TokenId>(vocab().size()) - 1);
  std::bernoulli_distribution in_truth(0.5);
  std::vector<EvalRecord> corpus(n(rng));
  for (auto& rec : corpus) {
    rec.response.resize(len(rng));
    for (auto& t : rec.response) t = tok(rng);
    for (const auto& o : objects) {
      if (in_truth(rng)) rec.ground_truth_objects.push_back(o);
    }
  }
  return corpus;
}

}  // namespace

TEST(Mentions, EmptyWhenNoLexiconToken) {
  EXPECT_TRUE(extract_mentions(say({"a", "and", "."}), lexicon()).mentions.empty());
  EXPECT_TRUE(extract_mentions(TokenSequence{}, lexicon()).mentions.empty());
}

TEST(Mentions, PluralsAndSynonymsCanonicalize) {
  const auto set = extract_mentions(say({"a", "car", "and", "two", "cars"}), lexicon(), 9);
  EXPECT_EQ(set.response_id, 9u);
  EXPECT_EQ(set.mentions, (std::vector<Mention>{{"car", 1}, {"car", 4}}));
  const auto couch = extract_mentions(say({"sofa", "couch"}), lexicon());
  EXPECT_EQ(couch.mentions, (std::vector<Mention>{{"couch", 0}, {"couch", 1}}));
  EXPECT_EQ(lexicon().size(), 8u);  // "zebra" is not in the vocabulary
}

TEST(Rates, OneOfThreeResponses) {
  const std::vector<EvalRecord> corpus = {
      record(say({"a", "car"}), {"car"}),
      record(say({"a", "dog", "and", "a", "cat"}), {"dog"}),
      record(say({"two", "cats"}), {"cat", "dog"}),
      record(say({"a", "."}), {}),
  };
  const auto r = hallucination_rates(corpus, lexicon());
  ASSERT_TRUE(r.response_level_rate);
  EXPECT_DOUBLE_EQ(*r.response_level_rate, 1.0 / 3.0);
  EXPECT_EQ(r.n_scored_responses, 3u);
  EXPECT_EQ(r.n_responses, 4u);
  EXPECT_DOUBLE_EQ(*r.mention_level_rate, 0.25);
}

TEST(Rates, TwoOfTenMentions) {
  const std::vector<EvalRecord> corpus = {
      record(say({"car", "dog", "cat"}), {"car", "dog", "cat"}),
      record(say({"car", "cars", "dog"}), {"car"}),
      record(say({"sofa", "couch", "cat", "cats"}), {"couch"}),
  };
  const auto r = hallucination_rates(corpus, lexicon());
  EXPECT_EQ(r.n_mentions, 10u);
  EXPECT_EQ(r.n_false_mentions, 3u);
  const std::vector<EvalRecord> fixed = {
      record(say({"car", "dog", "cat"}), {"car", "dog", "cat"}),
      record(say({"car", "cars", "dog"}), {"car", "dog"}),
      record(say({"sofa", "couch", "cat", "cats"}), {"couch"}),
  };
  const auto f = hallucination_rates(fixed, lexicon());
  EXPECT_EQ(f.n_mentions, 10u);
  ASSERT_TRUE(f.mention_level_rate);
  EXPECT_DOUBLE_EQ(*f.mention_level_rate, 0.2);
  EXPECT_EQ(f.per_type_counts.at(HallucinationType::Object), 2u);
}

TEST(Rates, UndefinedWithoutMentions) {
  const std::vector<EvalRecord> corpus = {record(say({"a", "."}), {"car"}),
                                          record(TokenSequence{}, {})};
  const auto r = hallucination_rates(corpus, lexicon());
  EXPECT_FALSE(r.response_level_rate);
  EXPECT_FALSE(r.mention_level_rate);
  const std::string json = report_json(r);
  EXPECT_NE(json.find("\"response_level_rate\": null"), std::string::npos) << json;
  EXPECT_NE(json.find("\"mention_level_rate\": null"), std::string::npos) << json;
  EXPECT_FALSE(hallucination_rates(std::vector<EvalRecord>{}, lexicon()).response_level_rate);
}

TEST(Rates, MatchBruteForceRecount) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const auto corpus = random_corpus(rng);
    const auto expected = brute_force(corpus);
    const auto r = hallucination_rates(corpus, lexicon());
    EXPECT_EQ(r.n_scored_responses, expected.scored);
    EXPECT_EQ(r.n_hallucinated_responses, expected.hallucinated);
    EXPECT_EQ(r.n_mentions, expected.mentions);
    EXPECT_EQ(r.n_false_mentions, expected.false_mentions);
    if (expected.scored == 0) {
      EXPECT_FALSE(r.response_level_rate);
    } else {
      EXPECT_EQ(*r.response_level_rate,
                static_cast<double>(expected.hallucinated) / static_cast<double>(expected.scored));
      EXPECT_GE(*r.response_level_rate, 0.0);
      EXPECT_LE(*r.response_level_rate, 1.0);
    }
    if (expected.mentions == 0) {
      EXPECT_FALSE(r.mention_level_rate);
    } else {
      EXPECT_EQ(*r.mention_level_rate, static_cast<double>(expected.false_mentions) /
                                           static_cast<double>(expected.mentions));
    }
  }
}

TEST(Rates, InvariantUnderPermutation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto corpus = random_corpus(rng);
    const auto before = hallucination_rates(corpus, lexicon());
    std::shuffle(corpus.begin(), corpus.end(), rng);
    const auto after = hallucination_rates(corpus, lexicon());
    EXPECT_EQ(before.response_level_rate, after.response_level_rate);
    EXPECT_EQ(before.mention_level_rate, after.mention_level_rate);
    EXPECT_EQ(before.per_type_counts, after.per_type_counts);
  }
}

TEST(Detection, WrongNumeralIsNumberHallucination) {
  const auto grammar = ResponseGrammar::from_vocabulary(vocab());
  auto rec = record(say({"a", "car", "and", "two", "dogs", "."}), {"car", "dog"});
  rec.ground_truth_counts = {{"car", 1}, {"dog", 3}};
  const auto h = score_response(rec, lexicon(), &grammar);
  EXPECT_EQ(h.number, 1u);
  EXPECT_EQ(h.false_mentions, 0u);
  EXPECT_EQ(score_response(rec, lexicon()).number, 0u);
  rec.ground_truth_counts["dog"] = 2;
  EXPECT_EQ(score_response(rec, lexicon(), &grammar).number, 0u);
}

TEST(Detection, RelationAgainstLayout) {
  const auto grammar = ResponseGrammar::from_vocabulary(vocab());
  auto rec = record(say({"a", "car", "indeed", "left-of", "a", "dog", "."}), {"car", "dog"});
  rec.ground_truth_counts = {{"car", 1}, {"dog", 1}};
  rec.ground_truth_layout = {{"car", {2, 0}}, {"dog", {0, 0}}};
  EXPECT_EQ(score_response(rec, lexicon(), &grammar).position, 1u);
  rec.ground_truth_layout = {{"car", {0, 0}}, {"dog", {2, 0}}};
  EXPECT_EQ(score_response(rec, lexicon(), &grammar).position, 0u);

  auto plain = record(say({"a", "car", "near", "a", "dog"}), {"car", "dog"});
  plain.ground_truth_layout = {{"car", {0, 0}}, {"dog", {2, 2}}};
  const auto h = score_response(plain, lexicon(), &grammar);
  EXPECT_EQ(h.position, 1u);
  EXPECT_EQ(h.total(), 1u);
  const std::vector<EvalRecord> corpus = {plain};
  EXPECT_EQ(hallucination_rates(corpus, lexicon(), &grammar)
                .per_type_counts.at(HallucinationType::Position),
            1u);
}

TEST(SceneDelta, CellArithmetic) {
  const auto d = make_scene_delta("living room", 25.2, 41.8);
  EXPECT_NEAR(d.delta, 16.6, 1e-12);
  EXPECT_EQ(d.delta, d.h_scene - d.h_all);
  const std::vector<SceneDelta> row = {make_scene_delta("a", 0, 16.6),
                                       make_scene_delta("b", 0, 5.0),
                                       make_scene_delta("c", 0, 8.0),
                                       make_scene_delta("d", 0, 7.4)};
  ASSERT_TRUE(mean_delta(row));
  EXPECT_LE(std::abs(*mean_delta(row) - 9.2), 0.05 + 1e-9);
  EXPECT_FALSE(mean_delta(std::vector<SceneDelta>{}));
}

TEST(SceneAnalysis, SymmetricCorpusHasZeroDelta) {
  std::vector<EvalRecord> corpus;
  for (const std::string scene : {"kitchen", "street"}) {
    corpus.push_back(record(say({"a", "car", "and", "a", "dog"}), {"car"}, scene));
    corpus.push_back(record(say({"a", "car"}), {"car", "cat"}, scene));
    corpus.push_back(record(say({"a", "cat", "and", "a", "dog"}), {"cat", "dog"}, scene));
  }
  const std::vector<std::string> scenes = {"kitchen", "street"};
  const auto analysis = scene_analysis(corpus, scenes, lexicon());
  ASSERT_EQ(analysis.deltas.size(), 2u);
  for (const auto& d : analysis.deltas) {
    EXPECT_NEAR(d.delta, 0.0, 1e-12);
    EXPECT_EQ(d.delta, d.h_scene - d.h_all);
  }
  EXPECT_NEAR(*analysis.delta_bar, 0.0, 1e-12);
}

TEST(SceneAnalysis, OverGeneralizedSceneIsPositive) {
  // Street responses claim a dog that is never there.
  std::vector<EvalRecord> corpus;
  for (int i = 0; i < 3; ++i) {
    corpus.push_back(record(say({"a", "car", "and", "a", "dog"}), {"car"}, "street"));
    corpus.push_back(record(say({"a", "dog"}), {"dog"}, "park"));
  }
  corpus.push_back(record(say({"a", "dog"}), {"dog", "car"}, "street"));
  const std::vector<std::string> scenes = {"street", "park", "beach"};
  const auto analysis = scene_analysis(corpus, scenes, lexicon(), 10);
  ASSERT_EQ(analysis.deltas.size(), 2u);  // beach has no responses
  const auto& street = analysis.deltas[0];
  EXPECT_EQ(street.scene, "street");
  // car: 0 everywhere. dog: 3/4 in the scene, 3/7 overall.
  EXPECT_NEAR(street.h_scene, (0.0 + 3.0 / 4.0) / 2.0, 1e-12);
  EXPECT_NEAR(street.h_all, (0.0 + 3.0 / 7.0) / 2.0, 1e-12);
  EXPECT_GT(street.delta, 0.0);
  // k = 1 keeps only the most frequent street object (car).
  const auto top1 = scene_analysis(corpus, scenes, lexicon(), 1);
  EXPECT_NEAR(top1.deltas[0].delta, 0.0, 1e-12);
}

TEST(Curve, HandCase) {
  const std::vector<std::size_t> counts = {3, 2, 1, 0};
  const auto curve = concentration_curve(counts);
  const auto& p = curve.points();
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0].x, 0.0);
  EXPECT_EQ(p[0].y, 0.0);
  EXPECT_NEAR(p[1].x, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1].y, 0.5, 1e-15);
  EXPECT_NEAR(p[2].x, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[2].y, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(p[3].x, 1.0);
  EXPECT_EQ(p[3].y, 1.0);
  EXPECT_NEAR(curve.y_at(0.5), 0.5, 1e-15);
  EXPECT_EQ(curve.y_at(1.0), 1.0);
  EXPECT_EQ(curve.y_at(0.1), 0.0);
  EXPECT_EQ(curve_csv(curve).substr(0, 4), "x,y\n");
}

TEST(Curve, EqualCountsLieOnDiagonal) {
  const std::vector<std::size_t> counts = {2, 0, 2, 2, 2, 0};
  const auto curve = concentration_curve(counts);
  for (const auto& p : curve.points()) EXPECT_NEAR(p.y, p.x, 1e-15);
}

TEST(Curve, SingleResponseAndErrors) {
  const std::vector<std::size_t> one = {0, 4, 0};
  const auto curve = concentration_curve(one);
  const auto& p = curve.points();
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].x, 1.0);
  EXPECT_EQ(p[1].y, 1.0);
  EXPECT_THROW(concentration_curve(std::vector<std::size_t>{0, 0}), DomainError);
  EXPECT_THROW(concentration_curve(std::vector<std::size_t>{}), DomainError);
}

TEST(Curve, MonotoneConcaveAboveDiagonal) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> n(1, 40);
  std::uniform_int_distribution<std::size_t> c(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> counts(n(rng));
    for (auto& v : counts) v = c(rng);
    counts[0] = std::max<std::size_t>(counts[0], 1);
    const auto curve = concentration_curve(counts);
    const auto& p = curve.points();
    EXPECT_EQ(p.back().x, 1.0);
    EXPECT_NEAR(p.back().y, 1.0, 1e-12);
    double last_step = 2.0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      const double step = p[i].y - p[i - 1].y;
      EXPECT_GE(step, 0.0);
      EXPECT_LE(step, last_step + 1e-12);
      EXPECT_GE(p[i].y, p[i].x - 1e-12);
      last_step = step;
    }
    auto shuffled = counts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto other = concentration_curve(shuffled).points();
    ASSERT_EQ(other.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(other[i].x, p[i].x);
      EXPECT_EQ(other[i].y, p[i].y);
    }
  }
}

TEST(Files, EvalCorpusRoundTrip) {
  auto rec = record(say({"a", "car", "left-of", "a", "dog"}), {"car", "dog"}, "street");
  rec.ground_truth_counts = {{"car", 1}, {"dog", 1}};
  rec.ground_truth_layout = {{"car", {0, 1}}, {"dog", {2, 1}}};
  const std::vector<EvalRecord> corpus = {rec, record(say({"a"}), {}, "park")};
  const auto path = std::filesystem::temp_directory_path() / "dpolab_eval_corpus.jsonl";
  save_eval_corpus(path, corpus);
  const auto back = load_eval_corpus(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].response, rec.response);
  EXPECT_EQ(back[0].ground_truth_layout, rec.ground_truth_layout);
  EXPECT_EQ(back[0].ground_truth_counts, rec.ground_truth_counts);
  EXPECT_EQ(back[1].scene, "park");
  std::filesystem::remove(path);
}

TEST(Files, SceneCsvHeader) {
  SceneAnalysis a;
  a.deltas = {make_scene_delta("street", 0.25, 0.5)};
  EXPECT_EQ(scene_csv(a).substr(0, 20), "scene,H_a,H_s,delta\n");
}
