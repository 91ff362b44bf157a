#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpolab/config.hpp"
#include "dpolab/corpus.hpp"
#include "dpolab/ddpo.hpp"
#include "dpolab/errors.hpp"
#include "dpolab/hallmetrics.hpp"
#include "dpolab/lm.hpp"
#include "dpolab/pipeline.hpp"
#include "dpolab/segdiff.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dpolab;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_words(const fs::path& path) {
  std::istringstream in(read_text(path));
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

json annotation_json(const segdiff::SegmentAnnotation& a,
                     const std::vector<std::string>& words) {
  json labels = json::array();
  for (auto l : a.labels()) labels.push_back(l == segdiff::SegmentLabel::Corrected ? 1 : 0);
  json segments = json::array();
  for (const auto& s : a.segments()) {
    segments.push_back({{"start", s.start},
                        {"end", s.end},
                        {"label", s.label == segdiff::SegmentLabel::Corrected
                                      ? "corrected"
                                      : "unchanged"}});
  }
  const auto c = segdiff::segment_counts(a);
  return {{"tokens", words},
          {"ids", std::vector<int>(a.tokens().begin(), a.tokens().end())},
          {"labels", labels},
          {"segments", segments},
          {"counts",
           {{"unchanged_tokens", c.unchanged_tokens},
            {"corrected_tokens", c.corrected_tokens},
            {"corrected_segments", c.corrected_segments}}}};
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  RunConfig config() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) c.reseed(*seed);
    c.validate();
    return c;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Dense direct preference optimization lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Master seed; overrides every named seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate train/eval corpora and pairs");
  gen->callback([&] {
    const RunConfig c = g.config();
    const fs::path dir = g.out_dir;
    fs::create_directories(dir);
    const auto scenes = corpus::default_scenes();
    const auto train = corpus::generate_corpus(scenes, c.corpus.knobs, c.corpus.n_train);
    auto eval_knobs = c.corpus.knobs;
    eval_knobs.seed = c.corpus.eval_seed;
    const auto eval = corpus::generate_corpus(scenes, eval_knobs, c.corpus.n_eval);
    corpus::build_vocabulary(scenes).save(dir / "vocab.txt");
    corpus::save_lexicon(dir / "lexicon.txt", corpus::lexicon_entries(scenes));
    corpus::save_records(dir / "train_records.jsonl", train);
    corpus::save_records(dir / "eval_records.jsonl", eval);
    corpus::save_pairs(dir / "pairs.jsonl", corpus::make_pairs(train));
    const auto stats = corpus::corpus_stats(train);
    std::cout << json{{"n_train", train.size()},
                      {"n_eval", eval.size()},
                      {"mean_words", stats.mean_words},
                      {"mean_corrected_segments", stats.mean_corrected_segments}}
                     .dump(2)
              << "\n";
  });

  // diff
  std::string flawed_path, corrected_path, diff_vocab;
  auto* diff = app.add_subcommand("diff", "Segment-diff two whitespace-separated token files");
  diff->add_option("flawed", flawed_path)->required();
  diff->add_option("corrected", corrected_path)->required();
  diff->add_option("--vocab", diff_vocab, "Vocabulary file; tokens must belong to it");
  diff->callback([&] {
    const auto a = read_words(flawed_path);
    const auto b = read_words(corrected_path);
    TokenSequence ia, ib;
    if (!diff_vocab.empty()) {
      const auto vocab = Vocabulary::load(diff_vocab);
      ia = vocab.encode(a);
      ib = vocab.encode(b);
    } else {
      std::map<std::string, TokenId> ids;
      auto intern = [&](const std::vector<std::string>& words) {
        TokenSequence out;
        for (const auto& w : words) {
          out.push_back(ids.try_emplace(w, static_cast<TokenId>(ids.size())).first->second);
        }
        return out;
      };
      ia = intern(a);
      ib = intern(b);
    }
    const auto [fa, fb] = segdiff::diff_segments(ia, ib);
    std::cout << json{{"flawed", annotation_json(fa, a)},
                      {"corrected", annotation_json(fb, b)},
                      {"edit_hunks", segdiff::count_edit_hunks(fa, fb)}}
                     .dump(2)
              << "\n";
  });

  // pretrain
  std::string records_path, vocab_path, ckpt_out;
  std::optional<std::size_t> pre_epochs, pre_batch;
  std::optional<double> pre_lr;
  auto* pre = app.add_subcommand("pretrain", "Train the reference model on corrected responses");
  pre->add_option("--records", records_path, "Sample records JSONL")->required();
  pre->add_option("--vocab", vocab_path, "Vocabulary file")->required();
  pre->add_option("--out", ckpt_out, "Checkpoint to write")->required();
  pre->add_option("--epochs", pre_epochs);
  pre->add_option("--lr", pre_lr);
  pre->add_option("--batch", pre_batch);
  pre->callback([&] {
    RunConfig c = g.config();
    if (pre_epochs) c.pretrain.epochs = *pre_epochs;
    if (pre_lr) c.pretrain.learning_rate = *pre_lr;
    if (pre_batch) c.pretrain.batch_size = *pre_batch;
    const auto vocab = Vocabulary::load(vocab_path);
    const auto records = corpus::load_records(records_path);
    std::vector<lm::LmExample> examples;
    for (const auto& r : records) examples.push_back({r.prompt, r.corrected_response});
    const lm::ModelConfig mc{vocab.size(), c.model.context_window, c.model.embed_dim,
                             c.model.hidden_dim};
    const auto result = lm::pretrain(
        examples, lm::initialize_parameters(mc, c.model.init_seed), c.pretrain);
    lm::save_checkpoint(ckpt_out, result.params);
    write_text(ckpt_out + ".trace.json", pipeline::pretrain_trace_json(result.loss_trace));
    std::cout << pipeline::pretrain_trace_json(result.loss_trace);
  });

  // score
  std::string score_ckpt, score_pairs, score_mode = "weighted";
  double score_gamma = 5.0;
  auto* score = app.add_subcommand("score", "Score preference pairs under a checkpoint");
  score->add_option("--ckpt", score_ckpt)->required();
  score->add_option("--pairs", score_pairs)->required();
  score->add_option("--gamma", score_gamma);
  score->add_option("--mode", score_mode, "sum | mean | weighted");
  score->callback([&] {
    const auto params = lm::load_checkpoint(score_ckpt);
    const auto pairs = corpus::load_pairs(score_pairs);
    const auto mode = ddpo::parse_score_mode(score_mode);
    for (const auto& p : pairs) {
      std::cout << json{{"chosen", ddpo::response_score(params, p.prompt, p.chosen,
                                                        mode, score_gamma)},
                        {"rejected", ddpo::response_score(params, p.prompt, p.rejected,
                                                          mode, score_gamma)}}
                       .dump()
                << "\n";
    }
  });

  // train-ddpo
  std::optional<double> beta, gamma, lr;
  std::optional<std::size_t> epochs, batch;
  std::optional<std::uint64_t> ddpo_seed;
  std::string pairs_path, ref_path, policy_out, trace_out, ddpo_mode;
  auto* train = app.add_subcommand("train-ddpo", "Train a policy on preference pairs");
  train->add_option("--beta", beta);
  train->add_option("--gamma", gamma);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--batch", batch);
  train->add_option("--seed", ddpo_seed);
  train->add_option("--mode", ddpo_mode, "sum | mean | weighted");
  train->add_option("--pairs", pairs_path)->required();
  train->add_option("--ref", ref_path)->required();
  train->add_option("--out", policy_out)->required();
  train->add_option("--trace", trace_out, "Trace JSON (default: <out>.trace.json)");
  train->callback([&] {
    RunConfig c = g.config();
    auto& d = c.ddpo;
    if (beta) d.beta = *beta;
    if (gamma) d.gamma = *gamma;
    if (epochs) d.epochs = *epochs;
    if (lr) d.learning_rate = *lr;
    if (batch) d.batch_size = *batch;
    if (ddpo_seed) d.seed = *ddpo_seed;
    if (!ddpo_mode.empty()) d.score_mode = ddpo::parse_score_mode(ddpo_mode);
    d.validate();
    const auto reference = lm::load_checkpoint(ref_path);
    const auto pairs = corpus::load_pairs(pairs_path);
    if (pairs.empty()) throw DataError(pairs_path + " holds no preference pair");
    const auto result = ddpo::train_ddpo(reference, pairs, d);
    lm::save_checkpoint(policy_out, result.policy);
    const std::string trace = pipeline::ddpo_trace_json(result.trace);
    write_text(trace_out.empty() ? policy_out + ".trace.json" : trace_out, trace);
    std::cout << trace;
  });

  // eval
  std::string eval_corpus, eval_lexicon, eval_vocab, eval_scenes;
  std::optional<std::size_t> top_k;
  auto* ev = app.add_subcommand("eval", "Hallucination report for an evaluation corpus");
  ev->add_option("--corpus", eval_corpus, "Evaluation corpus JSONL")->required();
  ev->add_option("--lexicon", eval_lexicon, "Lexicon file")->required();
  ev->add_option("--vocab", eval_vocab, "Vocabulary file")->required();
  ev->add_option("--scenes", eval_scenes, "Scene names, one per line");
  ev->add_option("--top-k", top_k);
  ev->callback([&] {
    const RunConfig c = g.config();
    const auto vocab = Vocabulary::load(eval_vocab);
    const hallmetrics::Lexicon lexicon(vocab, corpus::load_lexicon(eval_lexicon));
    const auto grammar = hallmetrics::ResponseGrammar::from_vocabulary(vocab);
    const auto records = hallmetrics::load_eval_corpus(eval_corpus);
    std::vector<std::string> scenes;
    if (!eval_scenes.empty()) {
      scenes = read_words(eval_scenes);
    } else {
      std::set<std::string> seen;
      for (const auto& r : records) {
        if (!r.scene.empty()) seen.insert(r.scene);
      }
      scenes.assign(seen.begin(), seen.end());
    }
    const fs::path dir = g.out_dir;
    fs::create_directories(dir);
    const auto report = hallmetrics::hallucination_rates(records, lexicon, &grammar);
    write_text(dir / "report.json", hallmetrics::report_json(report));
    write_text(dir / "scenes.csv",
               hallmetrics::scene_csv(hallmetrics::scene_analysis(
                   records, scenes, lexicon, top_k.value_or(c.eval.top_k))));
    const auto counts = hallmetrics::hallucination_counts(records, lexicon, &grammar);
    if (std::any_of(counts.begin(), counts.end(), [](auto n) { return n > 0; })) {
      write_text(dir / "curve.csv",
                 hallmetrics::curve_csv(hallmetrics::concentration_curve(counts)));
    } else {
      std::cerr << "warning: no hallucinated response; curve.csv not written\n";
    }
    std::cout << hallmetrics::report_json(report);
  });

  // scaling
  std::vector<double> fractions;
  auto* scaling = app.add_subcommand("scaling", "Hallucination rate against preference-data size");
  scaling->add_option("--fractions", fractions, "Pair-set fractions in (0, 1], sorted");
  scaling->callback([&] {
    const RunConfig c = g.config();
    const auto rows = pipeline::run_data_scaling(
        c, fractions.empty() ? c.scaling_fractions : fractions);
    const std::string csv = pipeline::scaling_csv(rows);
    write_text(fs::path(g.out_dir) / "scaling.csv", csv);
    std::cout << csv;
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "generate -> diff -> pretrain -> train-ddpo -> eval");
  pipe->callback([&] {
    const auto summary = pipeline::run_pipeline(g.config(), g.out_dir);
    std::cout << json::parse(summary.metrics_json).dump(2) << "\n";
  });

  // verify
  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Check artifact hashes against manifest.json");
  verify->add_option("dir", verify_dir, "Artifact directory (default: --out-dir)");
  int verify_status = kOk;
  verify->callback([&] {
    const auto problems = pipeline::verify_manifest(verify_dir.empty() ? g.out_dir : verify_dir);
    for (const auto& p : problems) std::cerr << p << "\n";
    if (!problems.empty()) verify_status = kData;
    else std::cout << "ok\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  return verify_status;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
