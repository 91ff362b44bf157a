#include "dpolab/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "dpolab/errors.hpp"
#include "jsonl.hpp"

namespace dpolab::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename Fn>
void stage(const char* name, Fn&& fn) {
  std::clog << "[pipeline] " << name << "\n";
  try {
    fn();
  } catch (const std::exception& e) {
    std::cerr << "pipeline stage '" << name << "' failed: " << e.what() << "\n";
    throw;
  }
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json evaluation_json(const Evaluation& ev) {
  const auto& r = ev.report;
  json types = json::object();
  for (auto t : {corpus::HallucinationType::Object,
                 corpus::HallucinationType::Position,
                 corpus::HallucinationType::Number}) {
    auto it = r.per_type_counts.find(t);
    types[std::string(corpus::to_string(t))] =
        it == r.per_type_counts.end() ? 0 : it->second;
  }
  return json{{"response_level_rate", optional_json(r.response_level_rate)},
              {"mention_level_rate", optional_json(r.mention_level_rate)},
              {"n_responses", r.n_responses},
              {"n_scored_responses", r.n_scored_responses},
              {"n_mentions", r.n_mentions},
              {"n_false_mentions", r.n_false_mentions},
              {"n_hallucinated_responses", r.n_hallucinated_responses},
              {"per_type_counts", types},
              {"delta_bar", optional_json(ev.scenes.delta_bar)}};
}

void generate_data(const RunConfig& config, PreparedRun& run) {
  run.scenes = corpus::default_scenes();
  run.vocab = corpus::build_vocabulary(run.scenes);
  run.train = corpus::generate_corpus(run.scenes, config.corpus.knobs,
                                      config.corpus.n_train);
  corpus::GenerationKnobs eval_knobs = config.corpus.knobs;
  eval_knobs.seed = config.corpus.eval_seed;
  run.eval = corpus::generate_corpus(run.scenes, eval_knobs, config.corpus.n_eval);
}

void pretrain_reference(const RunConfig& config, PreparedRun& run) {
  std::vector<lm::LmExample> examples;
  examples.reserve(run.train.size());
  for (const auto& r : run.train) examples.push_back({r.prompt, r.corrected_response});
  const lm::ModelConfig mc{run.vocab.size(), config.model.context_window,
                           config.model.embed_dim, config.model.hidden_dim};
  auto result = lm::pretrain(
      examples, lm::initialize_parameters(mc, config.model.init_seed),
      config.pretrain);
  run.reference = std::move(result.params);
  run.pretrain_trace = std::move(result.loss_trace);
}

std::string scene_list(std::span<const corpus::SceneSpec> scenes) {
  std::string out;
  for (const auto& s : scenes) out += s.scene_name + "\n";
  return out;
}

// Writes the report, scene and curve files of one evaluation; returns the
// names written.
std::vector<std::string> write_evaluation(const fs::path& dir,
                                          const std::string& tag,
                                          const Evaluation& ev) {
  std::vector<std::string> names = {"eval_" + tag + ".jsonl",
                                    "report_" + tag + ".json",
                                    "scenes_" + tag + ".csv"};
  hallmetrics::save_eval_corpus(dir / names[0], ev.corpus);
  detail::write_file(dir / names[1], hallmetrics::report_json(ev.report));
  detail::write_file(dir / names[2], hallmetrics::scene_csv(ev.scenes));
  if (ev.curve) {
    names.push_back("curve_" + tag + ".csv");
    detail::write_file(dir / names.back(), hallmetrics::curve_csv(*ev.curve));
  } else {
    std::cerr << "warning: no hallucinated " << tag
              << " response; concentration curve not written\n";
  }
  return names;
}

}  // namespace

std::vector<hallmetrics::EvalRecord> to_eval_records(
    std::span<const corpus::SampleRecord> records,
    std::span<const TokenSequence> responses) {
  if (records.size() != responses.size()) {
    throw std::invalid_argument("one response per record is required");
  }
  std::vector<hallmetrics::EvalRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out.push_back({r.prompt, responses[i], r.ground_truth_objects, r.scene,
                   r.ground_truth_counts, r.ground_truth_layout});
  }
  return out;
}

PreparedRun prepare(const RunConfig& config) {
  config.validate();
  PreparedRun run;
  generate_data(config, run);
  run.pairs = corpus::make_pairs(run.train);
  pretrain_reference(config, run);
  return run;
}

Evaluation evaluate(const lm::ModelParameters& params, const PreparedRun& run,
                    const EvalSettings& settings) {
  std::vector<TokenSequence> responses;
  responses.reserve(run.eval.size());
  for (const auto& r : run.eval) {
    responses.push_back(lm::greedy_decode(params, r.prompt, settings.max_new_tokens));
  }
  Evaluation ev;
  ev.corpus = to_eval_records(run.eval, responses);
  const hallmetrics::Lexicon lexicon(run.vocab, corpus::lexicon_entries(run.scenes));
  const auto grammar = hallmetrics::ResponseGrammar::from_vocabulary(run.vocab);
  ev.report = hallmetrics::hallucination_rates(ev.corpus, lexicon, &grammar);
  std::vector<std::string> names;
  for (const auto& s : run.scenes) names.push_back(s.scene_name);
  ev.scenes = hallmetrics::scene_analysis(ev.corpus, names, lexicon, settings.top_k);
  const auto counts = hallmetrics::hallucination_counts(ev.corpus, lexicon, &grammar);
  for (auto c : counts) {
    if (c > 0) {
      ev.curve = hallmetrics::concentration_curve(counts);
      break;
    }
  }
  return ev;
}

PipelineSummary run_pipeline(const RunConfig& config, const fs::path& out_dir) {
  stage("config", [&] {
    config.validate();
    fs::create_directories(out_dir);
    detail::write_file(out_dir / "config.json", config_json(config));
  });
  std::vector<std::string> files = {"config.json"};

  PreparedRun run;
  stage("generate", [&] {
    generate_data(config, run);
    run.vocab.save(out_dir / "vocab.txt");
    corpus::save_lexicon(out_dir / "lexicon.txt",
                         corpus::lexicon_entries(run.scenes));
    detail::write_file(out_dir / "scenes.txt", scene_list(run.scenes));
    corpus::save_records(out_dir / "train_records.jsonl", run.train);
    corpus::save_records(out_dir / "eval_records.jsonl", run.eval);
  });
  files.insert(files.end(), {"vocab.txt", "lexicon.txt", "scenes.txt",
                             "train_records.jsonl", "eval_records.jsonl"});

  stage("diff", [&] {
    run.pairs = corpus::make_pairs(run.train);
    corpus::save_pairs(out_dir / "pairs.jsonl", run.pairs);
  });
  files.push_back("pairs.jsonl");

  stage("pretrain", [&] {
    pretrain_reference(config, run);
    lm::save_checkpoint(out_dir / "reference.ckpt", run.reference);
    detail::write_file(out_dir / "pretrain_trace.json",
                       pretrain_trace_json(run.pretrain_trace));
  });
  files.insert(files.end(), {"reference.ckpt", "pretrain_trace.json"});

  PipelineSummary summary;
  stage("train-ddpo", [&] {
    if (run.pairs.empty()) {
      throw DataError("the training corpus yields no preference pair");
    }
    summary.ddpo = ddpo::train_ddpo(run.reference, run.pairs, config.ddpo);
    summary.mean_margin = ddpo::mean_reward_margin(
        summary.ddpo.policy, run.reference, run.pairs, config.ddpo.beta);
    lm::save_checkpoint(out_dir / "policy.ckpt", summary.ddpo.policy);
    detail::write_file(out_dir / "ddpo_trace.json",
                       ddpo_trace_json(summary.ddpo.trace));
  });
  files.insert(files.end(), {"policy.ckpt", "ddpo_trace.json"});

  stage("eval", [&] {
    summary.reference = evaluate(run.reference, run, config.eval);
    summary.policy = evaluate(summary.ddpo.policy, run, config.eval);
    for (auto& name : write_evaluation(out_dir, "reference", summary.reference)) {
      files.push_back(std::move(name));
    }
    for (auto& name : write_evaluation(out_dir, "policy", summary.policy)) {
      files.push_back(std::move(name));
    }
  });

  stage("manifest", [&] {
    const auto stats = corpus::corpus_stats(run.train);
    const auto& trace = summary.ddpo.trace;
    json metrics = {
        {"n_train_records", run.train.size()},
        {"n_eval_records", run.eval.size()},
        {"n_pairs", run.pairs.size()},
        {"mean_words", stats.mean_words},
        {"mean_corrected_segments", stats.mean_corrected_segments},
        {"pretrain_final_loss",
         run.pretrain_trace.empty() ? json(nullptr) : json(run.pretrain_trace.back())},
        {"ddpo_initial_loss", summary.ddpo.initial_loss},
        {"ddpo_final_loss", trace.empty() ? json(nullptr) : json(trace.back().mean_loss)},
        {"mean_reward_margin", summary.mean_margin},
        {"reference", evaluation_json(summary.reference)},
        {"policy", evaluation_json(summary.policy)},
    };
    summary.metrics_json = metrics.dump();
    write_manifest(out_dir, config, summary.metrics_json, files);
  });
  return summary;
}

std::vector<ScalingRow> run_data_scaling(const RunConfig& config,
                                         std::span<const double> fractions) {
  const PreparedRun run = prepare(config);
  return run_data_scaling(config, run, fractions);
}

std::vector<ScalingRow> run_data_scaling(const RunConfig& config,
                                         const PreparedRun& run,
                                         std::span<const double> fractions) {
  double previous = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
    if (f < previous) throw ConfigError("fractions must be sorted");
    previous = f;
  }
  std::vector<ScalingRow> rows;
  for (double f : fractions) {
    const auto n = static_cast<std::size_t>(
        std::floor(f * static_cast<double>(run.pairs.size())));
    if (n == 0) {
      std::cerr << "warning: fraction " << f << " yields no preference pair; skipped\n";
      continue;
    }
    const std::span<const corpus::PreferencePair> subset(run.pairs.data(), n);
    const auto result = ddpo::train_ddpo(run.reference, subset, config.ddpo);
    const auto ev = evaluate(result.policy, run, config.eval);
    rows.push_back({f, n, ev.report.response_level_rate, ev.report.n_false_mentions});
  }
  return rows;
}

std::string scaling_csv(std::span<const ScalingRow> rows) {
  std::ostringstream out;
  out.precision(12);
  out << "fraction,n_pairs,rate,count\n";
  for (const auto& r : rows) {
    out << r.fraction << "," << r.n_pairs << ",";
    if (r.rate) out << *r.rate;
    out << "," << r.count << "\n";
  }
  return out.str();
}

void write_manifest(const fs::path& out_dir, const RunConfig& config,
                    std::string_view metrics_json,
                    std::span<const std::string> files) {
  json listed = json::object();
  for (const auto& name : files) listed[name] = sha256_file(out_dir / name);
  const json manifest = {
      {"version", std::string(kVersion)},
      {"config_hash", config_hash(config)},
      {"seeds",
       {{"corpus", config.corpus.knobs.seed},
        {"eval_corpus", config.corpus.eval_seed},
        {"init", config.model.init_seed},
        {"pretrain", config.pretrain.seed},
        {"ddpo", config.ddpo.seed}}},
      {"metrics", json::parse(metrics_json)},
      {"files", listed},
  };
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const fs::path& out_dir) {
  json manifest;
  try {
    manifest = json::parse(detail::read_file(out_dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  auto files = manifest.find("files");
  if (files == manifest.end() || !files->is_object()) {
    throw DataError("manifest.json lacks a 'files' object");
  }
  std::vector<std::string> problems;
  for (const auto& [name, hash] : files->items()) {
    const fs::path path = out_dir / name;
    if (!fs::exists(path)) {
      problems.push_back("missing: " + name);
    } else if (!hash.is_string() || sha256_file(path) != hash.get<std::string>()) {
      problems.push_back("modified: " + name);
    }
  }
  return problems;
}

std::string pretrain_trace_json(std::span<const double> losses) {
  json arr = json::array();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    arr.push_back({{"epoch", i + 1}, {"loss", losses[i]}});
  }
  return arr.dump(2) + "\n";
}

std::string ddpo_trace_json(std::span<const ddpo::DdpoEpoch> trace) {
  json arr = json::array();
  for (const auto& e : trace) {
    arr.push_back({{"epoch", e.epoch},
                   {"mean_loss", e.mean_loss},
                   {"mean_margin", e.mean_margin}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace dpolab::pipeline
