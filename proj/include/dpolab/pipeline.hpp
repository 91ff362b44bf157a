#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpolab/config.hpp"
#include "dpolab/corpus.hpp"
#include "dpolab/ddpo.hpp"
#include "dpolab/hallmetrics.hpp"
#include "dpolab/lm.hpp"
#include "dpolab/tokens.hpp"

namespace dpolab::pipeline {

/// Data and reference model shared by every policy trained from one config.
struct PreparedRun {
  std::vector<corpus::SceneSpec> scenes;
  Vocabulary vocab;
  std::vector<corpus::SampleRecord> train;
  std::vector<corpus::SampleRecord> eval;
  std::vector<corpus::PreferencePair> pairs;
  lm::ModelParameters reference;
  std::vector<double> pretrain_trace;
};

/// generate -> diff -> pretrain.
PreparedRun prepare(const RunConfig& config);

struct Evaluation {
  std::vector<hallmetrics::EvalRecord> corpus;
  hallmetrics::HallucinationReport report;
  hallmetrics::SceneAnalysis scenes;
  /// Unset when no response holds a hallucination.
  std::optional<hallmetrics::ConcentrationCurve> curve;
};

/// Greedy-decodes every evaluation prompt and scores the responses.
Evaluation evaluate(const lm::ModelParameters& params, const PreparedRun& run,
                    const EvalSettings& settings);

struct PipelineSummary {
  Evaluation reference;
  Evaluation policy;
  ddpo::DdpoResult ddpo;
  /// Mean implicit-reward margin of the final policy over the training pairs.
  double mean_margin = 0.0;
  /// The "metrics" block of the manifest, as JSON text.
  std::string metrics_json;
};

/// Runs generate -> diff -> pretrain -> train-ddpo -> eval and writes every
/// artifact plus manifest.json into `out_dir`. A failing stage is reported on
/// stderr by name and the exception is rethrown; files written so far stay.
PipelineSummary run_pipeline(const RunConfig& config,
                             const std::filesystem::path& out_dir);

struct ScalingRow {
  double fraction = 0.0;
  std::size_t n_pairs = 0;
  std::optional<double> rate;   // response-level rate of the policy
  std::size_t count = 0;        // hallucinated object mentions of the policy
};

/// Trains one policy per fraction on the first floor(fraction * |pairs|)
/// pairs. Fractions that leave no pair are skipped with a warning.
std::vector<ScalingRow> run_data_scaling(const RunConfig& config,
                                         std::span<const double> fractions);
std::vector<ScalingRow> run_data_scaling(const RunConfig& config,
                                         const PreparedRun& run,
                                         std::span<const double> fractions);
std::string scaling_csv(std::span<const ScalingRow> rows);

/// Checks every file listed in out_dir/manifest.json against its SHA-256.
/// Returns one message per missing or modified file.
std::vector<std::string> verify_manifest(const std::filesystem::path& out_dir);

/// Writes `manifest.json` listing the SHA-256 of `files` (paths relative to
/// `out_dir`).
void write_manifest(const std::filesystem::path& out_dir,
                    const RunConfig& config, std::string_view metrics_json,
                    std::span<const std::string> files);

std::string pretrain_trace_json(std::span<const double> losses);
std::string ddpo_trace_json(std::span<const ddpo::DdpoEpoch> trace);

std::vector<hallmetrics::EvalRecord> to_eval_records(
    std::span<const corpus::SampleRecord> records,
    std::span<const TokenSequence> responses);

}  // namespace dpolab::pipeline
