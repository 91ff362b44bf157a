#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dpolab/corpus.hpp"
#include "dpolab/ddpo.hpp"
#include "dpolab/lm.hpp"

namespace dpolab {

inline constexpr std::string_view kVersion = "0.1.0";

struct CorpusSettings {
  std::size_t n_train = 1000;
  std::size_t n_eval = 300;
  /// Generation knobs of the training corpus; the evaluation corpus uses the
  /// same knobs with `eval_seed`.
  corpus::GenerationKnobs knobs;
  std::uint64_t eval_seed = 2;
};

struct ModelSettings {
  std::size_t context_window = 3;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::uint64_t init_seed = 3;
};

struct EvalSettings {
  std::size_t max_new_tokens = 40;
  /// Objects per scene in the over-generalization analysis.
  std::size_t top_k = 10;
};

/// Everything a pipeline run depends on. Every random draw is tied to one of
/// the named seeds below.
struct RunConfig {
  CorpusSettings corpus;
  ModelSettings model;
  lm::TrainOptions pretrain;
  ddpo::DdpoConfig ddpo;
  EvalSettings eval;
  std::vector<double> scaling_fractions = {0.25, 0.5, 1.0};

  RunConfig();

  /// Throws ConfigError on any out-of-range setting.
  void validate() const;
  /// Replaces every named seed with one derived from `master`.
  void reseed(std::uint64_t master);

  friend bool operator==(const RunConfig&, const RunConfig&);
};

/// Strict JSON reader: unknown keys and wrongly typed values raise
/// ConfigError; missing keys keep their defaults.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON (sorted keys, every field present).
std::string config_json(const RunConfig& config);
/// SHA-256 of config_json, lower-case hex.
std::string config_hash(const RunConfig& config);

/// SHA-256 of a byte string / file content, lower-case hex.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dpolab
