#include "dpolab/config.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <set>

#include <json.hpp>

#include "dpolab/errors.hpp"
#include "dpolab/rng.hpp"
#include "jsonl.hpp"

namespace dpolab {

using json = nlohmann::json;

namespace {

// Reads the members of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string name = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(name + " must be a boolean");
      out = it->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned()) {
        throw ConfigError(name + " must be a non-negative integer");
      }
      out = it->get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(name + " must be a number");
      out = it->get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(name + " must be a string");
      out = it->get<std::string>();
    } else {
      if (!it->is_array()) throw ConfigError(name + " must be an array");
      out.clear();
      for (const auto& v : *it) {
        if (!v.is_number()) throw ConfigError(name + " must hold numbers");
        out.push_back(v.get<double>());
      }
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? kEmpty : *it,
                   path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError("unknown key '" + (path_.empty() ? key : path_ + "." + key) +
                          "'");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const RunConfig& c) {
  const auto& k = c.corpus.knobs;
  return json{
      {"corpus",
       {{"n_train", c.corpus.n_train},
        {"n_eval", c.corpus.n_eval},
        {"hallucination_rate", k.hallucination_rate},
        {"style_bias_rate", k.style_bias_rate},
        {"noise_rate", k.noise_rate},
        {"type_weights",
         {{"object", k.type_weights.object},
          {"position", k.type_weights.position},
          {"number", k.type_weights.number}}},
        {"seed", k.seed},
        {"eval_seed", c.corpus.eval_seed}}},
      {"model",
       {{"context_window", c.model.context_window},
        {"embed_dim", c.model.embed_dim},
        {"hidden_dim", c.model.hidden_dim},
        {"init_seed", c.model.init_seed}}},
      {"pretrain",
       {{"epochs", c.pretrain.epochs},
        {"learning_rate", c.pretrain.learning_rate},
        {"batch_size", c.pretrain.batch_size},
        {"seed", c.pretrain.seed},
        {"warmup_fraction", c.pretrain.warmup_fraction}}},
      {"ddpo",
       {{"beta", c.ddpo.beta},
        {"gamma", c.ddpo.gamma},
        {"epochs", c.ddpo.epochs},
        {"learning_rate", c.ddpo.learning_rate},
        {"batch_size", c.ddpo.batch_size},
        {"seed", c.ddpo.seed},
        {"score_mode", std::string(ddpo::to_string(c.ddpo.score_mode))},
        {"warmup_fraction", c.ddpo.warmup_fraction}}},
      {"eval",
       {{"max_new_tokens", c.eval.max_new_tokens}, {"top_k", c.eval.top_k}}},
      {"scaling", {{"fractions", c.scaling_fractions}}},
  };
}

}  // namespace

RunConfig::RunConfig() {
  pretrain.learning_rate = 1e-2;
  pretrain.seed = 4;
  ddpo.seed = 5;
}

void RunConfig::validate() const {
  corpus.knobs.validate();
  if (corpus.n_train == 0) throw ConfigError("corpus.n_train must be positive");
  if (corpus.n_eval == 0) throw ConfigError("corpus.n_eval must be positive");
  lm::ModelConfig mc{1, model.context_window, model.embed_dim, model.hidden_dim};
  mc.validate();
  pretrain.validate();
  ddpo.validate();
  if (eval.top_k == 0) throw ConfigError("eval.top_k must be positive");
  double previous = 0.0;
  for (double f : scaling_fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("scaling fractions must lie in (0, 1]");
    }
    if (f < previous) throw ConfigError("scaling fractions must be sorted");
    previous = f;
  }
}

void RunConfig::reseed(std::uint64_t master) {
  corpus.knobs.seed = derive_seed(master, "corpus");
  corpus.eval_seed = derive_seed(master, "eval-corpus");
  model.init_seed = derive_seed(master, "init");
  pretrain.seed = derive_seed(master, "pretrain");
  ddpo.seed = derive_seed(master, "ddpo");
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_json(a) == to_json(b);
}

RunConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");

  Section corpus = root.child("corpus");
  auto& k = c.corpus.knobs;
  corpus.read("n_train", c.corpus.n_train);
  corpus.read("n_eval", c.corpus.n_eval);
  corpus.read("hallucination_rate", k.hallucination_rate);
  corpus.read("style_bias_rate", k.style_bias_rate);
  corpus.read("noise_rate", k.noise_rate);
  Section types = corpus.child("type_weights");
  types.read("object", k.type_weights.object);
  types.read("position", k.type_weights.position);
  types.read("number", k.type_weights.number);
  types.finish();
  corpus.read("seed", k.seed);
  corpus.read("eval_seed", c.corpus.eval_seed);
  corpus.finish();

  Section model = root.child("model");
  model.read("context_window", c.model.context_window);
  model.read("embed_dim", c.model.embed_dim);
  model.read("hidden_dim", c.model.hidden_dim);
  model.read("init_seed", c.model.init_seed);
  model.finish();

  Section pre = root.child("pretrain");
  pre.read("epochs", c.pretrain.epochs);
  pre.read("learning_rate", c.pretrain.learning_rate);
  pre.read("batch_size", c.pretrain.batch_size);
  pre.read("seed", c.pretrain.seed);
  pre.read("warmup_fraction", c.pretrain.warmup_fraction);
  pre.finish();

  Section dd = root.child("ddpo");
  dd.read("beta", c.ddpo.beta);
  dd.read("gamma", c.ddpo.gamma);
  dd.read("epochs", c.ddpo.epochs);
  dd.read("learning_rate", c.ddpo.learning_rate);
  dd.read("batch_size", c.ddpo.batch_size);
  dd.read("seed", c.ddpo.seed);
  std::string mode(ddpo::to_string(c.ddpo.score_mode));
  dd.read("score_mode", mode);
  c.ddpo.score_mode = ddpo::parse_score_mode(mode);
  dd.read("warmup_fraction", c.ddpo.warmup_fraction);
  dd.finish();

  Section ev = root.child("eval");
  ev.read("max_new_tokens", c.eval.max_new_tokens);
  ev.read("top_k", c.eval.top_k);
  ev.finish();

  Section sc = root.child("scaling");
  sc.read("fractions", c.scaling_fractions);
  sc.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string config_json(const RunConfig& config) {
  return to_json(config).dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
  return sha256_hex(to_json(config).dump());
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(detail::read_file(path));
}

}  // namespace dpolab
