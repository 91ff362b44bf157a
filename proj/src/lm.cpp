#include "dpolab/lm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "dpolab/errors.hpp"
#include "dpolab/rng.hpp"

namespace dpolab::lm {
namespace {

// Scratch space for one position's forward pass.
struct Activations {
  std::vector<TokenId> context;
  std::vector<double> x;
  std::vector<double> hidden;
  std::vector<double> log_probs;  // full distribution
  std::vector<double> dlogits;
  std::vector<double> dhidden;

  explicit Activations(const ModelConfig& c)
      : context(c.context_window),
        x(c.context_window * c.embed_dim),
        hidden(c.hidden_dim),
        log_probs(c.vocab_size),
        dlogits(c.vocab_size),
        dhidden(c.hidden_dim) {}
};

void check_ids(const ModelConfig& config, std::span<const TokenId> ids) {
  for (TokenId t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) {
      throw DomainError("token id " + std::to_string(t) +
                        " outside vocabulary of size " +
                        std::to_string(config.vocab_size));
    }
  }
}

// Context of response position i: last k tokens of prompt ++ response[0, i).
void fill_context(std::span<const TokenId> prompt,
                  std::span<const TokenId> response, std::size_t i,
                  std::vector<TokenId>& context) {
  const std::size_t k = context.size();
  const std::size_t history = prompt.size() + i;
  for (std::size_t j = 0; j < k; ++j) {
    // Slot j holds history position (history - k + j).
    if (history + j < k) {
      context[j] = kPadId;
      continue;
    }
    const std::size_t pos = history + j - k;
    context[j] = pos < prompt.size() ? prompt[pos] : response[pos - prompt.size()];
  }
}

void forward(const ModelParameters& p, Activations& a) {
  const ModelConfig& c = p.config();
  const std::size_t d = c.embed_dim;
  const std::size_t h = c.hidden_dim;
  const std::size_t V = c.vocab_size;
  const auto emb = p.embeddings();
  for (std::size_t j = 0; j < c.context_window; ++j) {
    const double* row = emb.data() + static_cast<std::size_t>(a.context[j]) * d;
    std::copy(row, row + d, a.x.begin() + static_cast<std::ptrdiff_t>(j * d));
  }

  const auto wh = p.hidden_weights();
  const auto bh = p.hidden_bias();
  std::copy(bh.begin(), bh.end(), a.hidden.begin());
  for (std::size_t r = 0; r < a.x.size(); ++r) {
    const double xr = a.x[r];
    const double* row = wh.data() + r * h;
    for (std::size_t u = 0; u < h; ++u) a.hidden[u] += xr * row[u];
  }
  for (auto& v : a.hidden) v = std::tanh(v);

  const auto wo = p.output_weights();
  const auto bo = p.output_bias();
  std::copy(bo.begin(), bo.end(), a.log_probs.begin());
  for (std::size_t u = 0; u < h; ++u) {
    const double hu = a.hidden[u];
    const double* row = wo.data() + u * V;
    for (std::size_t v = 0; v < V; ++v) a.log_probs[v] += hu * row[v];
  }
  // Stable log-softmax.
  const double peak = *std::max_element(a.log_probs.begin(), a.log_probs.end());
  double total = 0.0;
  for (double l : a.log_probs) total += std::exp(l - peak);
  const double log_norm = peak + std::log(total);
  for (auto& l : a.log_probs) l -= log_norm;
}

// Adds coeff * d log p(target) / d theta.
void backward(const ModelParameters& p, Activations& a, TokenId target,
              double coeff, ModelParameters& grad) {
  const ModelConfig& c = p.config();
  const std::size_t d = c.embed_dim;
  const std::size_t h = c.hidden_dim;
  const std::size_t V = c.vocab_size;

  for (std::size_t v = 0; v < V; ++v) {
    a.dlogits[v] = -coeff * std::exp(a.log_probs[v]);
  }
  a.dlogits[static_cast<std::size_t>(target)] += coeff;

  const auto wo = p.output_weights();
  auto gwo = grad.output_weights();
  auto gbo = grad.output_bias();
  for (std::size_t v = 0; v < V; ++v) gbo[v] += a.dlogits[v];
  for (std::size_t u = 0; u < h; ++u) {
    const double hu = a.hidden[u];
    const double* row = wo.data() + u * V;
    double* grow = gwo.data() + u * V;
    double acc = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      grow[v] += hu * a.dlogits[v];
      acc += row[v] * a.dlogits[v];
    }
    a.dhidden[u] = acc * (1.0 - hu * hu);
  }

  const auto wh = p.hidden_weights();
  auto gwh = grad.hidden_weights();
  auto gbh = grad.hidden_bias();
  auto gemb = grad.embeddings();
  for (std::size_t u = 0; u < h; ++u) gbh[u] += a.dhidden[u];
  for (std::size_t r = 0; r < a.x.size(); ++r) {
    const double xr = a.x[r];
    const double* row = wh.data() + r * h;
    double* grow = gwh.data() + r * h;
    double dx = 0.0;
    for (std::size_t u = 0; u < h; ++u) {
      grow[u] += xr * a.dhidden[u];
      dx += row[u] * a.dhidden[u];
    }
    const std::size_t slot = r / d;
    gemb[static_cast<std::size_t>(a.context[slot]) * d + r % d] += dx;
  }
}

void put_bytes(std::string& out, std::uint64_t value, int n) {
  for (int i = 0; i < n; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

std::uint64_t get_bytes(const unsigned char* in, int n) {
  std::uint64_t value = 0;
  for (int i = 0; i < n; ++i) value |= std::uint64_t{in[i]} << (8 * i);
  return value;
}

constexpr char kMagic[8] = {'D', 'P', 'O', 'L', 'A', 'B', 'L', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 4 * 8;

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || context_window == 0 || embed_dim == 0 ||
      hidden_dim == 0) {
    throw ConfigError("model dimensions must all be positive");
  }
}

std::size_t ModelConfig::parameter_count() const {
  return vocab_size * embed_dim + context_window * embed_dim * hidden_dim +
         hidden_dim + hidden_dim * vocab_size + vocab_size;
}

ModelParameters::ModelParameters(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t sizes[5] = {
      config.vocab_size * config.embed_dim,
      config.context_window * config.embed_dim * config.hidden_dim,
      config.hidden_dim, config.hidden_dim * config.vocab_size,
      config.vocab_size};
  offsets_[0] = 0;
  for (int i = 0; i < 5; ++i) offsets_[i + 1] = offsets_[i] + sizes[i];
  values_.assign(offsets_[5], 0.0);
}

std::span<double> ModelParameters::block(std::size_t i) {
  return std::span<double>(values_).subspan(offsets_[i],
                                            offsets_[i + 1] - offsets_[i]);
}

std::span<const double> ModelParameters::block(std::size_t i) const {
  return std::span<const double>(values_).subspan(
      offsets_[i], offsets_[i + 1] - offsets_[i]);
}

void ModelParameters::fill(double value) {
  std::fill(values_.begin(), values_.end(), value);
}

bool ModelParameters::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool ModelParameters::bitwise_equal(const ModelParameters& other) const {
  return config_ == other.config_ && values_.size() == other.values_.size() &&
         std::memcmp(values_.data(), other.values_.data(),
                     values_.size() * sizeof(double)) == 0;
}

ModelParameters initialize_parameters(const ModelConfig& config,
                                      std::uint64_t seed) {
  ModelParameters params(config);
  Rng rng(derive_seed(seed, "lm-init"));
  for (auto block : {params.embeddings(), params.hidden_weights(),
                     params.output_weights()}) {
    for (auto& w : block) w = rng.uniform(-0.1, 0.1);
  }
  return params;
}

TokenLogProbs token_log_probs(const ModelParameters& params,
                              std::span<const TokenId> prompt,
                              std::span<const TokenId> response) {
  check_ids(params.config(), prompt);
  check_ids(params.config(), response);
  Activations a(params.config());
  TokenLogProbs out(response.size());
  for (std::size_t i = 0; i < response.size(); ++i) {
    fill_context(prompt, response, i, a.context);
    forward(params, a);
    out[i] = a.log_probs[static_cast<std::size_t>(response[i])];
  }
  return out;
}

std::vector<double> next_token_log_distribution(
    const ModelParameters& params, std::span<const TokenId> history) {
  check_ids(params.config(), history);
  Activations a(params.config());
  fill_context(history, {}, 0, a.context);
  forward(params, a);
  return a.log_probs;
}

double sequence_log_prob(const ModelParameters& params,
                         std::span<const TokenId> prompt,
                         std::span<const TokenId> response) {
  if (response.empty()) throw DomainError("cannot score an empty response");
  const auto lp = token_log_probs(params, prompt, response);
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

TokenLogProbs accumulate_log_prob_gradient(const ModelParameters& params,
                                           std::span<const TokenId> prompt,
                                           std::span<const TokenId> response,
                                           std::span<const double> coefficients,
                                           ModelParameters& grad) {
  if (coefficients.size() != response.size()) {
    throw DomainError("one coefficient per response token is required");
  }
  if (!(grad.config() == params.config())) {
    throw DomainError("gradient buffer shape does not match the model");
  }
  check_ids(params.config(), prompt);
  check_ids(params.config(), response);
  Activations a(params.config());
  TokenLogProbs out(response.size());
  for (std::size_t i = 0; i < response.size(); ++i) {
    fill_context(prompt, response, i, a.context);
    forward(params, a);
    out[i] = a.log_probs[static_cast<std::size_t>(response[i])];
    if (coefficients[i] != 0.0) {
      backward(params, a, response[i], coefficients[i], grad);
    }
  }
  return out;
}

TokenSequence greedy_decode(const ModelParameters& params,
                            std::span<const TokenId> prompt,
                            std::size_t max_new_tokens, TokenId eos) {
  check_ids(params.config(), prompt);
  Activations a(params.config());
  TokenSequence response;
  while (response.size() < max_new_tokens) {
    fill_context(prompt, response, response.size(), a.context);
    forward(params, a);
    const auto best = std::max_element(a.log_probs.begin(), a.log_probs.end());
    const auto next = static_cast<TokenId>(best - a.log_probs.begin());
    response.push_back(next);
    if (next == eos) break;
  }
  return response;
}

double ZeroObjective::value_and_gradient(const ModelParameters& params,
                                         ModelParameters& grad) const {
  grad = ModelParameters(params.config());
  return 0.0;
}

double CrossEntropyObjective::value(const ModelParameters& params) const {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples_) {
    for (double lp : token_log_probs(params, ex.prompt, ex.response)) nll -= lp;
    tokens += ex.response.size();
  }
  if (tokens == 0) throw DomainError("cross-entropy over zero tokens");
  return nll / static_cast<double>(tokens);
}

double CrossEntropyObjective::value_and_gradient(const ModelParameters& params,
                                                 ModelParameters& grad) const {
  grad = ModelParameters(params.config());
  std::size_t tokens = 0;
  for (const auto& ex : examples_) tokens += ex.response.size();
  if (tokens == 0) throw DomainError("cross-entropy over zero tokens");
  const double scale = -1.0 / static_cast<double>(tokens);
  double nll = 0.0;
  std::vector<double> coeffs;
  for (const auto& ex : examples_) {
    coeffs.assign(ex.response.size(), scale);
    for (double lp : accumulate_log_prob_gradient(params, ex.prompt,
                                                  ex.response, coeffs, grad)) {
      nll -= lp;
    }
  }
  return nll / static_cast<double>(tokens);
}

ModelParameters grad_scalar(const ModelParameters& params,
                            const ScalarObjective& objective) {
  ModelParameters grad(params.config());
  objective.value_and_gradient(params, grad);
  return grad;
}

AdamOptimizer::AdamOptimizer(const ModelConfig& config, AdamOptions options)
    : options_(options),
      m_(config.parameter_count(), 0.0),
      v_(config.parameter_count(), 0.0) {}

void AdamOptimizer::step(ModelParameters& params, const ModelParameters& grad,
                         double learning_rate) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto w = params.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
    w[i] -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.epsilon);
  }
}

double warmup_learning_rate(double base, std::size_t step,
                            std::size_t total_steps, double warmup_fraction) {
  const double warmup =
      std::ceil(warmup_fraction * static_cast<double>(total_steps));
  if (warmup <= 0.0 || static_cast<double>(step) >= warmup) return base;
  return base * static_cast<double>(step + 1) / warmup;
}

void TrainOptions::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("warmup fraction must lie in [0, 1]");
  }
}

PretrainResult pretrain(std::span<const LmExample> corpus, ModelParameters init,
                        const TrainOptions& options) {
  if (corpus.empty()) throw DomainError("pretraining corpus is empty");
  options.validate();
  PretrainResult result{std::move(init), {}};
  ModelParameters& params = result.params;
  AdamOptimizer adam(params.config());

  const std::size_t n = corpus.size();
  const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = batches * options.epochs;
  std::vector<std::size_t> order(n);
  std::vector<LmExample> batch;
  ModelParameters grad(params.config());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(options.seed, "pretrain-shuffle", epoch));
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      batch.clear();
      const std::size_t end = std::min(n, (b + 1) * options.batch_size);
      for (std::size_t i = b * options.batch_size; i < end; ++i) {
        batch.push_back(corpus[order[i]]);
      }
      const double loss =
          CrossEntropyObjective(batch).value_and_gradient(params, grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw TrainingDivergence(step, "non-finite cross-entropy");
      }
      epoch_loss += loss;
      adam.step(params, grad,
                warmup_learning_rate(options.learning_rate, step, total_steps,
                                     options.warmup_fraction));
      ++step;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParameters& params) {
  std::string out(kMagic, sizeof kMagic);
  put_bytes(out, kCheckpointVersion, 4);
  put_bytes(out, 0, 4);
  const ModelConfig& c = params.config();
  for (std::size_t dim : {c.vocab_size, c.context_window, c.embed_dim, c.hidden_dim}) {
    put_bytes(out, dim, 8);
  }
  for (double v : params.values()) put_bytes(out, std::bit_cast<std::uint64_t>(v), 8);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("write failed for checkpoint " + path.string());
}

ModelParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a model checkpoint");
  }
  const auto version = get_bytes(bytes.data() + 8, 4);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  config.vocab_size = get_bytes(bytes.data() + 16, 8);
  config.context_window = get_bytes(bytes.data() + 24, 8);
  config.embed_dim = get_bytes(bytes.data() + 32, 8);
  config.hidden_dim = get_bytes(bytes.data() + 40, 8);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  ModelParameters params(config);
  auto values = params.values();
  if (bytes.size() != kHeaderBytes + values.size() * 8) {
    throw DataError(path.string() + ": payload size does not match header");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<double>(get_bytes(bytes.data() + kHeaderBytes + 8 * i, 8));
  }
  return params;
}

}  // namespace dpolab::lm
