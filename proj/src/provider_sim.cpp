#include "difr/provider_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "difr/noise.hpp"
#include "difr/parallel.hpp"

namespace difr {
namespace {

// Child-seed tags for the independent randomness a provider consumes.
enum : std::uint64_t {
  kLogitNoise = 1,
  kActivationNoise = 2,
  kKvNoise = 3,
  kBugDecision = 4,
};

// Model-weight seed tags.
enum : std::uint64_t {
  kEmbedding = 11,
  kOutput = 12,
  kLayerBase = 100,
  kBiasBase = 200,
};

std::vector<double> gaussian_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols,
                                    double scale, int bits) {
  std::vector<double> m(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double w = scale * noise::gaussian_draw({seed, noise::Stream::gaussian, i, j});
      m[i * cols + j] = bits > 0 ? round_mantissa(w, bits) : w;
    }
  }
  return m;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("regime: malformed number '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("regime: malformed integer '" + std::string(s) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct Effective {
  SamplingSpec spec;
  ToyModelConfig toy;
  double logit_noise = 0.0;
  double activation_noise = 0.0;
  double kv_noise = 0.0;
  double bug_rate = 0.0;
  std::size_t bug_k = 0;
};

Effective effective(const ProviderConfig& p) {
  Effective e{p.spec, p.toy};
  std::visit(overloaded{
                 [](const regime::Reference&) {},
                 [&](const regime::Noisy& r) {
                   e.logit_noise = r.sigma_benign;
                   e.activation_noise = r.sigma_activation;
                 },
                 [&](const regime::TempShift& r) { e.spec.temperature += r.delta; },
                 [&](const regime::SeedShift& r) { e.spec.seed = r.seed; },
                 [&](const regime::TopPShift& r) { e.spec.top_p = r.top_p; },
                 [&](const regime::Quantized& r) { e.toy.weight_bits = r.bits; },
                 [&](const regime::KvNoise& r) { e.kv_noise = r.sigma_kv; },
                 [&](const regime::SamplingBug& r) {
                   e.bug_rate = r.rate;
                   e.bug_k = r.bug_k;
                 },
             },
             p.regime);
  return e;
}

std::vector<Token> top_tokens(std::span<const double> logits, std::size_t k) {
  std::vector<Token> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0U);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](Token a, Token b) {
                      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

std::optional<std::size_t> bug_choice(const Effective& eff, std::uint64_t bug_seed,
                                      std::uint64_t position) {
  if (eff.bug_rate <= 0.0) return std::nullopt;
  if (noise::uniform_draw({bug_seed, noise::Stream::uniform, position, 0}) >= eff.bug_rate) {
    return std::nullopt;
  }
  return noise::bounded_draw({bug_seed, noise::Stream::uniform, position, 1}, eff.bug_k);
}

std::uint64_t bug_seed_for(const ProviderConfig& p, std::uint64_t prompt_id) {
  return noise::derive_seed(noise::derive_seed(p.noise_seed, prompt_id), kBugDecision);
}

}  // namespace

std::optional<std::size_t> sampling_bug_choice(const ProviderConfig& provider,
                                               std::uint64_t prompt_id, std::uint64_t position) {
  return bug_choice(effective(provider), bug_seed_for(provider, prompt_id), position);
}

std::string_view precision_name(WeightPrecision p) {
  switch (p) {
    case WeightPrecision::full: return "full";
    case WeightPrecision::bits8: return "8";
    case WeightPrecision::bits6: return "6";
    case WeightPrecision::bits4: return "4";
  }
  return "full";
}

WeightPrecision parse_precision(std::string_view text) {
  text = trim(text);
  if (text == "full") return WeightPrecision::full;
  if (text == "8") return WeightPrecision::bits8;
  if (text == "6") return WeightPrecision::bits6;
  if (text == "4") return WeightPrecision::bits4;
  throw std::invalid_argument("weight_bits must be one of full, 8, 6, 4");
}

int mantissa_bits(WeightPrecision p) {
  switch (p) {
    case WeightPrecision::full: return 0;
    case WeightPrecision::bits8: return 8;
    case WeightPrecision::bits6: return 6;
    case WeightPrecision::bits4: return 4;
  }
  return 0;
}

double round_mantissa(double x, int bits) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  int exp = 0;
  const double m = std::frexp(x, &exp);  // |m| in [0.5, 1)
  const double scale = std::ldexp(1.0, bits + 1);
  return std::ldexp(std::round(m * scale) / scale, exp);
}

void ToyModelConfig::validate() const {
  if (vocab < 8) throw std::invalid_argument("toy model: vocab must be >= 8");
  if (hidden < 8) throw std::invalid_argument("toy model: hidden must be >= 8");
  if (layers < 1) throw std::invalid_argument("toy model: layers must be >= 1");
}

std::uint64_t ToyModelConfig::hash() const {
  std::uint64_t h = noise::mix64(model_seed);
  h = noise::derive_seed(h, vocab);
  h = noise::derive_seed(h, hidden);
  h = noise::derive_seed(h, layers);
  h = noise::derive_seed(h, static_cast<std::uint64_t>(mantissa_bits(weight_bits)));
  return h;
}

ToyModel::ToyModel(const ToyModelConfig& config) : config_(config) {
  config_.validate();
  const int bits = mantissa_bits(config_.weight_bits);
  const std::size_t d = config_.hidden;
  const std::uint64_t s = config_.model_seed;
  embedding_ = gaussian_matrix(noise::derive_seed(s, kEmbedding), config_.vocab, d, 1.0, bits);
  output_ = gaussian_matrix(noise::derive_seed(s, kOutput), config_.vocab, d, 1.0, bits);
  const double gain = kLayerGain / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    weights_.push_back(gaussian_matrix(noise::derive_seed(s, kLayerBase + l), d, d, gain, bits));
    biases_.push_back(gaussian_matrix(noise::derive_seed(s, kBiasBase + l), 1, d, 0.1, bits));
  }
}

std::vector<double> ToyModel::hidden_state(std::span<const Token> context) const {
  if (context.empty()) throw std::invalid_argument("toy model: context must be nonempty");
  const std::size_t d = config_.hidden;
  std::vector<double> h(d, 0.0);
  double weight = 1.0;
  double norm2 = 0.0;
  const std::size_t window = std::min(kContextWindow, context.size());
  for (std::size_t age = 0; age < window; ++age) {
    const Token t = context[context.size() - 1 - age];
    if (t >= config_.vocab) throw std::out_of_range("toy model: token outside vocabulary");
    const double* e = &embedding_[static_cast<std::size_t>(t) * d];
    for (std::size_t j = 0; j < d; ++j) h[j] += weight * e[j];
    norm2 += weight * weight;
    weight *= kContextDecay;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : h) x *= inv;

  std::vector<double> next(d);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto& w = weights_[l];
    const auto& b = biases_[l];
    for (std::size_t i = 0; i < d; ++i) {
      double acc = b[i];
      const double* row = &w[i * d];
      for (std::size_t j = 0; j < d; ++j) acc += row[j] * h[j];
      next[i] = std::tanh(acc);
    }
    h.swap(next);
  }
  return h;
}

std::vector<double> ToyModel::logits_from_hidden(std::span<const double> hidden) const {
  const std::size_t d = config_.hidden;
  if (hidden.size() != d) throw std::invalid_argument("toy model: hidden size mismatch");
  std::vector<double> logits(config_.vocab);
  for (std::size_t v = 0; v < config_.vocab; ++v) {
    const double* row = &output_[v * d];
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += row[j] * hidden[j];
    logits[v] = kLogitScale * acc;
  }
  return logits;
}

Forward ToyModel::forward(std::span<const Token> context) const {
  Forward f;
  f.activation = hidden_state(context);
  f.logits = logits_from_hidden(f.activation);
  return f;
}

Forward toy_forward(std::span<const Token> context, const ToyModelConfig& toy) {
  return ToyModel(toy).forward(context);
}

std::string regime_name(const Regime& r) {
  return std::visit(
      overloaded{
          [](const regime::Reference&) { return std::string("reference"); },
          [](const regime::Noisy& n) {
            return "noisy(" + format_number(n.sigma_benign) + "," +
                   format_number(n.sigma_activation) + ")";
          },
          [](const regime::TempShift& t) { return "temp_shift(" + format_number(t.delta) + ")"; },
          [](const regime::SeedShift& s) { return "seed_shift(" + std::to_string(s.seed) + ")"; },
          [](const regime::TopPShift& t) {
            return "top_p_shift(" + format_number(t.top_p) + ")";
          },
          [](const regime::Quantized& q) {
            return "quantized(" + std::string(precision_name(q.bits)) + ")";
          },
          [](const regime::KvNoise& k) { return "kv_noise(" + format_number(k.sigma_kv) + ")"; },
          [](const regime::SamplingBug& b) {
            return "sampling_bug(" + format_number(b.rate) + "," + std::to_string(b.bug_k) + ")";
          },
      },
      r);
}

Regime parse_regime(std::string_view text) {
  text = trim(text);
  std::string_view name = text;
  std::vector<std::string_view> args;
  if (const auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw std::invalid_argument("regime: missing ')' in '" + std::string(text) + "'");
    name = trim(text.substr(0, open));
    std::string_view inner = text.substr(open + 1, text.size() - open - 2);
    while (true) {
      const auto comma = inner.find(',');
      args.push_back(trim(inner.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      inner.remove_prefix(comma + 1);
    }
    if (args.size() == 1 && args[0].empty()) args.clear();
  }
  const auto want = [&](std::size_t max_args) {
    if (args.size() > max_args) {
      throw std::invalid_argument("regime: too many arguments for '" + std::string(name) + "'");
    }
  };
  if (name == "reference") {
    want(0);
    return regime::Reference{};
  }
  if (name == "noisy") {
    want(2);
    regime::Noisy n;
    if (args.size() > 0) n.sigma_benign = parse_number(args[0]);
    if (args.size() > 1) n.sigma_activation = parse_number(args[1]);
    if (n.sigma_benign < 0 || n.sigma_activation < 0) throw std::invalid_argument("regime: noise must be >= 0");
    return n;
  }
  if (name == "temp_shift") {
    want(1);
    regime::TempShift t;
    if (!args.empty()) t.delta = parse_number(args[0]);
    return t;
  }
  if (name == "seed_shift") {
    want(1);
    regime::SeedShift s;
    if (!args.empty()) s.seed = parse_unsigned(args[0]);
    return s;
  }
  if (name == "top_p_shift") {
    want(1);
    regime::TopPShift t;
    if (!args.empty()) t.top_p = parse_number(args[0]);
    if (!(t.top_p > 0.0 && t.top_p <= 1.0)) throw std::invalid_argument("regime: top_p must lie in (0, 1]");
    return t;
  }
  if (name == "quantized") {
    want(1);
    regime::Quantized q;
    if (!args.empty()) q.bits = parse_precision(args[0]);
    return q;
  }
  if (name == "kv_noise") {
    want(1);
    regime::KvNoise k;
    if (!args.empty()) k.sigma_kv = parse_number(args[0]);
    if (k.sigma_kv < 0) throw std::invalid_argument("regime: noise must be >= 0");
    return k;
  }
  if (name == "sampling_bug") {
    want(2);
    regime::SamplingBug b;
    if (args.size() > 0) b.rate = parse_number(args[0]);
    if (args.size() > 1) b.bug_k = parse_unsigned(args[1]);
    if (!(b.rate >= 0.0 && b.rate <= 1.0)) throw std::invalid_argument("regime: bug rate must lie in [0, 1]");
    if (b.bug_k == 0) throw std::invalid_argument("regime: bug_k must be >= 1");
    return b;
  }
  throw std::invalid_argument("unknown regime '" + std::string(name) + "'");
}

bool is_honest(const Regime& r) {
  return std::holds_alternative<regime::Reference>(r) || std::holds_alternative<regime::Noisy>(r);
}

SamplingSpec ProviderConfig::effective_spec() const { return effective(*this).spec; }
ToyModelConfig ProviderConfig::effective_toy() const { return effective(*this).toy; }

std::vector<std::string> config_diff(const ProviderConfig& a, const ProviderConfig& b) {
  const Effective x = effective(a);
  const Effective y = effective(b);
  std::vector<std::string> out;
  const auto check = [&](bool differs, const char* name) {
    if (differs) out.emplace_back(name);
  };
  check(x.spec.temperature != y.spec.temperature, "temperature");
  check(x.spec.top_k != y.spec.top_k, "top_k");
  check(x.spec.top_p != y.spec.top_p, "top_p");
  check(x.spec.seed != y.spec.seed, "seed");
  check(x.spec.max_margin != y.spec.max_margin, "max_margin");
  check(x.toy.model_seed != y.toy.model_seed, "model_seed");
  check(x.toy.vocab != y.toy.vocab, "vocab");
  check(x.toy.hidden != y.toy.hidden, "hidden");
  check(x.toy.layers != y.toy.layers, "layers");
  check(x.toy.weight_bits != y.toy.weight_bits, "weight_bits");
  check(x.logit_noise != y.logit_noise, "logit_noise");
  check(x.activation_noise != y.activation_noise, "activation_noise");
  check(x.kv_noise != y.kv_noise, "kv_noise");
  check(x.bug_rate != y.bug_rate || x.bug_k != y.bug_k, "sampling_bug");
  return out;
}

SamplingSpec sequence_spec(const SamplingSpec& spec, std::uint64_t prompt_id) {
  SamplingSpec s = spec;
  s.seed = noise::derive_seed(spec.seed, prompt_id);
  return s;
}

std::vector<Prompt> make_prompts(std::uint64_t seed, std::size_t count, std::size_t length,
                                 std::size_t vocab) {
  if (length == 0) throw std::invalid_argument("make_prompts: length must be >= 1");
  std::vector<Prompt> prompts(count);
  for (std::size_t i = 0; i < count; ++i) {
    prompts[i].id = i;
    prompts[i].tokens.resize(length);
    for (std::size_t j = 0; j < length; ++j) {
      prompts[i].tokens[j] = static_cast<Token>(
          noise::bounded_draw({seed, noise::Stream::uniform, i, j}, vocab));
    }
  }
  return prompts;
}

std::uint64_t logits_digest(std::span<const double> logits) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : logits) {
    std::uint64_t bits = 0;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

TokenTrace generate_trace(const ToyModel& model, const Prompt& prompt,
                          const ProviderConfig& provider, std::size_t length,
                          const GenerateOptions& options) {
  if (length == 0) throw std::invalid_argument("generate_trace: length must be >= 1");
  if (prompt.tokens.empty()) throw std::invalid_argument("generate_trace: empty prompt");
  const Effective eff = effective(provider);
  eff.spec.validate();
  if (!(model.config() == eff.toy)) {
    throw std::invalid_argument("generate_trace: model does not match the provider's config");
  }

  const SamplingSpec seq = sequence_spec(eff.spec, prompt.id);
  const std::uint64_t seq_noise = noise::derive_seed(provider.noise_seed, prompt.id);
  const std::uint64_t logit_seed = noise::derive_seed(seq_noise, kLogitNoise);
  const std::uint64_t act_seed = noise::derive_seed(seq_noise, kActivationNoise);
  const std::uint64_t kv_seed = noise::derive_seed(seq_noise, kKvNoise);
  const std::uint64_t bug_seed = bug_seed_for(provider, prompt.id);

  std::optional<Projection> projection;
  if (options.fingerprint) {
    ProjectionConfig pc = *options.fingerprint;
    if (pc.d != model.hidden()) throw std::invalid_argument("generate_trace: projection d != hidden");
    projection.emplace(pc);
  }

  TokenTrace trace;
  trace.prompt_id = prompt.id;
  trace.config_label = provider.label;
  trace.spec = eff.spec;
  trace.prompt = prompt.tokens;
  trace.tokens.reserve(length);
  if (options.record_logits_digest) trace.logits_digest.emplace();
  if (projection) trace.fingerprints = FingerprintSet{projection->config(), {}};

  std::vector<Token> context = prompt.tokens;
  context.reserve(prompt.tokens.size() + length);
  const std::size_t d = model.hidden();
  for (std::size_t t = 0; t < length; ++t) {
    auto hidden = model.hidden_state(context);
    if (eff.activation_noise > 0.0) {
      const auto xi = noise::gaussian_vector(act_seed, t, d, eff.activation_noise);
      for (std::size_t j = 0; j < d; ++j) hidden[j] += xi[j];
    }
    if (eff.kv_noise > 0.0) {
      const auto xi = noise::gaussian_vector(kv_seed, t, d, eff.kv_noise);
      for (std::size_t j = 0; j < d; ++j) hidden[j] += xi[j];
    }
    auto logits = model.logits_from_hidden(hidden);
    if (eff.logit_noise > 0.0) {
      const auto xi = noise::gaussian_vector(logit_seed, t, logits.size(), eff.logit_noise);
      for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += xi[v];
    }

    Token token = sample_gumbel_max(logits, seq, t);
    if (const auto rank = bug_choice(eff, bug_seed, t)) {
      const auto top = top_tokens(logits, eff.bug_k);
      token = top[std::min(*rank, top.size() - 1)];
    }

    if (trace.logits_digest) trace.logits_digest->push_back(logits_digest(logits));
    if (projection && t % projection->config().stride == 0) {
      trace.fingerprints->fingerprints.push_back(collect_fingerprint(hidden, *projection, t));
    }
    trace.tokens.push_back(token);
    context.push_back(token);
  }
  return trace;
}

TokenTrace generate_trace(const Prompt& prompt, const ProviderConfig& provider,
                          std::size_t length, const GenerateOptions& options) {
  const ToyModel model(provider.effective_toy());
  return generate_trace(model, prompt, provider, length, options);
}

std::vector<TokenTrace> generate_traces(std::span<const Prompt> prompts,
                                        const ProviderConfig& provider, std::size_t length,
                                        const GenerateOptions& options) {
  const ToyModel model(provider.effective_toy());
  std::vector<TokenTrace> out(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    out[i] = generate_trace(model, prompts[i], provider, length, options);
  });
  return out;
}

}  // namespace difr
