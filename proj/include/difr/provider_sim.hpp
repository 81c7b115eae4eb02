#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "difr/activation_difr.hpp"
#include "difr/sampler.hpp"

namespace difr {

enum class WeightPrecision { full, bits8, bits6, bits4 };

std::string_view precision_name(WeightPrecision p);
WeightPrecision parse_precision(std::string_view text);
/// Mantissa bits kept below the leading bit; 0 for full precision.
int mantissa_bits(WeightPrecision p);

/// Rounds x to `bits` fractional mantissa bits (round half away from zero).
double round_mantissa(double x, int bits);

struct ToyModelConfig {
  std::uint64_t model_seed = 1;
  std::size_t vocab = 256;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  WeightPrecision weight_bits = WeightPrecision::full;

  friend bool operator==(const ToyModelConfig&, const ToyModelConfig&) = default;
  void validate() const;
  /// Stable 64-bit digest of the configuration, written into trace headers.
  std::uint64_t hash() const;
};

struct Forward {
  std::vector<double> logits;
  std::vector<double> activation;
};

/// Deterministic stand-in for an LLM forward pass. The last kContextWindow
/// tokens are embedded with geometric decay, mixed through `layers` tanh
/// layers, and read out by an output matrix. The final hidden state is the
/// activation that fingerprints are taken from.
class ToyModel {
 public:
  static constexpr std::size_t kContextWindow = 8;
  static constexpr double kContextDecay = 0.6;
  static constexpr double kLayerGain = 1.2;
  // Sets how peaked next-token distributions are, and with it how often
  // benign noise pushes a sampled token out of the nucleus.
  static constexpr double kLogitScale = 3.0;

  explicit ToyModel(const ToyModelConfig& config);

  const ToyModelConfig& config() const { return config_; }
  std::size_t vocab() const { return config_.vocab; }
  std::size_t hidden() const { return config_.hidden; }

  /// Final hidden state for the next-token prediction after `context`.
  std::vector<double> hidden_state(std::span<const Token> context) const;
  std::vector<double> logits_from_hidden(std::span<const double> hidden) const;
  Forward forward(std::span<const Token> context) const;

 private:
  ToyModelConfig config_;
  std::vector<double> embedding_;             // vocab x hidden
  std::vector<std::vector<double>> weights_;  // layers x (hidden x hidden)
  std::vector<std::vector<double>> biases_;   // layers x hidden
  std::vector<double> output_;                // vocab x hidden
};

/// Convenience wrapper that builds the model for one call.
Forward toy_forward(std::span<const Token> context, const ToyModelConfig& toy);

/// Benign noise defaults. kDefaultSigmaBenign is the output of
/// difr_calibrate_noise for a 0.98 honest exact-match rate (160 prompts x 256
/// tokens, run seed 7).
inline constexpr double kDefaultSigmaBenign = 0.189;
inline constexpr double kDefaultSigmaActivation = 0.002;
inline constexpr double kDefaultSigmaKv = 0.003;

namespace regime {
struct Reference {};
/// Benign numerical noise: Gaussian on the logits, plus a small Gaussian
/// jitter on the final hidden state so activation fingerprints also carry a
/// benign noise floor.
struct Noisy {
  double sigma_benign = kDefaultSigmaBenign;
  double sigma_activation = kDefaultSigmaActivation;
};
struct TempShift { double delta = 0.1; };
struct SeedShift { std::uint64_t seed = 43; };
struct TopPShift { double top_p = 0.85; };
struct Quantized { WeightPrecision bits = WeightPrecision::bits4; };
struct KvNoise { double sigma_kv = kDefaultSigmaKv; };
struct SamplingBug {
  double rate = 0.01;
  std::size_t bug_k = 2;
};
}  // namespace regime

using Regime = std::variant<regime::Reference, regime::Noisy, regime::TempShift,
                            regime::SeedShift, regime::TopPShift, regime::Quantized,
                            regime::KvNoise, regime::SamplingBug>;

/// Canonical text form, e.g. "reference", "noisy(0.02,0.001)", "quantized(4)",
/// "sampling_bug(0.01,2)".
std::string regime_name(const Regime& r);
/// Parses the canonical form; bare names take the default parameters.
/// Throws std::invalid_argument on unknown names or malformed arguments.
Regime parse_regime(std::string_view text);
bool is_honest(const Regime& r);

struct ProviderConfig {
  ToyModelConfig toy;
  SamplingSpec spec;
  Regime regime = regime::Reference{};
  std::string label = "reference";
  std::uint64_t noise_seed = 0x5eed;

  /// Sampling spec after the regime's modification.
  SamplingSpec effective_spec() const;
  /// Model config after the regime's modification.
  ToyModelConfig effective_toy() const;
};

/// Names of the effective generation parameters on which two providers differ.
std::vector<std::string> config_diff(const ProviderConfig& a, const ProviderConfig& b);

/// Rank within the provider's top bug_k tokens that replaces the sampled token
/// at (prompt_id, position), or nullopt when the sampling bug does not fire
/// there (always nullopt outside the sampling_bug regime).
std::optional<std::size_t> sampling_bug_choice(const ProviderConfig& provider,
                                               std::uint64_t prompt_id, std::uint64_t position);

/// Per-sequence seed derivation shared by provider and verifier.
SamplingSpec sequence_spec(const SamplingSpec& spec, std::uint64_t prompt_id);

struct FingerprintSet {
  ProjectionConfig config;
  std::vector<Fingerprint> fingerprints;

  friend bool operator==(const FingerprintSet&, const FingerprintSet&) = default;
};

struct TokenTrace {
  std::uint64_t prompt_id = 0;
  std::string config_label;
  SamplingSpec spec;
  std::vector<Token> prompt;
  std::vector<Token> tokens;
  std::optional<std::vector<std::uint64_t>> logits_digest;
  std::optional<FingerprintSet> fingerprints;

  friend bool operator==(const TokenTrace&, const TokenTrace&) = default;
};

struct Prompt {
  std::uint64_t id = 0;
  std::vector<Token> tokens;
};

/// Seeded synthetic prompts, uniform over the vocabulary.
std::vector<Prompt> make_prompts(std::uint64_t seed, std::size_t count, std::size_t length,
                                 std::size_t vocab);

struct GenerateOptions {
  std::optional<ProjectionConfig> fingerprint;
  bool record_logits_digest = false;
};

/// FNV-1a over the IEEE bits of a logit vector.
std::uint64_t logits_digest(std::span<const double> logits);

/// Autoregressive generation under a provider configuration. `model` must
/// have been built from provider.effective_toy().
TokenTrace generate_trace(const ToyModel& model, const Prompt& prompt,
                          const ProviderConfig& provider, std::size_t length,
                          const GenerateOptions& options = {});

TokenTrace generate_trace(const Prompt& prompt, const ProviderConfig& provider,
                          std::size_t length, const GenerateOptions& options = {});

/// Generates one trace per prompt, parallel across prompts.
std::vector<TokenTrace> generate_traces(std::span<const Prompt> prompts,
                                        const ProviderConfig& provider, std::size_t length,
                                        const GenerateOptions& options = {});

}  // namespace difr
