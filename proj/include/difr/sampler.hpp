#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace difr {

using Token = std::uint32_t;

/// The full sampling specification a provider claims to follow.
struct SamplingSpec {
  double temperature = 1.0;
  std::optional<std::size_t> top_k;  // nullopt disables top-k
  double top_p = 1.0;
  std::uint64_t seed = 0;
  double max_margin = 10.0;

  friend bool operator==(const SamplingSpec&, const SamplingSpec&) = default;

  /// Throws std::invalid_argument unless T > 0, 0 < top_p <= 1, k >= 1 and
  /// max_margin > 0.
  void validate() const;
};

/// Temperature-scaled softmax; -inf entries get probability 0.
std::vector<double> softmax(std::span<const double> logits, double temperature);

/// log(sum(exp(x / temperature))) over finite entries.
double log_sum_exp(std::span<const double> logits, double temperature);

/// Top-k then top-p filtering. Removed entries become -inf. The nucleus is the
/// smallest prefix of the probability-sorted tokens whose softmax(l / T) mass,
/// computed over the unfiltered logits, reaches top_p (boundary token kept).
/// Ties in ordering go to the lower index. Entries that are already -inf count
/// as filtered; NaN or +inf input throws.
std::vector<double> apply_filters(std::span<const double> logits, const SamplingSpec& spec);

/// argmax_i (filtered_i + T * gumbel_i), ties to the lowest index.
Token gumbel_argmax(std::span<const double> filtered, double temperature,
                    std::span<const double> gumbel);

/// Gumbel-Max sampling with the noise drawn from (spec.seed, position).
Token sample_gumbel_max(std::span<const double> logits, const SamplingSpec& spec,
                        std::uint64_t position);

/// Same with caller-supplied Gumbel noise (one entry per vocabulary lane).
Token sample_gumbel_max(std::span<const double> logits, const SamplingSpec& spec,
                        std::span<const double> gumbel);

/// Inverse-probability-transform sampling: smallest t with C_t > u.
/// Throws std::invalid_argument when probs has negative entries or does not
/// sum to 1 within 1e-9, or when u is outside [0, 1).
Token sample_ipt(std::span<const double> probs, double u);

}  // namespace difr
