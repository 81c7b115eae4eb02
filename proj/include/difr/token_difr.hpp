#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "difr/sampler.hpp"

namespace difr {

/// Per-token divergence scores for one claimed token. Infinite values are
/// kept as +inf in memory; the serialized form carries explicit flags.
struct ScoreRecord {
  std::size_t position = 0;
  Token claimed_token = 0;
  Token verifier_token = 0;
  double margin = 0.0;          // post-Gumbel logit gap, +inf when filtered
  double clipped_margin = 0.0;  // min(margin, max_margin)
  bool exact_match = true;
  double cross_entropy = 0.0;   // +inf when the claimed token was filtered
  double likelihood = 0.0;
  std::optional<double> mc_likelihood;
  bool filtered_out = false;

  bool margin_infinite() const;
  bool cross_entropy_infinite() const;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct MarginResult {
  double margin = 0.0;
  double clipped = 0.0;
  Token verifier_token = 0;
  bool filtered_out = false;
};

/// Post-Gumbel logit difference between the verifier's token and the claimed
/// token under the shared noise for (spec.seed, position).
MarginResult margin_score(std::span<const double> logits, Token claimed,
                          const SamplingSpec& spec, std::uint64_t position);

/// Same with caller-supplied Gumbel noise.
MarginResult margin_score(std::span<const double> logits, Token claimed,
                          const SamplingSpec& spec, std::span<const double> gumbel);

/// 1 when the claimed token is what the verifier samples, else 0.
int exact_match_score(std::span<const double> logits, Token claimed,
                      const SamplingSpec& spec, std::uint64_t position);

/// log Phi(-margin / sigma_noise). An infinite margin maps to the floor
/// log Phi(-max_margin / sigma_noise).
double likelihood_score(double margin, double sigma_noise, double max_margin = 10.0);

/// -log softmax(l / T)[claimed] over the unfiltered logits; +inf when the
/// claimed token does not survive top-k/top-p.
double cross_entropy_score(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec);

struct McOptions {
  double sigma_noise = 0.08;
  std::size_t trials = 1000;
  std::size_t top_m = 100;
  double epsilon = 1e-9;
  std::uint64_t noise_seed = 0x6d63'6e6f'6973'6531ULL;
};

/// Monte Carlo likelihood: fraction of Gaussian logit perturbations (restricted
/// to the top_m logits) under which the full sampler reproduces the claimed
/// token, returned as log(hit_rate + epsilon). Trial noise is keyed by
/// (noise_seed, position, trial), so the result does not depend on schedule.
double mc_likelihood_score(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec, std::uint64_t position,
                           const McOptions& options);

/// Hit rate behind mc_likelihood_score, exposed for statistical checks.
double mc_hit_rate(std::span<const double> logits, Token claimed, const SamplingSpec& spec,
                   std::uint64_t position, const McOptions& options);

/// Gaussian-kernel likelihood of the claimed token's CDF interval around the
/// shared uniform u for IPT sampling.
double ipt_likelihood_score(std::span<const double> probs, Token claimed, double u,
                            double sigma_noise, double epsilon = 1e-9);

struct ScoreOptions {
  double likelihood_sigma = 0.08;
  bool compute_mc = false;
  McOptions mc;
};

/// Every Token-DiFR metric for one position, sharing one filter pass and one
/// Gumbel draw.
ScoreRecord score_position(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec, std::uint64_t position,
                           const ScoreOptions& options = {});

}  // namespace difr
