#include "difr/token_difr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "difr/noise.hpp"
#include "difr/normal.hpp"

namespace difr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_claimed(std::span<const double> logits, Token claimed) {
  if (claimed >= logits.size()) {
    throw std::out_of_range("claimed token index exceeds vocabulary size");
  }
}

MarginResult margin_from_filtered(std::span<const double> filtered, Token claimed,
                                  const SamplingSpec& spec, std::span<const double> gumbel) {
  MarginResult r;
  r.verifier_token = gumbel_argmax(filtered, spec.temperature, gumbel);
  if (filtered[claimed] == -kInf) {
    r.filtered_out = true;
    r.margin = kInf;
    r.clipped = spec.max_margin;
    return r;
  }
  const double z_best = filtered[r.verifier_token] + spec.temperature * gumbel[r.verifier_token];
  const double z_claimed = filtered[claimed] + spec.temperature * gumbel[claimed];
  r.margin = r.verifier_token == claimed ? 0.0 : z_best - z_claimed;
  r.clipped = std::min(r.margin, spec.max_margin);
  return r;
}

}  // namespace

bool ScoreRecord::margin_infinite() const { return std::isinf(margin); }
bool ScoreRecord::cross_entropy_infinite() const { return std::isinf(cross_entropy); }

MarginResult margin_score(std::span<const double> logits, Token claimed,
                          const SamplingSpec& spec, std::span<const double> gumbel) {
  check_claimed(logits, claimed);
  const auto filtered = apply_filters(logits, spec);
  return margin_from_filtered(filtered, claimed, spec, gumbel);
}

MarginResult margin_score(std::span<const double> logits, Token claimed,
                          const SamplingSpec& spec, std::uint64_t position) {
  const auto gumbel = noise::gumbel_vector(spec.seed, position, logits.size());
  return margin_score(logits, claimed, spec, gumbel);
}

int exact_match_score(std::span<const double> logits, Token claimed, const SamplingSpec& spec,
                      std::uint64_t position) {
  return margin_score(logits, claimed, spec, position).verifier_token == claimed ? 1 : 0;
}

double likelihood_score(double margin, double sigma_noise, double max_margin) {
  if (!(sigma_noise > 0.0)) throw std::invalid_argument("likelihood_score: sigma must be > 0");
  if (std::isinf(margin)) return stats::log_normal_cdf(-max_margin / sigma_noise);
  return stats::log_normal_cdf(-margin / sigma_noise);
}

double cross_entropy_score(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec) {
  check_claimed(logits, claimed);
  const auto filtered = apply_filters(logits, spec);
  if (filtered[claimed] == -kInf) return kInf;
  const double ce = log_sum_exp(logits, spec.temperature) - logits[claimed] / spec.temperature;
  return std::isfinite(ce) ? std::max(ce, 0.0) : kInf;
}

double mc_hit_rate(std::span<const double> logits, Token claimed, const SamplingSpec& spec,
                   std::uint64_t position, const McOptions& options) {
  check_claimed(logits, claimed);
  if (options.trials == 0) throw std::invalid_argument("mc_likelihood: trials must be >= 1");
  if (options.top_m == 0) throw std::invalid_argument("mc_likelihood: top_m must be >= 1");
  if (!(options.sigma_noise >= 0.0)) throw std::invalid_argument("mc_likelihood: sigma must be >= 0");

  // Work on the compacted top-m slice; everything else is -inf.
  std::vector<std::uint32_t> top(logits.size());
  std::iota(top.begin(), top.end(), 0U);
  const std::size_t m = std::min(options.top_m, logits.size());
  std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(m), top.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
                    });
  top.resize(m);
  // Restore vocabulary order so tie-breaking matches the full sampler.
  std::sort(top.begin(), top.end());
  const auto it = std::find(top.begin(), top.end(), claimed);
  if (it == top.end()) return 0.0;
  const auto claimed_slot = static_cast<Token>(it - top.begin());

  const auto gumbel_full = noise::gumbel_vector(spec.seed, position, logits.size());
  std::vector<double> gumbel(m);
  std::vector<double> base(m);
  for (std::size_t j = 0; j < m; ++j) {
    gumbel[j] = gumbel_full[top[j]];
    base[j] = logits[top[j]];
  }

  const std::uint64_t trial_seed = noise::derive_seed(options.noise_seed, position);
  std::size_t hits = 0;
  std::vector<double> perturbed(m);
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    for (std::size_t j = 0; j < m; ++j) {
      const double xi =
          options.sigma_noise == 0.0
              ? 0.0
              : options.sigma_noise *
                    noise::gaussian_draw({trial_seed, noise::Stream::gaussian, trial, top[j]});
      perturbed[j] = base[j] + xi;
    }
    if (sample_gumbel_max(perturbed, spec, gumbel) == claimed_slot) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(options.trials);
}

double mc_likelihood_score(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec, std::uint64_t position,
                           const McOptions& options) {
  return std::log(mc_hit_rate(logits, claimed, spec, position, options) + options.epsilon);
}

double ipt_likelihood_score(std::span<const double> probs, Token claimed, double u,
                            double sigma_noise, double epsilon) {
  if (!(sigma_noise > 0.0)) throw std::invalid_argument("ipt_likelihood: sigma must be > 0");
  if (claimed >= probs.size()) throw std::out_of_range("ipt_likelihood: claimed token out of range");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("ipt_likelihood: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("ipt_likelihood: probabilities must sum to 1");
  double lower = 0.0;
  for (Token t = 0; t < claimed; ++t) lower += probs[t];
  const double upper = lower + probs[claimed];
  const double mass = stats::normal_cdf((upper - u) / sigma_noise) -
                      stats::normal_cdf((lower - u) / sigma_noise);
  return std::log(std::max(mass, 0.0) + epsilon);
}

ScoreRecord score_position(std::span<const double> logits, Token claimed,
                           const SamplingSpec& spec, std::uint64_t position,
                           const ScoreOptions& options) {
  check_claimed(logits, claimed);
  const auto gumbel = noise::gumbel_vector(spec.seed, position, logits.size());
  const auto filtered = apply_filters(logits, spec);
  const MarginResult m = margin_from_filtered(filtered, claimed, spec, gumbel);

  ScoreRecord r;
  r.position = position;
  r.claimed_token = claimed;
  r.verifier_token = m.verifier_token;
  r.margin = m.margin;
  r.clipped_margin = m.clipped;
  r.filtered_out = m.filtered_out;
  r.exact_match = m.verifier_token == claimed;
  if (m.filtered_out) {
    r.cross_entropy = kInf;
  } else {
    const double ce = log_sum_exp(logits, spec.temperature) - logits[claimed] / spec.temperature;
    r.cross_entropy = std::isfinite(ce) ? std::max(ce, 0.0) : kInf;
  }
  r.likelihood = likelihood_score(m.margin, options.likelihood_sigma, spec.max_margin);
  if (options.compute_mc) {
    r.mc_likelihood = mc_likelihood_score(logits, claimed, spec, position, options.mc);
  }
  return r;
}

}  // namespace difr
