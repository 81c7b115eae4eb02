#include "difr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "difr/noise.hpp"

namespace difr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Cumulative mass counts as having reached top_p within this relative slack,
// so an exactly representable boundary like 0.5 + 0.3 == 0.8 is not lost to
// rounding in the normalizer.
constexpr double kNucleusSlack = 1e-12;

double finite_max(std::span<const double> logits) {
  double m = kNegInf;
  for (double v : logits) {
    if (v > m) m = v;
  }
  return m;
}

}  // namespace

void SamplingSpec::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("sampling spec: temperature must be > 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("sampling spec: top_p must lie in (0, 1]");
  }
  if (top_k && *top_k == 0) throw std::invalid_argument("sampling spec: top_k must be >= 1");
  if (!(max_margin > 0.0)) throw std::invalid_argument("sampling spec: max_margin must be > 0");
}

double log_sum_exp(std::span<const double> logits, double temperature) {
  const double m = finite_max(logits);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : logits) {
    if (v != kNegInf) acc += std::exp((v - m) / temperature);
  }
  return m / temperature + std::log(acc);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.size(), 0.0);
  const double m = finite_max(logits);
  if (m == kNegInf) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] != kNegInf) {
      out[i] = std::exp((logits[i] - m) / temperature);
      acc += out[i];
    }
  }
  for (double& p : out) p /= acc;
  return out;
}

std::vector<double> apply_filters(std::span<const double> logits, const SamplingSpec& spec) {
  std::vector<std::uint32_t> order;
  order.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits[i];
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("apply_filters: logits must be finite or -inf");
    }
    if (v != kNegInf) order.push_back(static_cast<std::uint32_t>(i));
  }
  if (order.empty()) throw std::invalid_argument("apply_filters: no finite logits");

  const auto by_logit = [&](std::uint32_t a, std::uint32_t b) {
    return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
  };
  std::size_t keep = order.size();
  if (spec.top_k && *spec.top_k < keep) {
    keep = *spec.top_k;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                      order.end(), by_logit);
  } else {
    std::sort(order.begin(), order.end(), by_logit);
  }

  if (spec.top_p < 1.0) {
    const double lse = log_sum_exp(logits, spec.temperature);
    const double target = spec.top_p * (1.0 - kNucleusSlack);
    double mass = 0.0;
    std::size_t nucleus = 0;
    while (nucleus < keep) {
      mass += std::exp(logits[order[nucleus]] / spec.temperature - lse);
      ++nucleus;
      if (mass >= target) break;
    }
    keep = nucleus;
  }

  std::vector<double> out(logits.size(), kNegInf);
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = logits[order[i]];
  if (keep == 0) throw std::logic_error("apply_filters: every token was filtered");
  return out;
}

Token gumbel_argmax(std::span<const double> filtered, double temperature,
                    std::span<const double> gumbel) {
  if (gumbel.size() != filtered.size()) {
    throw std::invalid_argument("gumbel_argmax: noise length differs from vocabulary");
  }
  Token best = 0;
  double best_score = kNegInf;
  bool found = false;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    if (filtered[i] == kNegInf) continue;
    const double z = filtered[i] + temperature * gumbel[i];
    if (!found || z > best_score) {
      best = static_cast<Token>(i);
      best_score = z;
      found = true;
    }
  }
  if (!found) throw std::logic_error("gumbel_argmax: no surviving token");
  return best;
}

Token sample_gumbel_max(std::span<const double> logits, const SamplingSpec& spec,
                        std::span<const double> gumbel) {
  const auto filtered = apply_filters(logits, spec);
  return gumbel_argmax(filtered, spec.temperature, gumbel);
}

Token sample_gumbel_max(std::span<const double> logits, const SamplingSpec& spec,
                        std::uint64_t position) {
  const auto gumbel = noise::gumbel_vector(spec.seed, position, logits.size());
  return sample_gumbel_max(logits, spec, gumbel);
}

Token sample_ipt(std::span<const double> probs, double u) {
  if (probs.empty()) throw std::invalid_argument("sample_ipt: empty distribution");
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("sample_ipt: u must lie in [0, 1)");
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw std::invalid_argument("sample_ipt: negative probability");
    acc += probs[i];
    cdf[i] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-9) throw std::invalid_argument("sample_ipt: probabilities must sum to 1");
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it != cdf.end()) return static_cast<Token>(it - cdf.begin());
  // u landed in the rounding gap above C_V; take the last token with mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<Token>(i);
  }
  return 0;
}

}  // namespace difr
