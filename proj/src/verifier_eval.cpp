#include "difr/verifier_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "difr/noise.hpp"
#include "difr/parallel.hpp"

namespace difr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Role tags for batch seeds.
enum : std::uint64_t { kSplitRole = 1, kHonestRole = 2, kIncorrectRole = 3, kNullRole = 4 };

std::uint64_t label_hash(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    return noise::mix64(state);
  }
  std::size_t below(std::size_t bound) {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::size_t>((static_cast<u128>(next()) * bound) >> 64);
  }
};

std::vector<double> finite_sorted(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

bool is_winsor_percentile(double p) {
  return std::any_of(kWinsorPercentiles.begin(), kWinsorPercentiles.end(),
                     [&](double q) { return std::abs(p - q) < 1e-9; });
}

double raw_value(const ScoreRecord& r, Metric metric) {
  switch (metric) {
    case Metric::margin: return r.margin;
    case Metric::exact_match: return r.exact_match ? 1.0 : 0.0;
    case Metric::likelihood: return r.likelihood;
    case Metric::mc_likelihood:
      if (!r.mc_likelihood) throw std::invalid_argument("score record has no mc_likelihood");
      return *r.mc_likelihood;
    case Metric::cross_entropy: return r.cross_entropy;
    case Metric::activation: break;
  }
  throw std::invalid_argument("activation is not a per-token record metric");
}

std::size_t prefix_index(const TraceScores& t, std::size_t k) {
  const auto it = std::find(t.activation_ks.begin(), t.activation_ks.end(), k);
  if (it == t.activation_ks.end()) {
    throw std::invalid_argument("activation distances for k=" + std::to_string(k) +
                                " were not scored");
  }
  return static_cast<std::size_t>(it - t.activation_ks.begin());
}

std::vector<double> activation_values(std::span<const TraceScores> traces, std::size_t k) {
  std::vector<double> out;
  for (const auto& t : traces) {
    if (t.activation.empty()) continue;
    const std::size_t idx = prefix_index(t, k);
    for (const auto& a : t.activation) out.push_back(a.distances[idx]);
  }
  return out;
}

struct PreparedRegime {
  const RegimeScores* regime;
  std::uint64_t seed;
  std::vector<double> train;
  std::vector<double> test;
};

std::vector<double> honest_batches(std::span<const PreparedRegime* const> honest,
                                   std::span<const std::vector<double>> transformed,
                                   std::size_t batch, std::size_t n, std::uint64_t role) {
  std::vector<double> out;
  for (std::size_t i = 0; i < honest.size(); ++i) {
    const auto seed = noise::derive_seed(noise::derive_seed(honest[i]->seed, batch), role);
    const auto b = sample_batches(transformed[i], batch, n, seed);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<PreparedRegime> prepare(std::span<const RegimeScores> regimes, Metric metric,
                                    const EvalConfig& config) {
  std::vector<PreparedRegime> prepared;
  for (const auto& r : regimes) {
    const auto scores = collect_scores(r.traces, metric, config.activation_k);
    const std::uint64_t seed = noise::derive_seed(config.seed, label_hash(r.label));
    auto split = split_scores(scores, noise::derive_seed(seed, kSplitRole));
    prepared.push_back({&r, seed, std::move(split.train), std::move(split.test)});
  }
  return prepared;
}

std::vector<double> pooled_train(std::span<const PreparedRegime> prepared, Metric metric) {
  std::vector<double> train;
  for (const auto& p : prepared) {
    if (p.regime->honest) train.insert(train.end(), p.train.begin(), p.train.end());
  }
  if (train.empty()) {
    throw std::invalid_argument("missing honest scores for metric " + std::string(metric_name(metric)));
  }
  return train;
}

CalibrationProfile fit_for_pool(std::span<const double> train, Metric metric, PoolMethod pool,
                                const EvalConfig& config) {
  return pool == PoolMethod::mean ? fit_calibration(train, metric, config.winsor_percentile)
                                  : fit_tail_calibration(train, metric);
}

}  // namespace

std::vector<CalibrationProfile> fit_calibrations(std::span<const RegimeScores> regimes,
                                                 const EvalConfig& config) {
  std::vector<CalibrationProfile> out;
  for (Metric metric : config.metrics) {
    const auto train = pooled_train(prepare(regimes, metric, config), metric);
    for (PoolMethod pool : config.pools) out.push_back(fit_for_pool(train, metric, pool, config));
  }
  return out;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::margin: return "margin";
    case Metric::exact_match: return "exact_match";
    case Metric::likelihood: return "likelihood";
    case Metric::mc_likelihood: return "mc_likelihood";
    case Metric::cross_entropy: return "cross_entropy";
    case Metric::activation: return "activation";
  }
  return "margin";
}

Metric parse_metric(std::string_view text) {
  for (Metric m : {Metric::margin, Metric::exact_match, Metric::likelihood,
                   Metric::mc_likelihood, Metric::cross_entropy, Metric::activation}) {
    if (text == metric_name(m)) return m;
  }
  throw std::invalid_argument("unknown metric '" + std::string(text) + "'");
}

int metric_orientation(Metric m) {
  switch (m) {
    case Metric::exact_match:
    case Metric::likelihood:
    case Metric::mc_likelihood: return -1;
    default: return 1;
  }
}

double oriented_score(const ScoreRecord& record, Metric metric) {
  if (metric == Metric::margin) return record.filtered_out ? kInf : record.clipped_margin;
  return metric_orientation(metric) * raw_value(record, metric);
}

std::vector<std::size_t> activation_prefixes(std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t p = 1; p < k; p *= 2) out.push_back(p);
  if (k > 0) out.push_back(k);
  return out;
}

TraceScores verify_trace(const ToyModel& model, const TokenTrace& trace,
                         const ProviderConfig& reference, const VerifyOptions& options) {
  if (!(model.config() == reference.toy)) {
    throw std::invalid_argument("verify_trace: model does not match the reference config");
  }
  const std::size_t vocab = model.vocab();
  for (Token t : trace.prompt) {
    if (t >= vocab) throw std::invalid_argument("verify_trace: prompt token outside vocabulary");
  }
  for (Token t : trace.tokens) {
    if (t >= vocab) throw std::invalid_argument("verify_trace: claimed token outside vocabulary");
  }
  if (trace.prompt.empty()) throw std::invalid_argument("verify_trace: empty prompt");
  reference.spec.validate();

  TraceScores out;
  out.prompt_id = trace.prompt_id;
  out.config_label = trace.config_label;

  std::optional<Projection> projection;
  if (trace.fingerprints) {
    const ProjectionConfig& pc = trace.fingerprints->config;
    if (options.fingerprint && !(*options.fingerprint == pc)) {
      throw std::invalid_argument("verify_trace: fingerprint config differs from the expected one");
    }
    if (pc.d != model.hidden()) {
      throw std::invalid_argument("verify_trace: fingerprint dimension differs from hidden size");
    }
    projection.emplace(pc);
    out.activation_ks = activation_prefixes(pc.k);
  }

  const SamplingSpec spec = sequence_spec(reference.spec, trace.prompt_id);
  std::vector<Token> context = trace.prompt;
  context.reserve(trace.prompt.size() + trace.tokens.size());
  std::size_t next_fp = 0;
  out.records.reserve(trace.tokens.size());
  for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
    const Forward fwd = model.forward(context);
    out.records.push_back(score_position(fwd.logits, trace.tokens[t], spec, t, options.score));
    if (projection && next_fp < trace.fingerprints->fingerprints.size() &&
        trace.fingerprints->fingerprints[next_fp].position == t) {
      const Fingerprint& claimed = trace.fingerprints->fingerprints[next_fp++];
      const Fingerprint mine = collect_fingerprint(fwd.activation, *projection, t);
      if (claimed.values.size() != mine.values.size()) {
        throw std::invalid_argument("verify_trace: fingerprint length differs from k");
      }
      ActivationScore a;
      a.position = t;
      for (std::size_t k : out.activation_ks) a.distances.push_back(prefix_distance(claimed, mine, k));
      out.activation.push_back(std::move(a));
    }
    context.push_back(trace.tokens[t]);
  }
  if (projection && next_fp != trace.fingerprints->fingerprints.size()) {
    throw std::invalid_argument("verify_trace: fingerprints out of order or beyond the sequence");
  }
  return out;
}

TraceScores verify_trace(const TokenTrace& trace, const ProviderConfig& reference,
                         const VerifyOptions& options) {
  const ToyModel model(reference.toy);
  return verify_trace(model, trace, reference, options);
}

std::vector<TraceScores> verify_traces(std::span<const TokenTrace> traces,
                                       const ProviderConfig& reference,
                                       const VerifyOptions& options) {
  const ToyModel model(reference.toy);
  std::vector<TraceScores> out(traces.size());
  parallel_for(traces.size(),
               [&](std::size_t i) { out[i] = verify_trace(model, traces[i], reference, options); });
  return out;
}

std::vector<double> collect_scores(std::span<const TraceScores> traces, Metric metric,
                                   std::size_t k) {
  if (metric == Metric::activation) return activation_values(traces, k);
  std::vector<double> out;
  for (const auto& t : traces) {
    for (const auto& r : t.records) out.push_back(oriented_score(r, metric));
  }
  return out;
}

double percentile_nearest_rank(std::span<const double> values, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw std::invalid_argument("percentile must lie in (0, 100]");
  }
  const auto sorted = finite_sorted(values);
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty finite sample");
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

CalibrationProfile fit_calibration(std::span<const double> honest_scores, Metric metric,
                                   double winsor_percentile,
                                   std::optional<double> zero_floor_percentile) {
  if (!is_winsor_percentile(winsor_percentile)) {
    throw std::invalid_argument("winsor percentile must be one of 99, 99.9, 99.99, 99.999");
  }
  const std::size_t finite = static_cast<std::size_t>(
      std::count_if(honest_scores.begin(), honest_scores.end(),
                    [](double v) { return std::isfinite(v); }));
  if (finite < kMinCalibrationScores) {
    throw std::invalid_argument("calibration needs at least " +
                                std::to_string(kMinCalibrationScores) +
                                " finite honest scores, got " + std::to_string(finite));
  }
  CalibrationProfile p;
  p.metric = metric;
  p.orientation = metric_orientation(metric);
  p.winsor_percentile = winsor_percentile;
  p.clip_value = percentile_nearest_rank(honest_scores, winsor_percentile);
  if (zero_floor_percentile) {
    p.zero_floor_percentile = zero_floor_percentile;
    p.zero_floor_value = percentile_nearest_rank(honest_scores, *zero_floor_percentile);
  }
  return p;
}

CalibrationProfile fit_tail_calibration(std::span<const double> honest_scores, Metric metric) {
  return fit_calibration(honest_scores, metric, kTailClipPercentile, kTailFloorPercentile);
}

std::string_view pool_name(PoolMethod m) {
  return m == PoolMethod::mean ? "mean" : "tail_focused";
}

PoolMethod parse_pool(std::string_view text) {
  if (text == "mean") return PoolMethod::mean;
  if (text == "tail_focused") return PoolMethod::tail_focused;
  throw std::invalid_argument("unknown pooling method '" + std::string(text) + "'");
}

double transform_score(double score, const CalibrationProfile& profile, PoolMethod method) {
  if (method == PoolMethod::tail_focused) {
    if (!profile.zero_floor_value) {
      throw std::invalid_argument("tail-focused pooling needs a zero-floor value");
    }
    if (score < *profile.zero_floor_value) return 0.0;
  }
  return std::min(score, profile.clip_value);
}

std::vector<double> transform_scores(std::span<const double> scores,
                                     const CalibrationProfile& profile, PoolMethod method) {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = transform_score(scores[i], profile, method);
  return out;
}

double pool_batch(std::span<const double> scores, const CalibrationProfile& profile,
                  PoolMethod method) {
  if (scores.empty()) throw std::invalid_argument("pool_batch: empty batch");
  double s = 0.0;
  for (double v : scores) s += transform_score(v, profile, method);
  return s / static_cast<double>(scores.size());
}

std::vector<double> sample_batches(std::span<const double> transformed, std::size_t batch_size,
                                   std::size_t n_batches, std::uint64_t seed) {
  const std::size_t n = transformed.size();
  if (batch_size == 0) throw std::invalid_argument("sample_batches: batch size must be >= 1");
  if (batch_size > n) {
    throw std::invalid_argument("sample_batches: batch size " + std::to_string(batch_size) +
                                " exceeds population " + std::to_string(n));
  }
  std::vector<double> pool(transformed.begin(), transformed.end());
  std::vector<double> out(n_batches);
  SplitMix rng{seed};
  for (std::size_t b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(pool[i], pool[j]);
      s += pool[i];
    }
    out[b] = s / static_cast<double>(batch_size);
  }
  return out;
}

TrainTestSplit split_scores(std::span<const double> scores, std::uint64_t seed) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix rng{seed};
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const std::size_t n_train = (scores.size() + 1) / 2;
  TrainTestSplit s;
  s.train.reserve(n_train);
  s.test.reserve(scores.size() - n_train);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_train ? s.train : s.test).push_back(scores[idx[i]]);
  }
  return s;
}

double rank_auc(std::span<const double> honest, std::span<const double> incorrect) {
  if (honest.empty() || incorrect.empty()) throw std::invalid_argument("rank_auc: empty input");
  struct Item {
    double v;
    bool incorrect;
  };
  std::vector<Item> all;
  all.reserve(honest.size() + incorrect.size());
  for (double v : honest) all.push_back({v, false});
  for (double v : incorrect) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  // Twice the rank sum keeps tied (half-integer) ranks exact.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t inc = 0;
    while (j < all.size() && all[j].v == all[i].v) inc += all[j++].incorrect ? 1 : 0;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);
    twice_rank_sum += twice_avg_rank * static_cast<double>(inc);
    i = j;
  }
  const double ni = static_cast<double>(incorrect.size());
  const double nh = static_cast<double>(honest.size());
  const double u = twice_rank_sum / 2.0 - ni * (ni + 1.0) / 2.0;
  return u / (ni * nh);
}

double partial_roc_area(std::span<const double> honest, std::span<const double> incorrect,
                        double max_fpr) {
  if (honest.empty() || incorrect.empty()) throw std::invalid_argument("partial_roc_area: empty input");
  std::vector<double> h(honest.begin(), honest.end());
  std::vector<double> c(incorrect.begin(), incorrect.end());
  std::sort(h.begin(), h.end(), std::greater<>());
  std::sort(c.begin(), c.end(), std::greater<>());
  const double nh = static_cast<double>(h.size());
  const double nc = static_cast<double>(c.size());
  double fpr = 0.0, tpr = 0.0, area = 0.0;
  std::size_t i = 0, j = 0;
  while (i < h.size() || j < c.size()) {
    double v;
    if (i == h.size()) v = c[j];
    else if (j == c.size()) v = h[i];
    else v = std::max(h[i], c[j]);
    std::size_t dh = 0, dc = 0;
    while (i < h.size() && h[i] == v) ++i, ++dh;
    while (j < c.size() && c[j] == v) ++j, ++dc;
    const double fpr1 = fpr + static_cast<double>(dh) / nh;
    const double tpr1 = tpr + static_cast<double>(dc) / nc;
    if (dh > 0) {
      if (fpr1 >= max_fpr) {
        const double at = tpr + (tpr1 - tpr) * (max_fpr - fpr) / (fpr1 - fpr);
        area += (max_fpr - fpr) * (tpr + at) / 2.0;
        return area;
      }
      area += (fpr1 - fpr) * (tpr + tpr1) / 2.0;
    }
    fpr = fpr1;
    tpr = tpr1;
  }
  return area;
}

double standardize_partial_area(double area, double max_fpr) {
  const double lo = max_fpr * max_fpr / 2.0;
  const double v = 0.5 * (1.0 + (area - lo) / (max_fpr - lo));
  return std::clamp(v, 0.0, 1.0);
}

AucResult auc_metrics(std::span<const double> honest, std::span<const double> incorrect,
                      double fpr) {
  if (honest.empty() || incorrect.empty()) throw std::invalid_argument("auc_metrics: empty input");
  if (!(fpr > 0.0 && fpr <= 1.0)) throw std::invalid_argument("auc_metrics: fpr must lie in (0, 1]");
  AucResult r;
  r.partial_area = partial_roc_area(honest, incorrect, fpr);
  if (mean_of(incorrect) < mean_of(honest)) {
    r.floored = true;
    return r;
  }
  r.auc = rank_auc(honest, incorrect);
  r.auc_at_fpr = standardize_partial_area(r.partial_area, fpr);
  return r;
}

double tpr_at_fpr(std::span<const double> honest, std::span<const double> incorrect, double fpr) {
  if (honest.empty() || incorrect.empty()) throw std::invalid_argument("tpr_at_fpr: empty input");
  std::vector<double> h(honest.begin(), honest.end());
  const auto m = static_cast<std::size_t>(std::floor(fpr * static_cast<double>(h.size()) + 1e-9));
  if (m >= h.size()) return 1.0;
  std::nth_element(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(m), h.end(), std::greater<>());
  const double tau = h[m];
  const auto hits = std::count_if(incorrect.begin(), incorrect.end(), [&](double v) { return v > tau; });
  return static_cast<double>(hits) / static_cast<double>(incorrect.size());
}

ParetoResult pareto_analysis(std::span<const CostPoint> points, std::span<const double> thresholds) {
  if (points.empty()) throw std::invalid_argument("pareto_analysis: no points");
  std::vector<CostPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const CostPoint& a, const CostPoint& b) {
    if (a.cost() != b.cost()) return a.cost() < b.cost();
    if (a.tpr != b.tpr) return a.tpr > b.tpr;
    return a.k < b.k;
  });
  ParetoResult r;
  double best_below = -kInf;  // best TPR among strictly cheaper points
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].cost() == sorted[i].cost()) ++j;
    const double best_here = std::max(best_below, sorted[i].tpr);  // group is TPR-descending
    for (std::size_t q = i; q < j; ++q) {
      if (!(best_here > sorted[q].tpr)) r.frontier.push_back(sorted[q]);
    }
    best_below = best_here;
    i = j;
  }
  std::sort(r.frontier.begin(), r.frontier.end(), [](const CostPoint& a, const CostPoint& b) {
    return a.cost() != b.cost() ? a.cost() < b.cost() : a.k < b.k;
  });
  for (double tau : thresholds) {
    MinCostEntry e{tau, std::nullopt};
    for (const auto& p : points) {
      if (p.tpr >= tau && (!e.cost || p.cost() < *e.cost)) e.cost = p.cost();
    }
    r.min_cost.push_back(e);
  }
  return r;
}

EvalReport evaluate(std::span<const RegimeScores> regimes, const EvalConfig& config) {
  if (config.batch_sizes.empty()) throw std::invalid_argument("evaluate: no batch sizes");
  if (config.n_batches == 0) throw std::invalid_argument("evaluate: n_batches must be >= 1");
  if (std::none_of(regimes.begin(), regimes.end(), [](const RegimeScores& r) { return r.honest; })) {
    throw std::invalid_argument("evaluate: missing honest scores");
  }
  EvalReport report;
  for (Metric metric : config.metrics) {
    const auto prepared = prepare(regimes, metric, config);
    std::vector<const PreparedRegime*> honest;
    std::vector<const PreparedRegime*> incorrect;
    for (const auto& p : prepared) (p.regime->honest ? honest : incorrect).push_back(&p);
    const auto honest_train = pooled_train(prepared, metric);

    for (PoolMethod pool : config.pools) {
      const CalibrationProfile profile = fit_for_pool(honest_train, metric, pool, config);
      report.calibrations.push_back(profile);
      std::vector<std::vector<double>> honest_t;
      for (const auto* p : honest) honest_t.push_back(transform_scores(p->test, profile, pool));
      std::vector<std::vector<double>> incorrect_t;
      for (const auto* p : incorrect) incorrect_t.push_back(transform_scores(p->test, profile, pool));

      struct Cell {
        std::vector<EvalRow> rows;
        std::vector<SkippedCell> skipped;
      };
      std::vector<Cell> cells(config.batch_sizes.size());
      parallel_for(config.batch_sizes.size(), [&](std::size_t bi) {
        const std::size_t batch = config.batch_sizes[bi];
        Cell& cell = cells[bi];
        for (std::size_t i = 0; i < honest.size(); ++i) {
          if (honest_t[i].size() < batch) {
            cell.skipped.push_back({metric, honest[i]->regime->label, batch,
                                    "honest test split smaller than batch"});
            return;
          }
        }
        const auto h = honest_batches(honest, honest_t, batch, config.n_batches, kHonestRole);
        if (config.honest_null) {
          const auto null = honest_batches(honest, honest_t, batch, config.n_batches, kNullRole);
          cell.rows.push_back({metric, pool, std::string(kHonestNullLabel), batch,
                               auc_metrics(h, null), config.n_batches});
        }
        for (std::size_t i = 0; i < incorrect.size(); ++i) {
          const auto& label = incorrect[i]->regime->label;
          if (incorrect_t[i].size() < batch) {
            cell.skipped.push_back({metric, label, batch,
                                    incorrect_t[i].empty() ? "no scores"
                                                           : "test split smaller than batch"});
            continue;
          }
          const auto seed =
              noise::derive_seed(noise::derive_seed(incorrect[i]->seed, batch), kIncorrectRole);
          const auto c = sample_batches(incorrect_t[i], batch, config.n_batches, seed);
          cell.rows.push_back({metric, pool, label, batch, auc_metrics(h, c), config.n_batches});
        }
      });
      for (auto& cell : cells) {
        report.rows.insert(report.rows.end(), cell.rows.begin(), cell.rows.end());
        report.skipped.insert(report.skipped.end(), cell.skipped.begin(), cell.skipped.end());
      }
    }
  }
  return report;
}

EvalReport pareto_sweep(std::span<const RegimeScores> honest, const RegimeScores& incorrect,
                        const ParetoConfig& config) {
  if (honest.empty()) throw std::invalid_argument("pareto_sweep: missing honest scores");
  if (config.ks.empty() || config.max_batch == 0) {
    throw std::invalid_argument("pareto_sweep: empty k or batch grid");
  }
  EvalReport report;
  std::vector<std::vector<CostPoint>> per_k(config.ks.size());
  std::vector<CalibrationProfile> profiles(config.ks.size());
  parallel_for(config.ks.size(), [&](std::size_t ki) {
    const std::size_t k = config.ks[ki];
    std::vector<double> train;
    std::vector<std::vector<double>> honest_test;
    std::vector<std::uint64_t> honest_seeds;
    for (const auto& r : honest) {
      const auto scores = collect_scores(r.traces, Metric::activation, k);
      if (scores.empty()) throw std::invalid_argument("pareto_sweep: honest regime '" + r.label + "' has no activation distances");
      const std::uint64_t seed = noise::derive_seed(config.seed, label_hash(r.label));
      auto split = split_scores(scores, noise::derive_seed(seed, kSplitRole));
      train.insert(train.end(), split.train.begin(), split.train.end());
      honest_test.push_back(std::move(split.test));
      honest_seeds.push_back(seed);
    }
    const auto inc_scores = collect_scores(incorrect.traces, Metric::activation, k);
    if (inc_scores.empty()) throw std::invalid_argument("pareto_sweep: missing k sweep data");
    const std::uint64_t inc_seed = noise::derive_seed(config.seed, label_hash(incorrect.label));
    const auto inc_split = split_scores(inc_scores, noise::derive_seed(inc_seed, kSplitRole));

    const auto profile = fit_calibration(train, Metric::activation, config.winsor_percentile);
    profiles[ki] = profile;
    for (auto& t : honest_test) t = transform_scores(t, profile, PoolMethod::mean);
    const auto inc_test = transform_scores(inc_split.test, profile, PoolMethod::mean);

    for (std::size_t b = 1; b <= config.max_batch; ++b) {
      std::vector<double> h;
      for (std::size_t i = 0; i < honest_test.size(); ++i) {
        const auto seed = noise::derive_seed(noise::derive_seed(honest_seeds[i], b), kHonestRole);
        const auto s = sample_batches(honest_test[i], b, config.n_batches, seed);
        h.insert(h.end(), s.begin(), s.end());
      }
      const auto seed = noise::derive_seed(noise::derive_seed(inc_seed, b), kIncorrectRole);
      const auto c = sample_batches(inc_test, b, config.n_batches, seed);
      per_k[ki].push_back({k, b, tpr_at_fpr(h, c)});
    }
  });
  report.calibrations = profiles;
  for (const auto& v : per_k) report.cost_points.insert(report.cost_points.end(), v.begin(), v.end());
  const auto pr = pareto_analysis(report.cost_points);
  report.frontier = pr.frontier;
  report.min_cost = pr.min_cost;
  return report;
}

double honest_exact_match(const ProviderConfig& reference, std::span<const Prompt> prompts,
                          std::size_t length, double sigma_benign, double sigma_activation) {
  ProviderConfig noisy = reference;
  noisy.regime = regime::Noisy{sigma_benign, sigma_activation};
  noisy.label = "noisy";
  const auto traces = generate_traces(prompts, noisy, length);
  const auto scores = verify_traces(traces, reference);
  std::size_t hits = 0, n = 0;
  for (const auto& t : scores) {
    for (const auto& r : t.records) {
      hits += r.exact_match ? 1 : 0;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("honest_exact_match: no tokens");
  return static_cast<double>(hits) / static_cast<double>(n);
}

NoiseCalibration calibrate_benign_sigma(const ProviderConfig& reference,
                                        std::span<const Prompt> prompts, std::size_t length,
                                        double target, double sigma_activation, double lo,
                                        double hi, int iterations) {
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("calibrate_benign_sigma: need 0 < lo < hi");
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("calibrate_benign_sigma: target must lie in (0, 1)");
  NoiseCalibration best{hi, honest_exact_match(reference, prompts, length, hi, sigma_activation)};
  double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < iterations; ++i) {
    const double mid = std::exp((a + b) / 2.0);
    const double em = honest_exact_match(reference, prompts, length, mid, sigma_activation);
    if (std::abs(em - target) < std::abs(best.exact_match - target)) best = {mid, em};
    // More noise means fewer matches.
    if (em > target) a = std::log(mid);
    else b = std::log(mid);
  }
  return best;
}

ScoreSummary summarize(std::string regime, std::span<const TraceScores> traces, Metric metric,
                       std::size_t activation_k) {
  std::vector<double> values;
  if (metric == Metric::activation) {
    values = activation_values(traces, activation_k);
  } else {
    for (const auto& t : traces) {
      for (const auto& r : t.records) values.push_back(raw_value(r, metric));
    }
  }
  ScoreSummary s;
  s.regime = std::move(regime);
  s.metric = metric;
  s.count = values.size();
  const auto finite = finite_sorted(values);
  s.inf_share = values.empty() ? 0.0
                               : static_cast<double>(values.size() - finite.size()) /
                                     static_cast<double>(values.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (finite.empty()) {
    s.mean = s.stddev = nan;
    s.percentiles.fill(nan);
    return s;
  }
  s.mean = mean_of(finite);
  double ss = 0.0;
  for (double v : finite) ss += (v - s.mean) * (v - s.mean);
  s.stddev = finite.size() > 1 ? std::sqrt(ss / static_cast<double>(finite.size() - 1)) : 0.0;
  for (std::size_t i = 0; i < kSummaryPercentiles.size(); ++i) {
    s.percentiles[i] = percentile_nearest_rank(finite, kSummaryPercentiles[i]);
  }
  return s;
}

}  // namespace difr
