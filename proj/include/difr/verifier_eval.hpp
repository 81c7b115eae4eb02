#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difr/provider_sim.hpp"
#include "difr/token_difr.hpp"

namespace difr {

enum class Metric { margin, exact_match, likelihood, mc_likelihood, cross_entropy, activation };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view text);
/// +1 when larger raw values already mean more divergence, -1 otherwise.
int metric_orientation(Metric m);

/// Score of one token oriented so that higher means more divergent. The margin
/// feature is the clipped margin, or +inf when the claimed token was filtered.
/// Throws for activation (not a token metric) and for mc_likelihood when the
/// record has none.
double oriented_score(const ScoreRecord& record, Metric metric);

struct ActivationScore {
  std::size_t position = 0;
  std::vector<double> distances;  // one per entry of TraceScores::activation_ks

  friend bool operator==(const ActivationScore&, const ActivationScore&) = default;
};

struct TraceScores {
  std::uint64_t prompt_id = 0;
  std::string config_label;
  std::vector<ScoreRecord> records;
  std::vector<std::size_t> activation_ks;
  std::vector<ActivationScore> activation;

  friend bool operator==(const TraceScores&, const TraceScores&) = default;
};

/// Prefix lengths scored for a k-dimensional fingerprint: powers of two below
/// k, then k itself.
std::vector<std::size_t> activation_prefixes(std::size_t k);

struct VerifyOptions {
  ScoreOptions score;
  /// When set, the trace's fingerprints must have been taken with this config.
  std::optional<ProjectionConfig> fingerprint;
};

/// Replays a trace against the reference model and spec, scoring every
/// generated position from the claimed prefix. Throws std::invalid_argument
/// on vocabulary or fingerprint-config mismatch.
TraceScores verify_trace(const ToyModel& model, const TokenTrace& trace,
                         const ProviderConfig& reference, const VerifyOptions& options = {});
TraceScores verify_trace(const TokenTrace& trace, const ProviderConfig& reference,
                         const VerifyOptions& options = {});
std::vector<TraceScores> verify_traces(std::span<const TokenTrace> traces,
                                       const ProviderConfig& reference,
                                       const VerifyOptions& options = {});

/// Flattened oriented scores for one metric across traces. For activation,
/// `k` selects the prefix length (must appear in activation_ks).
std::vector<double> collect_scores(std::span<const TraceScores> traces, Metric metric,
                                   std::size_t k = 0);

/// Nearest-rank percentile of the finite entries: the value at 1-based rank
/// ceil(p/100 * n). Throws when no finite entries remain.
double percentile_nearest_rank(std::span<const double> values, double percentile);

inline constexpr std::array<double, 4> kWinsorPercentiles{99.0, 99.9, 99.99, 99.999};
inline constexpr double kTailClipPercentile = 99.999;
inline constexpr double kTailFloorPercentile = 99.99;
inline constexpr std::size_t kMinCalibrationScores = 1000;

struct CalibrationProfile {
  Metric metric = Metric::margin;
  double winsor_percentile = 99.0;
  double clip_value = 0.0;
  std::optional<double> zero_floor_percentile;
  std::optional<double> zero_floor_value;
  int orientation = 1;

  friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;
};

/// Fits clip (and optional zero-floor) values on oriented honest training
/// scores; +inf entries are excluded from the percentile. Throws when fewer
/// than kMinCalibrationScores finite scores are present or the percentile is
/// not one of kWinsorPercentiles.
CalibrationProfile fit_calibration(std::span<const double> honest_scores, Metric metric,
                                   double winsor_percentile,
                                   std::optional<double> zero_floor_percentile = std::nullopt);

/// Profile for tail-focused pooling: clip at p99.999, zero below p99.99.
CalibrationProfile fit_tail_calibration(std::span<const double> honest_scores, Metric metric);

enum class PoolMethod { mean, tail_focused };

std::string_view pool_name(PoolMethod m);
PoolMethod parse_pool(std::string_view text);

/// Per-token transform applied before averaging: winsorize at clip_value
/// (+inf included) and, for tail-focused pooling, zero anything below the
/// floor value.
double transform_score(double score, const CalibrationProfile& profile, PoolMethod method);
std::vector<double> transform_scores(std::span<const double> scores,
                                     const CalibrationProfile& profile, PoolMethod method);

/// Mean of transformed scores. Throws on an empty batch.
double pool_batch(std::span<const double> scores, const CalibrationProfile& profile,
                  PoolMethod method);

inline constexpr std::size_t kDefaultBatchCount = 2000;

/// Means of n_batches batches of already-transformed scores, each drawn
/// without replacement from the population. Deterministic in seed. Throws when
/// batch_size is 0 or exceeds the population.
std::vector<double> sample_batches(std::span<const double> transformed, std::size_t batch_size,
                                   std::size_t n_batches, std::uint64_t seed);

struct TrainTestSplit {
  std::vector<double> train;
  std::vector<double> test;
};

/// Token-level 50/50 split under a seeded permutation (train gets the extra
/// element when the count is odd).
TrainTestSplit split_scores(std::span<const double> scores, std::uint64_t seed);

inline constexpr double kReportFpr = 0.01;

struct AucResult {
  double auc = 0.5;
  double auc_at_fpr = 0.5;  // standardized partial area, chance = 0.5
  double partial_area = 0.0;  // raw ROC area over FPR in [0, fpr]
  bool floored = false;
};

/// Rank statistic P(incorrect > honest) + 0.5 P(tie).
double rank_auc(std::span<const double> honest, std::span<const double> incorrect);

/// Raw ROC area over FPR in [0, max_fpr]; tied scores form diagonal segments.
double partial_roc_area(std::span<const double> honest, std::span<const double> incorrect,
                        double max_fpr);

/// McClish standardization of a partial area so chance maps to 0.5 and a
/// perfect classifier to 1.
double standardize_partial_area(double area, double max_fpr);

/// AUC and standardized AUC at FPR <= fpr. When the incorrect mean is below
/// the honest mean both values are reported as 0.5 and `floored` is set.
/// Throws on empty input.
AucResult auc_metrics(std::span<const double> honest, std::span<const double> incorrect,
                      double fpr = kReportFpr);

/// TPR of the threshold at the honest (1 - fpr) order statistic, flagging
/// scores strictly above it.
double tpr_at_fpr(std::span<const double> honest, std::span<const double> incorrect,
                  double fpr = kReportFpr);

inline constexpr std::array<double, 4> kParetoThresholds{0.95, 0.99, 0.999, 0.9999};
inline constexpr std::array<std::size_t, 7> kParetoKs{1, 2, 4, 8, 16, 32, 64};
inline constexpr std::size_t kParetoWindow = 32;

struct CostPoint {
  std::size_t k = 0;
  std::size_t batch = 0;
  double tpr = 0.0;

  std::size_t cost() const { return k * batch; }
  friend bool operator==(const CostPoint&, const CostPoint&) = default;
};

struct MinCostEntry {
  double threshold = 0.0;
  std::optional<std::size_t> cost;  // nullopt when no point reaches it
  friend bool operator==(const MinCostEntry&, const MinCostEntry&) = default;
};

struct ParetoResult {
  std::vector<CostPoint> frontier;  // sorted by cost, then k
  std::vector<MinCostEntry> min_cost;
};

/// A point is dominated when another has cost <= its cost and strictly higher
/// TPR. Throws on empty input.
ParetoResult pareto_analysis(std::span<const CostPoint> points,
                             std::span<const double> thresholds = kParetoThresholds);

inline constexpr std::array<std::size_t, 9> kDefaultBatchSizes{1,   3,    10,   30,   100,
                                                               300, 1000, 3000, 10000};

/// Scores of one provider configuration, as verified against the reference.
struct RegimeScores {
  std::string label;
  bool honest = false;
  std::vector<TraceScores> traces;
};

struct EvalConfig {
  std::vector<std::size_t> batch_sizes{kDefaultBatchSizes.begin(), kDefaultBatchSizes.end()};
  std::vector<Metric> metrics{Metric::margin, Metric::exact_match, Metric::likelihood,
                              Metric::cross_entropy};
  std::vector<PoolMethod> pools{PoolMethod::mean};
  double winsor_percentile = 99.9;
  std::size_t n_batches = kDefaultBatchCount;
  std::uint64_t seed = 0;
  /// Prefix length used for the activation metric.
  std::size_t activation_k = 32;
  /// Adds a row comparing honest data against an independent resampling of
  /// itself.
  bool honest_null = true;
};

inline constexpr std::string_view kHonestNullLabel = "honest_null";

struct EvalRow {
  Metric metric = Metric::margin;
  PoolMethod pool = PoolMethod::mean;
  std::string regime;
  std::size_t batch_size = 0;
  AucResult result;
  std::size_t sample_count = 0;  // batches per side

  friend bool operator==(const EvalRow& a, const EvalRow& b) {
    return a.metric == b.metric && a.pool == b.pool && a.regime == b.regime &&
           a.batch_size == b.batch_size && a.sample_count == b.sample_count &&
           a.result.auc == b.result.auc && a.result.auc_at_fpr == b.result.auc_at_fpr &&
           a.result.partial_area == b.result.partial_area &&
           a.result.floored == b.result.floored;
  }
};

struct SkippedCell {
  Metric metric = Metric::margin;
  std::string regime;
  std::size_t batch_size = 0;
  std::string reason;
};

struct EvalReport {
  std::vector<CalibrationProfile> calibrations;
  std::vector<EvalRow> rows;
  std::vector<SkippedCell> skipped;
  std::vector<CostPoint> cost_points;
  std::vector<CostPoint> frontier;
  std::vector<MinCostEntry> min_cost;
};

/// Calibration profiles (metric-major, then pool) fit on the pooled honest
/// training split that evaluate() uses.
std::vector<CalibrationProfile> fit_calibrations(std::span<const RegimeScores> regimes,
                                                 const EvalConfig& config);

/// Full detection sweep: per metric, fit calibration on the pooled honest
/// training split, then per (pool, regime, batch size) compare batch
/// statistics on the test split. Honest batches are drawn within each honest
/// configuration and pooled. Throws when no honest regime is given.
EvalReport evaluate(std::span<const RegimeScores> regimes, const EvalConfig& config);

struct ParetoConfig {
  std::vector<std::size_t> ks{kParetoKs.begin(), kParetoKs.end()};
  std::size_t max_batch = kParetoWindow;
  double winsor_percentile = 99.9;
  std::size_t n_batches = kDefaultBatchCount;
  std::uint64_t seed = 0;
};

/// Communication-cost sweep over (k, B) for one incorrect configuration's
/// activation distances. Throws when a requested k was not scored.
EvalReport pareto_sweep(std::span<const RegimeScores> honest, const RegimeScores& incorrect,
                        const ParetoConfig& config);

/// Mean exact-match rate of noisy(sigma_benign, sigma_activation) traces
/// replayed against the reference.
double honest_exact_match(const ProviderConfig& reference, std::span<const Prompt> prompts,
                          std::size_t length, double sigma_benign, double sigma_activation);

struct NoiseCalibration {
  double sigma_benign = 0.0;
  double exact_match = 0.0;
};

/// Bisection in log(sigma) over [lo, hi] for the benign logit noise whose
/// honest exact-match rate equals target.
NoiseCalibration calibrate_benign_sigma(const ProviderConfig& reference,
                                        std::span<const Prompt> prompts, std::size_t length,
                                        double target = 0.98,
                                        double sigma_activation = kDefaultSigmaActivation,
                                        double lo = 1e-3, double hi = 1.0,
                                        int iterations = 20);

/// Raw-score summary in the layout of the score tables.
struct ScoreSummary {
  std::string regime;
  Metric metric = Metric::margin;
  std::size_t count = 0;
  double inf_share = 0.0;
  double mean = 0.0;  // over finite values
  double stddev = 0.0;
  std::array<double, 5> percentiles{};  // kSummaryPercentiles
};

inline constexpr std::array<double, 5> kSummaryPercentiles{90.0, 99.0, 99.9, 99.99, 99.999};

/// Summary of raw (unoriented) metric values. The margin metric uses the
/// unclipped margin so filtered tokens count toward the infinite share.
ScoreSummary summarize(std::string regime, std::span<const TraceScores> traces, Metric metric,
                       std::size_t activation_k = 0);

}  // namespace difr
