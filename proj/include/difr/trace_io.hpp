#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "difr/provider_sim.hpp"
#include "difr/verifier_eval.hpp"

namespace difr::io {

inline constexpr int kTraceVersion = 1;
inline constexpr int kScoreVersion = 1;
inline constexpr std::uint16_t kFingerprintVersion = 1;
inline constexpr std::size_t kFingerprintHeaderSize = 20;
inline constexpr std::size_t kFingerprintTrailerSize = 4;

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : FormatError {
  using FormatError::FormatError;
};
struct TruncatedError : FormatError {
  using FormatError::FormatError;
};
struct ChecksumError : FormatError {
  using FormatError::FormatError;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// One fingerprint block: "DIFR", u16 version, u16 k, u32 stride, u64
/// projection seed, count*k little-endian float32 values in position order,
/// then the CRC32 of everything before it. Fingerprints must sit at positions
/// 0, stride, 2*stride, ...
std::vector<std::uint8_t> encode_fingerprints(const FingerprintSet& set);
/// Decodes a block holding `count` fingerprints; `d` fills in the projection
/// dimension, which the block does not carry. Returns the bytes consumed via
/// `consumed` when non-null.
FingerprintSet decode_fingerprints(std::span<const std::uint8_t> bytes, std::size_t count,
                                   std::size_t d, std::size_t* consumed = nullptr);

struct TraceHeader {
  int version = kTraceVersion;
  std::string provider_label;
  std::string regime;
  SamplingSpec spec;
  ToyModelConfig toy;
  std::uint64_t toy_hash = 0;
  std::uint64_t noise_seed = 0;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

TraceHeader make_trace_header(const ProviderConfig& provider);

struct TraceFile {
  TraceHeader header;
  std::vector<TokenTrace> traces;
};

/// Fingerprints go to a sibling file "<path>.fp" when any trace carries them.
std::filesystem::path fingerprint_path(const std::filesystem::path& trace_path);

void write_traces(const std::filesystem::path& path, const TraceHeader& header,
                  std::span<const TokenTrace> traces);
TraceFile read_traces(const std::filesystem::path& path);

void write_trace(const std::filesystem::path& path, const TraceHeader& header,
                 const TokenTrace& trace);
TokenTrace read_trace(const std::filesystem::path& path);

struct ScoreFile {
  std::string regime;
  bool honest = false;
  std::vector<TraceScores> traces;
};

void write_scores(const std::filesystem::path& path, const ScoreFile& scores);
ScoreFile read_scores(const std::filesystem::path& path);

void write_calibration(const std::filesystem::path& path,
                       std::span<const CalibrationProfile> profiles);
std::vector<CalibrationProfile> read_calibration(const std::filesystem::path& path);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);
/// batch_size, metric, pool, regime, auc, auc_at_fpr, partial_area, floored
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
/// k, batch, cost, tpr, on_frontier
void write_cost_csv(const std::filesystem::path& path, const EvalReport& report);

/// regime, metric, count, inf_share, mean, std, p90 .. p99.999
void write_summary_csv(const std::filesystem::path& path, std::span<const ScoreSummary> rows);
std::string format_summary_table(std::span<const ScoreSummary> rows);

/// Throws std::runtime_error when the file cannot be written or read.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace difr::io
