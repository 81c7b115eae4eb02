#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <unistd.h>
#include <vector>

#include "difr/trace_io.hpp"

using namespace difr;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("difr_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

FingerprintSet sample_set(std::size_t k, std::size_t count, std::size_t stride) {
  FingerprintSet s;
  s.config = {.projection_seed = 0xabcdef, .k = k, .d = 64, .stride = stride};
  for (std::size_t i = 0; i < count; ++i) {
    Fingerprint f;
    f.position = i * stride;
    for (std::size_t j = 0; j < k; ++j) f.values.push_back(static_cast<float>(i) - 0.1f * j);
    s.fingerprints.push_back(f);
  }
  return s;
}

ProviderConfig provider() {
  ProviderConfig p;
  p.spec.top_k = 50;
  p.spec.top_p = 0.95;
  p.spec.seed = 42;
  p.regime = regime::Noisy{};
  p.label = "noisy";
  return p;
}

}  // namespace

TEST_SUITE("trace_io") {

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(io::crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("fingerprint block layout") {
  const auto set = sample_set(8, 4, 2);
  const auto bytes = io::encode_fingerprints(set);
  CHECK(bytes.size() == io::kFingerprintHeaderSize + 4 * 8 * 4 + io::kFingerprintTrailerSize);
  CHECK(std::memcmp(bytes.data(), "DIFR", 4) == 0);
  CHECK(bytes[4] == 1);  // version, little endian
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 8);  // k
  CHECK(bytes[8] == 2);  // stride
  CHECK(bytes[12] == 0xef);  // seed low byte
  // First payload value is 0.0f, second is -0.1f in little-endian IEEE order.
  float second = 0.0f;
  std::memcpy(&second, bytes.data() + 24, 4);
  CHECK(second == -0.1f);

  std::size_t used = 0;
  const auto back = io::decode_fingerprints(bytes, 4, 64, &used);
  CHECK(used == bytes.size());
  CHECK(back == set);
}

TEST_CASE("fingerprint block errors") {
  const auto bytes = io::encode_fingerprints(sample_set(8, 4, 1));
  auto corrupt = bytes;
  corrupt[30] ^= 0x01;
  CHECK_THROWS_AS(io::decode_fingerprints(corrupt, 4, 64), io::ChecksumError);
  auto trailer = bytes;
  trailer.back() ^= 0x80;
  CHECK_THROWS_AS(io::decode_fingerprints(trailer, 4, 64), io::ChecksumError);
  CHECK_THROWS_AS(io::decode_fingerprints(std::span(bytes).first(bytes.size() - 1), 4, 64),
                  io::TruncatedError);
  CHECK_THROWS_AS(io::decode_fingerprints(std::span(bytes).first(10), 4, 64), io::TruncatedError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(io::decode_fingerprints(version, 4, 64), io::VersionError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(io::decode_fingerprints(magic, 4, 64), io::FormatError);

  auto gap = sample_set(8, 3, 2);
  gap.fingerprints[2].position = 5;
  CHECK_THROWS_AS(io::encode_fingerprints(gap), std::invalid_argument);
}

TEST_CASE("trace round trip") {
  TempDir dir;
  const ProviderConfig p = provider();
  GenerateOptions o;
  o.fingerprint = ProjectionConfig{.projection_seed = 9, .k = 16, .d = 64, .stride = 2};
  o.record_logits_digest = true;
  const auto prompts = make_prompts(1, 3, 5, 256);
  const auto traces = generate_traces(prompts, p, 7, o);
  const auto header = io::make_trace_header(p);
  CHECK(header.regime == "noisy(0.189,0.002)");
  CHECK(header.toy_hash == p.toy.hash());

  const auto path = dir.path / "noisy.jsonl";
  io::write_traces(path, header, traces);
  CHECK(fs::exists(io::fingerprint_path(path)));
  const auto file = io::read_traces(path);
  CHECK(file.header == header);
  CHECK(file.traces == traces);

  // A three-token trace without extras.
  TokenTrace small;
  small.prompt_id = 4;
  small.config_label = "reference";
  small.spec = p.spec;
  small.prompt = {1, 2};
  small.tokens = {3, 4, 5};
  const auto one = dir.path / "one.jsonl";
  io::write_trace(one, header, small);
  CHECK(io::read_trace(one) == small);
  CHECK_FALSE(fs::exists(io::fingerprint_path(one)));
}

TEST_CASE("trace file errors") {
  TempDir dir;
  const ProviderConfig p = provider();
  GenerateOptions o;
  o.fingerprint = ProjectionConfig{.projection_seed = 9, .k = 8, .d = 64, .stride = 1};
  const auto traces = generate_traces(make_prompts(1, 2, 5, 256), p, 4, o);
  const auto path = dir.path / "t.jsonl";
  io::write_traces(path, io::make_trace_header(p), traces);

  auto fp = io::read_text(io::fingerprint_path(path));
  fp[25] ^= 0x10;
  io::write_text(io::fingerprint_path(path), fp);
  CHECK_THROWS_AS(io::read_traces(path), io::ChecksumError);

  io::write_traces(path, io::make_trace_header(p), traces);
  auto text = io::read_text(path);
  const auto at = text.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  text.replace(at, 11, "\"version\":7");
  io::write_text(path, text);
  CHECK_THROWS_AS(io::read_traces(path), io::VersionError);

  io::write_text(path, "");
  CHECK_THROWS_AS(io::read_traces(path), io::TruncatedError);
  io::write_text(path, "{not json\n");
  CHECK_THROWS_AS(io::read_traces(path), io::FormatError);
  CHECK_THROWS_AS(io::read_traces(dir.path / "missing.jsonl"), std::runtime_error);

  TokenTrace bad = traces[0];
  bad.fingerprints.reset();
  bad.tokens[0] = 999;
  CHECK_THROWS_AS(io::write_traces(path, io::make_trace_header(p), std::vector{bad}),
                  std::invalid_argument);
}

TEST_CASE("score round trip keeps infinities") {
  TempDir dir;
  io::ScoreFile f;
  f.regime = "top_p_shift(0.85)";
  f.honest = false;
  TraceScores t;
  t.prompt_id = 2;
  t.config_label = "x";
  ScoreRecord a;
  a.position = 0;
  a.claimed_token = 5;
  a.verifier_token = 5;
  a.likelihood = std::log(0.5);
  a.cross_entropy = 0.123456789012345678;
  a.mc_likelihood = -0.25;
  ScoreRecord b;
  b.position = 1;
  b.claimed_token = 7;
  b.verifier_token = 3;
  b.margin = kInf;
  b.clipped_margin = 10.0;
  b.exact_match = false;
  b.cross_entropy = kInf;
  b.likelihood = -726.5572160188201;
  b.filtered_out = true;
  b.mc_likelihood = std::log(1e-9);
  t.records = {a, b};
  t.activation_ks = {1, 2, 4};
  t.activation = {{0, {0.1, 0.2, 0.30000000000000004}}, {1, {0.0, 0.0, 1e-300}}};
  f.traces = {t, t};
  f.traces[1].prompt_id = 3;

  const auto path = dir.path / "s.jsonl";
  io::write_scores(path, f);
  const auto back = io::read_scores(path);
  CHECK(back.regime == f.regime);
  CHECK(back.honest == f.honest);
  CHECK(back.traces == f.traces);
  CHECK(std::isinf(back.traces[0].records[1].margin));
  CHECK(std::isinf(back.traces[0].records[1].cross_entropy));

  // Byte-stable: writing what was read gives the same file.
  const auto again = dir.path / "s2.jsonl";
  io::write_scores(again, back);
  CHECK(io::read_text(again) == io::read_text(path));
}

TEST_CASE("calibration and report round trips") {
  TempDir dir;
  CalibrationProfile a;
  a.metric = Metric::likelihood;
  a.winsor_percentile = 99.9;
  a.clip_value = 1.25;
  a.orientation = -1;
  CalibrationProfile b = a;
  b.metric = Metric::margin;
  b.orientation = 1;
  b.zero_floor_percentile = 99.99;
  b.zero_floor_value = 0.5;
  const std::vector<CalibrationProfile> profiles{a, b};
  io::write_calibration(dir.path / "c.json", profiles);
  CHECK(io::read_calibration(dir.path / "c.json") == profiles);

  EvalReport r;
  r.calibrations = profiles;
  EvalRow row;
  row.metric = Metric::cross_entropy;
  row.pool = PoolMethod::tail_focused;
  row.regime = "seed_shift(43)";
  row.batch_size = 300;
  row.result = {0.75, 0.61, 0.0012, false};
  row.sample_count = 2000;
  EvalRow floored = row;
  floored.regime = "honest_null";
  floored.result = {0.5, 0.5, 0.00003, true};
  r.rows = {row, floored};
  r.skipped = {{Metric::margin, "kv_noise(0.003)", 10000, "test split too small"}};
  r.cost_points = {{1, 1, 0.2}, {2, 1, 0.4}};
  r.frontier = {{1, 1, 0.2}, {2, 1, 0.4}};
  r.min_cost = {{0.95, std::nullopt}, {0.99, 64}};
  io::write_report(dir.path / "r.json", r);
  const auto back = io::read_report(dir.path / "r.json");
  CHECK(back.calibrations == r.calibrations);
  CHECK(back.rows == r.rows);
  CHECK(back.cost_points == r.cost_points);
  CHECK(back.frontier == r.frontier);
  CHECK(back.min_cost == r.min_cost);
  REQUIRE(back.skipped.size() == 1);
  CHECK(back.skipped[0].batch_size == 10000);

  io::write_report_csv(dir.path / "r.csv", r);
  const auto csv = io::read_text(dir.path / "r.csv");
  CHECK(csv.rfind("batch_size,metric,pool,regime,auc,auc_at_fpr", 0) == 0);
  CHECK(csv.find("300,cross_entropy,tail_focused,seed_shift(43),0.75,0.61") != std::string::npos);
  r.rows[0].regime = "sampling_bug(0.01,2)";
  io::write_report_csv(dir.path / "r.csv", r);
  CHECK(io::read_text(dir.path / "r.csv").find(",\"sampling_bug(0.01,2)\",") != std::string::npos);
  io::write_cost_csv(dir.path / "p.csv", r);
  CHECK(io::read_text(dir.path / "p.csv").rfind("k,batch,cost,tpr,on_frontier", 0) == 0);
}

TEST_CASE("summary tables use the score-table percentile columns") {
  TempDir dir;
  ScoreSummary s;
  s.regime = "reference";
  s.count = 10;
  std::vector<ScoreSummary> rows{s};
  io::write_summary_csv(dir.path / "s.csv", rows);
  const auto csv = io::read_text(dir.path / "s.csv");
  CHECK(csv.find("p90,p99,p99.9,p99.99,p99.999") != std::string::npos);
  CHECK(io::format_summary_table(rows).find("p99.999") != std::string::npos);
}

}
