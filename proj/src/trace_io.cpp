#include "difr/trace_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace difr::io {
namespace {

using json = nlohmann::ordered_json;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr char kMagic[4] = {'D', 'I', 'F', 'R'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

json spec_to_json(const SamplingSpec& s) {
  json j;
  j["temperature"] = s.temperature;
  j["top_k"] = s.top_k ? json(*s.top_k) : json(nullptr);
  j["top_p"] = s.top_p;
  j["seed"] = s.seed;
  j["max_margin"] = s.max_margin;
  return j;
}

SamplingSpec spec_from_json(const json& j) {
  SamplingSpec s;
  s.temperature = j.at("temperature").get<double>();
  if (!j.at("top_k").is_null()) s.top_k = j.at("top_k").get<std::size_t>();
  s.top_p = j.at("top_p").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.max_margin = j.at("max_margin").get<double>();
  return s;
}

json toy_to_json(const ToyModelConfig& t) {
  json j;
  j["model_seed"] = t.model_seed;
  j["vocab"] = t.vocab;
  j["hidden"] = t.hidden;
  j["layers"] = t.layers;
  j["weight_bits"] = std::string(precision_name(t.weight_bits));
  return j;
}

ToyModelConfig toy_from_json(const json& j) {
  ToyModelConfig t;
  t.model_seed = j.at("model_seed").get<std::uint64_t>();
  t.vocab = j.at("vocab").get<std::size_t>();
  t.hidden = j.at("hidden").get<std::size_t>();
  t.layers = j.at("layers").get<std::size_t>();
  t.weight_bits = parse_precision(j.at("weight_bits").get<std::string>());
  return t;
}

// +inf is not representable in JSON; it is written as null next to an
// explicit flag column.
json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_nullable(const json& j, bool infinite) {
  if (infinite) return kInf;
  if (j.is_null()) throw FormatError("null score without an infinity flag");
  return j.get<double>();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw FormatError("malformed hex value '" + s + "'");
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& line, const std::filesystem::path& path) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed line: " + e.what());
  }
}

void check_header(const json& h, std::string_view format, int version,
                  const std::filesystem::path& path) {
  if (!h.contains("format") || h["format"] != format) {
    throw FormatError(path.string() + ": not a " + std::string(format) + " file");
  }
  if (h.at("version").get<int>() != version) {
    throw VersionError(path.string() + ": unsupported version " + h["version"].dump());
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

json calibration_to_json(const CalibrationProfile& p) {
  json j;
  j["metric"] = std::string(metric_name(p.metric));
  j["winsor_percentile"] = p.winsor_percentile;
  j["clip_value"] = p.clip_value;
  j["zero_floor_percentile"] = p.zero_floor_percentile ? json(*p.zero_floor_percentile) : json(nullptr);
  j["zero_floor_value"] = p.zero_floor_value ? json(*p.zero_floor_value) : json(nullptr);
  j["orientation"] = p.orientation;
  return j;
}

CalibrationProfile calibration_from_json(const json& j) {
  CalibrationProfile p;
  p.metric = parse_metric(j.at("metric").get<std::string>());
  p.winsor_percentile = j.at("winsor_percentile").get<double>();
  p.clip_value = j.at("clip_value").get<double>();
  if (!j.at("zero_floor_percentile").is_null()) p.zero_floor_percentile = j["zero_floor_percentile"].get<double>();
  if (!j.at("zero_floor_value").is_null()) p.zero_floor_value = j["zero_floor_value"].get<double>();
  p.orientation = j.at("orientation").get<int>();
  return p;
}

json point_to_json(const CostPoint& p) {
  return json{{"k", p.k}, {"batch", p.batch}, {"cost", p.cost()}, {"tpr", p.tpr}};
}

CostPoint point_from_json(const json& j) {
  return {j.at("k").get<std::size_t>(), j.at("batch").get<std::size_t>(), j.at("tpr").get<double>()};
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// RFC 4180 quoting; regime labels like "sampling_bug(0.01,2)" carry commas.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode_fingerprints(const FingerprintSet& set) {
  const auto& cfg = set.config;
  if (cfg.k == 0 || cfg.k > 0xffff) throw std::invalid_argument("fingerprint k must fit in u16");
  if (cfg.stride == 0 || cfg.stride > 0xffffffffULL) {
    throw std::invalid_argument("fingerprint stride must fit in u32");
  }
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le(out, kFingerprintVersion, 2);
  put_le(out, cfg.k, 2);
  put_le(out, cfg.stride, 4);
  put_le(out, cfg.projection_seed, 8);
  for (std::size_t i = 0; i < set.fingerprints.size(); ++i) {
    const auto& f = set.fingerprints[i];
    if (f.position != i * cfg.stride) {
      throw std::invalid_argument("fingerprints must sit at consecutive stride positions");
    }
    if (f.values.size() != cfg.k) throw std::invalid_argument("fingerprint length differs from k");
    for (float v : f.values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  put_le(out, crc32(out), 4);
  return out;
}

FingerprintSet decode_fingerprints(std::span<const std::uint8_t> bytes, std::size_t count,
                                   std::size_t d, std::size_t* consumed) {
  if (bytes.size() < kFingerprintHeaderSize) throw TruncatedError("fingerprint block: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("fingerprint block: bad magic");
  const auto version = get_le(bytes.data() + 4, 2);
  if (version != kFingerprintVersion) {
    throw VersionError("fingerprint block: unsupported version " + std::to_string(version));
  }
  FingerprintSet set;
  set.config.k = get_le(bytes.data() + 6, 2);
  set.config.stride = get_le(bytes.data() + 8, 4);
  set.config.projection_seed = get_le(bytes.data() + 12, 8);
  set.config.d = d;
  const std::size_t payload = count * set.config.k * 4;
  const std::size_t total = kFingerprintHeaderSize + payload + kFingerprintTrailerSize;
  if (bytes.size() < total) throw TruncatedError("fingerprint block: truncated payload");
  const auto stored = static_cast<std::uint32_t>(get_le(bytes.data() + total - 4, 4));
  if (stored != crc32(bytes.first(total - 4))) throw ChecksumError("fingerprint block: CRC32 mismatch");
  const std::uint8_t* p = bytes.data() + kFingerprintHeaderSize;
  for (std::size_t i = 0; i < count; ++i) {
    Fingerprint f;
    f.position = i * set.config.stride;
    f.values.resize(set.config.k);
    for (auto& v : f.values) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4)));
      p += 4;
    }
    set.fingerprints.push_back(std::move(f));
  }
  if (consumed) *consumed = total;
  return set;
}

TraceHeader make_trace_header(const ProviderConfig& provider) {
  TraceHeader h;
  h.provider_label = provider.label;
  h.regime = regime_name(provider.regime);
  h.spec = provider.effective_spec();
  h.toy = provider.effective_toy();
  h.toy_hash = h.toy.hash();
  h.noise_seed = provider.noise_seed;
  return h;
}

std::filesystem::path fingerprint_path(const std::filesystem::path& trace_path) {
  auto p = trace_path;
  p += ".fp";
  return p;
}

void write_traces(const std::filesystem::path& path, const TraceHeader& header,
                  std::span<const TokenTrace> traces) {
  std::string text;
  std::vector<std::uint8_t> fp_bytes;
  const bool any_fp = std::any_of(traces.begin(), traces.end(),
                                  [](const TokenTrace& t) { return t.fingerprints.has_value(); });
  json h;
  h["format"] = "difr-trace";
  h["version"] = header.version;
  h["provider_label"] = header.provider_label;
  h["regime"] = header.regime;
  h["spec"] = spec_to_json(header.spec);
  h["toy"] = toy_to_json(header.toy);
  h["toy_hash"] = hex64(header.toy_hash);
  h["noise_seed"] = header.noise_seed;
  h["fingerprint_file"] = any_fp ? json(fingerprint_path(path).filename().string()) : json(nullptr);
  text += h.dump() + "\n";
  for (const auto& t : traces) {
    if (t.tokens.empty()) throw std::invalid_argument("write_traces: trace has no tokens");
    for (Token tok : t.tokens) {
      if (tok >= header.toy.vocab) throw std::invalid_argument("write_traces: token outside vocabulary");
    }
    json r;
    r["prompt_id"] = t.prompt_id;
    r["config_label"] = t.config_label;
    r["prompt"] = t.prompt;
    r["tokens"] = t.tokens;
    if (t.logits_digest) {
      json d = json::array();
      for (auto v : *t.logits_digest) d.push_back(hex64(v));
      r["logits_digest"] = std::move(d);
    }
    if (t.fingerprints) {
      const auto block = encode_fingerprints(*t.fingerprints);
      r["fingerprints"] = {{"offset", fp_bytes.size()}, {"count", t.fingerprints->fingerprints.size()}};
      fp_bytes.insert(fp_bytes.end(), block.begin(), block.end());
    }
    text += r.dump() + "\n";
  }
  write_text(path, text);
  if (any_fp) {
    std::ofstream out(fingerprint_path(path), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(fp_bytes.data()), static_cast<std::streamsize>(fp_bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + fingerprint_path(path).string());
  }
}

TraceFile read_traces(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw TruncatedError(path.string() + ": empty trace file");
  const json h = parse_line(lines[0], path);
  check_header(h, "difr-trace", kTraceVersion, path);
  TraceFile file;
  try {
    file.header.version = h["version"].get<int>();
    file.header.provider_label = h.at("provider_label").get<std::string>();
    file.header.regime = h.at("regime").get<std::string>();
    file.header.spec = spec_from_json(h.at("spec"));
    file.header.toy = toy_from_json(h.at("toy"));
    file.header.toy_hash = parse_hex64(h.at("toy_hash").get<std::string>());
    file.header.noise_seed = h.at("noise_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  if (file.header.toy_hash != file.header.toy.hash()) {
    throw FormatError(path.string() + ": toy-model hash does not match its config");
  }
  std::vector<std::uint8_t> fp_bytes;
  if (!h.at("fingerprint_file").is_null()) {
    fp_bytes = read_bytes(path.parent_path() / h["fingerprint_file"].get<std::string>());
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json r = parse_line(lines[i], path);
    TokenTrace t;
    try {
      t.prompt_id = r.at("prompt_id").get<std::uint64_t>();
      t.config_label = r.at("config_label").get<std::string>();
      t.spec = file.header.spec;
      t.prompt = r.at("prompt").get<std::vector<Token>>();
      t.tokens = r.at("tokens").get<std::vector<Token>>();
      if (r.contains("logits_digest")) {
        std::vector<std::uint64_t> d;
        for (const auto& v : r["logits_digest"]) d.push_back(parse_hex64(v.get<std::string>()));
        t.logits_digest = std::move(d);
      }
      if (r.contains("fingerprints")) {
        const auto offset = r["fingerprints"].at("offset").get<std::size_t>();
        const auto count = r["fingerprints"].at("count").get<std::size_t>();
        if (offset > fp_bytes.size()) throw TruncatedError(path.string() + ": fingerprint offset beyond file");
        t.fingerprints = decode_fingerprints(std::span(fp_bytes).subspan(offset), count,
                                             file.header.toy.hidden);
      }
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": bad record: " + e.what());
    }
    if (t.tokens.empty()) throw FormatError(path.string() + ": record without tokens");
    for (Token tok : t.tokens) {
      if (tok >= file.header.toy.vocab) throw FormatError(path.string() + ": token outside vocabulary");
    }
    file.traces.push_back(std::move(t));
  }
  return file;
}

void write_trace(const std::filesystem::path& path, const TraceHeader& header,
                 const TokenTrace& trace) {
  write_traces(path, header, std::span(&trace, 1));
}

TokenTrace read_trace(const std::filesystem::path& path) {
  auto file = read_traces(path);
  if (file.traces.size() != 1) throw FormatError(path.string() + ": expected exactly one trace");
  return std::move(file.traces.front());
}

void write_scores(const std::filesystem::path& path, const ScoreFile& scores) {
  json h;
  h["format"] = "difr-scores";
  h["version"] = kScoreVersion;
  h["regime"] = scores.regime;
  h["honest"] = scores.honest;
  std::string text = h.dump() + "\n";
  for (const auto& t : scores.traces) {
    json r;
    r["prompt_id"] = t.prompt_id;
    r["config_label"] = t.config_label;
    json pos = json::array(), claimed = json::array(), verifier = json::array(),
         margin = json::array(), margin_inf = json::array(), clipped = json::array(),
         em = json::array(), ce = json::array(), ce_inf = json::array(), lik = json::array(),
         mc = json::array(), filtered = json::array();
    bool has_mc = !t.records.empty() && t.records.front().mc_likelihood.has_value();
    for (const auto& s : t.records) {
      pos.push_back(s.position);
      claimed.push_back(s.claimed_token);
      verifier.push_back(s.verifier_token);
      margin.push_back(nullable(s.margin));
      margin_inf.push_back(s.margin_infinite() ? 1 : 0);
      clipped.push_back(s.clipped_margin);
      em.push_back(s.exact_match ? 1 : 0);
      ce.push_back(nullable(s.cross_entropy));
      ce_inf.push_back(s.cross_entropy_infinite() ? 1 : 0);
      lik.push_back(s.likelihood);
      if (s.mc_likelihood.has_value() != has_mc) {
        throw std::invalid_argument("write_scores: mc_likelihood present on some records only");
      }
      if (has_mc) mc.push_back(*s.mc_likelihood);
      filtered.push_back(s.filtered_out ? 1 : 0);
    }
    r["position"] = std::move(pos);
    r["claimed_token"] = std::move(claimed);
    r["verifier_token"] = std::move(verifier);
    r["margin"] = std::move(margin);
    r["margin_infinite"] = std::move(margin_inf);
    r["clipped_margin"] = std::move(clipped);
    r["exact_match"] = std::move(em);
    r["cross_entropy"] = std::move(ce);
    r["cross_entropy_infinite"] = std::move(ce_inf);
    r["likelihood"] = std::move(lik);
    if (has_mc) r["mc_likelihood"] = std::move(mc);
    r["filtered_out"] = std::move(filtered);
    if (!t.activation.empty()) {
      r["activation_ks"] = t.activation_ks;
      json apos = json::array(), dist = json::array();
      for (const auto& a : t.activation) {
        apos.push_back(a.position);
        dist.push_back(a.distances);
      }
      r["activation_position"] = std::move(apos);
      r["activation_distance"] = std::move(dist);
    }
    text += r.dump() + "\n";
  }
  write_text(path, text);
}

ScoreFile read_scores(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw TruncatedError(path.string() + ": empty score file");
  const json h = parse_line(lines[0], path);
  check_header(h, "difr-scores", kScoreVersion, path);
  ScoreFile f;
  try {
    f.regime = h.at("regime").get<std::string>();
    f.honest = h.at("honest").get<bool>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json r = parse_line(lines[i], path);
      TraceScores t;
      t.prompt_id = r.at("prompt_id").get<std::uint64_t>();
      t.config_label = r.at("config_label").get<std::string>();
      const auto& pos = r.at("position");
      const std::size_t n = pos.size();
      const bool has_mc = r.contains("mc_likelihood");
      for (const char* key : {"claimed_token", "verifier_token", "margin", "margin_infinite",
                              "clipped_margin", "exact_match", "cross_entropy",
                              "cross_entropy_infinite", "likelihood", "filtered_out"}) {
        if (r.at(key).size() != n) throw FormatError(path.string() + ": column length mismatch");
      }
      if (has_mc && r["mc_likelihood"].size() != n) throw FormatError(path.string() + ": column length mismatch");
      for (std::size_t k = 0; k < n; ++k) {
        ScoreRecord s;
        s.position = pos[k].get<std::size_t>();
        s.claimed_token = r["claimed_token"][k].get<Token>();
        s.verifier_token = r["verifier_token"][k].get<Token>();
        s.margin = from_nullable(r["margin"][k], r["margin_infinite"][k].get<int>() != 0);
        s.clipped_margin = r["clipped_margin"][k].get<double>();
        s.exact_match = r["exact_match"][k].get<int>() != 0;
        s.cross_entropy = from_nullable(r["cross_entropy"][k], r["cross_entropy_infinite"][k].get<int>() != 0);
        s.likelihood = r["likelihood"][k].get<double>();
        if (has_mc) s.mc_likelihood = r["mc_likelihood"][k].get<double>();
        s.filtered_out = r["filtered_out"][k].get<int>() != 0;
        t.records.push_back(s);
      }
      if (r.contains("activation_ks")) {
        t.activation_ks = r["activation_ks"].get<std::vector<std::size_t>>();
        const auto& apos = r.at("activation_position");
        const auto& dist = r.at("activation_distance");
        if (apos.size() != dist.size()) throw FormatError(path.string() + ": column length mismatch");
        for (std::size_t k = 0; k < apos.size(); ++k) {
          ActivationScore a{apos[k].get<std::size_t>(), dist[k].get<std::vector<double>>()};
          if (a.distances.size() != t.activation_ks.size()) {
            throw FormatError(path.string() + ": activation distances differ from k list");
          }
          t.activation.push_back(std::move(a));
        }
      }
      f.traces.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad score record: " + e.what());
  }
  return f;
}

void write_calibration(const std::filesystem::path& path,
                       std::span<const CalibrationProfile> profiles) {
  json j;
  j["format"] = "difr-calibration";
  j["version"] = 1;
  j["profiles"] = json::array();
  for (const auto& p : profiles) j["profiles"].push_back(calibration_to_json(p));
  write_text(path, j.dump(2) + "\n");
}

std::vector<CalibrationProfile> read_calibration(const std::filesystem::path& path) {
  const json j = parse_line(read_text(path), path);
  check_header(j, "difr-calibration", 1, path);
  std::vector<CalibrationProfile> out;
  try {
    for (const auto& p : j.at("profiles")) out.push_back(calibration_from_json(p));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad calibration: " + e.what());
  }
  return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  json j;
  j["format"] = "difr-report";
  j["version"] = 1;
  j["calibrations"] = json::array();
  for (const auto& p : report.calibrations) j["calibrations"].push_back(calibration_to_json(p));
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"metric", std::string(metric_name(r.metric))},
                         {"pool", std::string(pool_name(r.pool))},
                         {"regime", r.regime},
                         {"batch_size", r.batch_size},
                         {"auc", r.result.auc},
                         {"auc_at_fpr", r.result.auc_at_fpr},
                         {"partial_area", r.result.partial_area},
                         {"floored", r.result.floored},
                         {"sample_count", r.sample_count}});
  }
  j["skipped"] = json::array();
  for (const auto& s : report.skipped) {
    j["skipped"].push_back({{"metric", std::string(metric_name(s.metric))},
                            {"regime", s.regime},
                            {"batch_size", s.batch_size},
                            {"reason", s.reason}});
  }
  j["cost_points"] = json::array();
  for (const auto& p : report.cost_points) j["cost_points"].push_back(point_to_json(p));
  j["frontier"] = json::array();
  for (const auto& p : report.frontier) j["frontier"].push_back(point_to_json(p));
  j["min_cost"] = json::array();
  for (const auto& m : report.min_cost) {
    j["min_cost"].push_back({{"threshold", m.threshold}, {"cost", m.cost ? json(*m.cost) : json(nullptr)}});
  }
  write_text(path, j.dump(2) + "\n");
}

EvalReport read_report(const std::filesystem::path& path) {
  const json j = parse_line(read_text(path), path);
  check_header(j, "difr-report", 1, path);
  EvalReport r;
  try {
    for (const auto& p : j.at("calibrations")) r.calibrations.push_back(calibration_from_json(p));
    for (const auto& x : j.at("rows")) {
      EvalRow row;
      row.metric = parse_metric(x.at("metric").get<std::string>());
      row.pool = parse_pool(x.at("pool").get<std::string>());
      row.regime = x.at("regime").get<std::string>();
      row.batch_size = x.at("batch_size").get<std::size_t>();
      row.result.auc = x.at("auc").get<double>();
      row.result.auc_at_fpr = x.at("auc_at_fpr").get<double>();
      row.result.partial_area = x.at("partial_area").get<double>();
      row.result.floored = x.at("floored").get<bool>();
      row.sample_count = x.at("sample_count").get<std::size_t>();
      r.rows.push_back(row);
    }
    for (const auto& x : j.at("skipped")) {
      r.skipped.push_back({parse_metric(x.at("metric").get<std::string>()),
                           x.at("regime").get<std::string>(), x.at("batch_size").get<std::size_t>(),
                           x.at("reason").get<std::string>()});
    }
    for (const auto& p : j.at("cost_points")) r.cost_points.push_back(point_from_json(p));
    for (const auto& p : j.at("frontier")) r.frontier.push_back(point_from_json(p));
    for (const auto& m : j.at("min_cost")) {
      MinCostEntry e{m.at("threshold").get<double>(), std::nullopt};
      if (!m.at("cost").is_null()) e.cost = m["cost"].get<std::size_t>();
      r.min_cost.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad report: " + e.what());
  }
  return r;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string text = "batch_size,metric,pool,regime,auc,auc_at_fpr,partial_area,floored\n";
  for (const auto& r : report.rows) {
    text += std::to_string(r.batch_size) + "," + std::string(metric_name(r.metric)) + "," +
            std::string(pool_name(r.pool)) + "," + csv_field(r.regime) + "," + fmt(r.result.auc) + "," +
            fmt(r.result.auc_at_fpr) + "," + fmt(r.result.partial_area) + "," +
            (r.result.floored ? "1" : "0") + "\n";
  }
  write_text(path, text);
}

void write_cost_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string text = "k,batch,cost,tpr,on_frontier\n";
  for (const auto& p : report.cost_points) {
    const bool on = std::find(report.frontier.begin(), report.frontier.end(), p) != report.frontier.end();
    text += std::to_string(p.k) + "," + std::to_string(p.batch) + "," + std::to_string(p.cost()) +
            "," + fmt(p.tpr) + "," + (on ? "1" : "0") + "\n";
  }
  write_text(path, text);
}

void write_summary_csv(const std::filesystem::path& path, std::span<const ScoreSummary> rows) {
  std::string text = "regime,metric,count,inf_share,mean,std";
  for (double p : kSummaryPercentiles) text += ",p" + fmt(p);
  text += "\n";
  for (const auto& r : rows) {
    text += csv_field(r.regime) + "," + std::string(metric_name(r.metric)) + "," + std::to_string(r.count) +
            "," + fmt(r.inf_share) + "," + fmt(r.mean) + "," + fmt(r.stddev);
    for (double v : r.percentiles) text += "," + fmt(v);
    text += "\n";
  }
  write_text(path, text);
}

std::string format_summary_table(std::span<const ScoreSummary> rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "regime" << std::setw(15) << "metric" << std::right
     << std::setw(9) << "count" << std::setw(9) << "inf" << std::setw(11) << "mean"
     << std::setw(11) << "std";
  for (double p : kSummaryPercentiles) os << std::setw(11) << ("p" + fmt(p));
  os << "\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.regime << std::setw(15) << metric_name(r.metric)
       << std::right << std::setw(9) << r.count << std::setprecision(4) << std::setw(9)
       << r.inf_share << std::setw(11) << r.mean << std::setw(11) << r.stddev;
    for (double v : r.percentiles) os << std::setw(11) << v;
    os << "\n";
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace difr::io
