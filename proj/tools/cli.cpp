#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <json.hpp>

#include "difr/noise.hpp"
#include "difr/provider_sim.hpp"
#include "difr/trace_io.hpp"
#include "difr/verifier_eval.hpp"

namespace difr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<std::string> kDefaultRegimes{
    "reference",   "noisy",        "temp_shift", "seed_shift",          "top_p_shift",
    "quantized(4)", "kv_noise",    "sampling_bug(0.01,2)", "sampling_bug(0.01,32)"};

struct Settings {
  ToyModelConfig toy;
  SamplingSpec spec;
  std::uint64_t seed = 7;
  std::size_t prompts = 64;
  std::size_t prompt_length = 16;
  std::size_t tokens = 128;
  std::vector<std::string> regimes = kDefaultRegimes;
  bool logits_digest = false;
  bool fingerprint = true;
  std::uint64_t projection_seed = 1234;
  std::size_t fingerprint_k = 64;
  std::size_t stride = 1;
  double likelihood_sigma = 0.08;
  bool mc = false;
  McOptions mc_options;
  EvalConfig eval;
  std::vector<std::string> metrics;  // empty: every metric the scores support
  ParetoConfig pareto;
  std::string pareto_incorrect = "kv_noise";
};

std::vector<std::string> split_top_level(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  out.erase(std::remove(out.begin(), out.end(), ""), out.end());
  return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) throw std::invalid_argument("config: bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_top_level(text)) out.push_back(parse_value<T>(key, item));
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

Settings load_settings(const std::string& config_text) {
  Settings s;
  s.spec.top_k = 50;
  s.spec.top_p = 0.95;
  s.spec.seed = 42;
  s.eval.pools = {PoolMethod::mean, PoolMethod::tail_focused};
  if (config_text.empty()) return s;

  boost::property_tree::ptree tree;
  std::istringstream in(config_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  for (const auto& [section, entries] : tree) {
    for (const auto& [name, node] : entries) {
      const std::string key = section + "." + name;
      const std::string v = node.data();
      if (key == "model.model_seed") s.toy.model_seed = parse_value<std::uint64_t>(key, v);
      else if (key == "model.vocab") s.toy.vocab = parse_value<std::size_t>(key, v);
      else if (key == "model.hidden") s.toy.hidden = parse_value<std::size_t>(key, v);
      else if (key == "model.layers") s.toy.layers = parse_value<std::size_t>(key, v);
      else if (key == "sampling.temperature") s.spec.temperature = parse_value<double>(key, v);
      else if (key == "sampling.top_k") {
        if (v == "none") s.spec.top_k.reset();
        else s.spec.top_k = parse_value<std::size_t>(key, v);
      } else if (key == "sampling.top_p") s.spec.top_p = parse_value<double>(key, v);
      else if (key == "sampling.seed") s.spec.seed = parse_value<std::uint64_t>(key, v);
      else if (key == "sampling.max_margin") s.spec.max_margin = parse_value<double>(key, v);
      else if (key == "run.seed") s.seed = parse_value<std::uint64_t>(key, v);
      else if (key == "generate.prompts") s.prompts = parse_value<std::size_t>(key, v);
      else if (key == "generate.prompt_length") s.prompt_length = parse_value<std::size_t>(key, v);
      else if (key == "generate.tokens") s.tokens = parse_value<std::size_t>(key, v);
      else if (key == "generate.regimes") s.regimes = split_top_level(v);
      else if (key == "generate.logits_digest") s.logits_digest = parse_bool(key, v);
      else if (key == "fingerprint.enabled") s.fingerprint = parse_bool(key, v);
      else if (key == "fingerprint.projection_seed") s.projection_seed = parse_value<std::uint64_t>(key, v);
      else if (key == "fingerprint.k") s.fingerprint_k = parse_value<std::size_t>(key, v);
      else if (key == "fingerprint.stride") s.stride = parse_value<std::size_t>(key, v);
      else if (key == "verify.likelihood_sigma") s.likelihood_sigma = parse_value<double>(key, v);
      else if (key == "verify.mc") s.mc = parse_bool(key, v);
      else if (key == "verify.mc_sigma") s.mc_options.sigma_noise = parse_value<double>(key, v);
      else if (key == "verify.mc_trials") s.mc_options.trials = parse_value<std::size_t>(key, v);
      else if (key == "verify.mc_top_m") s.mc_options.top_m = parse_value<std::size_t>(key, v);
      else if (key == "evaluate.batch_sizes") s.eval.batch_sizes = parse_list<std::size_t>(key, v);
      else if (key == "evaluate.metrics") s.metrics = split_top_level(v);
      else if (key == "evaluate.pools") {
        s.eval.pools.clear();
        for (const auto& p : split_top_level(v)) s.eval.pools.push_back(parse_pool(p));
      } else if (key == "evaluate.percentile") s.eval.winsor_percentile = parse_value<double>(key, v);
      else if (key == "evaluate.n_batches") s.eval.n_batches = parse_value<std::size_t>(key, v);
      else if (key == "evaluate.seed") s.eval.seed = parse_value<std::uint64_t>(key, v);
      else if (key == "evaluate.activation_k") s.eval.activation_k = parse_value<std::size_t>(key, v);
      else if (key == "pareto.incorrect") s.pareto_incorrect = v;
      else if (key == "pareto.ks") s.pareto.ks = parse_list<std::size_t>(key, v);
      else if (key == "pareto.max_batch") s.pareto.max_batch = parse_value<std::size_t>(key, v);
      else if (key == "pareto.percentile") s.pareto.winsor_percentile = parse_value<double>(key, v);
      else if (key == "pareto.n_batches") s.pareto.n_batches = parse_value<std::size_t>(key, v);
      else throw std::invalid_argument("config: unknown key " + key);
    }
  }
  return s;
}

ProviderConfig reference_provider(const Settings& s) {
  ProviderConfig p;
  p.toy = s.toy;
  p.spec = s.spec;
  p.regime = regime::Reference{};
  p.label = "reference";
  p.noise_seed = noise::derive_seed(s.seed, 2);
  return p;
}

std::string file_stem(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-';
    if (keep) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::invalid_argument("no " + ext + " files in " + dir.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Context {
  std::vector<std::string> argv;
  std::string command;
  std::string config_path;
  std::string config_text;
  Settings settings;
  fs::path out;
  std::vector<std::string> outputs;  // relative to out
  std::string started;
};

void write_manifest(const Context& c) {
  json m;
  m["command"] = c.command;
  m["argv"] = c.argv;
  m["config_path"] = c.config_path;
  m["config_text"] = c.config_text;
  m["out_dir"] = c.out.string();
  m["seeds"] = {{"run", c.settings.seed},
                {"sampling", c.settings.spec.seed},
                {"projection", c.settings.projection_seed},
                {"evaluate", c.settings.eval.seed}};
  m["outputs"] = c.outputs;
  m["started"] = c.started;
  m["finished"] = utc_now();
  io::write_text(c.out / ("manifest." + c.command + ".json"), m.dump(2) + "\n");
}

std::vector<io::ScoreFile> load_scores(const fs::path& dir) {
  std::vector<io::ScoreFile> out;
  for (const auto& p : list_files(dir, ".jsonl")) out.push_back(io::read_scores(p));
  return out;
}

std::vector<RegimeScores> to_regimes(std::vector<io::ScoreFile> files) {
  std::vector<RegimeScores> out;
  for (auto& f : files) out.push_back({f.regime, f.honest, std::move(f.traces)});
  return out;
}

bool has_activation(const std::vector<RegimeScores>& regimes) {
  for (const auto& r : regimes) {
    for (const auto& t : r.traces) {
      if (!t.activation.empty()) return true;
    }
  }
  return false;
}

std::vector<Metric> resolve_metrics(const Settings& s, const std::vector<RegimeScores>& regimes) {
  std::vector<Metric> out;
  if (!s.metrics.empty()) {
    for (const auto& m : s.metrics) out.push_back(parse_metric(m));
    return out;
  }
  out = {Metric::margin, Metric::exact_match, Metric::likelihood, Metric::cross_entropy};
  bool mc = !regimes.empty();
  for (const auto& r : regimes) {
    for (const auto& t : r.traces) {
      if (!t.records.empty() && !t.records.front().mc_likelihood) mc = false;
    }
  }
  if (mc) out.push_back(Metric::mc_likelihood);
  if (has_activation(regimes)) out.push_back(Metric::activation);
  return out;
}

void cmd_generate(Context& c) {
  const Settings& s = c.settings;
  if (s.prompts == 0) throw std::invalid_argument("generate: --prompts must be >= 1");
  if (s.tokens == 0) throw std::invalid_argument("generate: --tokens must be >= 1");
  if (s.regimes.empty()) throw std::invalid_argument("generate: no regimes configured");
  s.toy.validate();
  s.spec.validate();
  const ProviderConfig ref = reference_provider(s);
  std::vector<ProviderConfig> providers;
  std::set<std::string> stems;
  for (const auto& text : s.regimes) {
    ProviderConfig p = ref;
    p.regime = parse_regime(text);
    p.label = regime_name(p.regime);
    p.effective_spec().validate();
    if (!stems.insert(file_stem(p.label)).second) {
      throw std::invalid_argument("generate: regime '" + p.label + "' listed twice");
    }
    providers.push_back(p);
  }
  GenerateOptions opts;
  opts.record_logits_digest = s.logits_digest;
  if (s.fingerprint) opts.fingerprint = ProjectionConfig{s.projection_seed, s.fingerprint_k, s.toy.hidden, s.stride};
  if (opts.fingerprint) opts.fingerprint->validate();

  const auto prompts = make_prompts(noise::derive_seed(s.seed, 1), s.prompts, s.prompt_length, s.toy.vocab);
  const fs::path dir = c.out / "traces";
  ensure_dir(dir);
  for (const auto& p : providers) {
    const auto traces = generate_traces(prompts, p, s.tokens, opts);
    const fs::path path = dir / (file_stem(p.label) + ".jsonl");
    io::write_traces(path, io::make_trace_header(p), traces);
    c.outputs.push_back(fs::relative(path, c.out).string());
    if (opts.fingerprint) c.outputs.push_back(fs::relative(io::fingerprint_path(path), c.out).string());
    std::cout << "wrote " << path.string() << " (" << traces.size() << " sequences)\n";
  }
}

void cmd_verify(Context& c, const fs::path& traces_dir) {
  const Settings& s = c.settings;
  const ProviderConfig ref = reference_provider(s);
  const ToyModel model(ref.toy);
  VerifyOptions opts;
  opts.score.likelihood_sigma = s.likelihood_sigma;
  opts.score.compute_mc = s.mc;
  opts.score.mc = s.mc_options;
  const fs::path dir = c.out / "scores";
  ensure_dir(dir);
  std::vector<ScoreSummary> summary;
  for (const auto& path : list_files(traces_dir, ".jsonl")) {
    const auto file = io::read_traces(path);
    const auto& h = file.header;
    if (h.toy.vocab != ref.toy.vocab) {
      throw std::invalid_argument(path.string() + ": vocabulary " + std::to_string(h.toy.vocab) +
                                  " differs from reference " + std::to_string(ref.toy.vocab));
    }
    if (h.toy.hidden != ref.toy.hidden) {
      throw std::invalid_argument(path.string() + ": hidden size differs from reference");
    }
    io::ScoreFile scores;
    scores.regime = h.provider_label;
    scores.honest = is_honest(parse_regime(h.regime));
    scores.traces.resize(file.traces.size());
    for (std::size_t i = 0; i < file.traces.size(); ++i) {
      scores.traces[i] = verify_trace(model, file.traces[i], ref, opts);
    }
    const fs::path out = dir / path.filename();
    io::write_scores(out, scores);
    c.outputs.push_back(fs::relative(out, c.out).string());
    std::vector<RegimeScores> one{{scores.regime, scores.honest, scores.traces}};
    for (Metric m : resolve_metrics(s, one)) {
      summary.push_back(summarize(scores.regime, scores.traces, m, s.eval.activation_k));
    }
  }
  io::write_summary_csv(c.out / "summary.csv", summary);
  c.outputs.push_back("summary.csv");
  std::cout << io::format_summary_table(summary);
}

void cmd_calibrate(Context& c, const fs::path& scores_dir) {
  const Settings& s = c.settings;
  const auto regimes = to_regimes(load_scores(scores_dir));
  EvalConfig cfg = s.eval;
  cfg.metrics = resolve_metrics(s, regimes);
  const auto profiles = fit_calibrations(regimes, cfg);
  io::write_calibration(c.out / "calibration.json", profiles);
  c.outputs.push_back("calibration.json");
  for (const auto& p : profiles) {
    std::cout << metric_name(p.metric) << " p" << p.winsor_percentile << " clip=" << p.clip_value;
    if (p.zero_floor_value) std::cout << " floor(p" << *p.zero_floor_percentile << ")=" << *p.zero_floor_value;
    std::cout << "\n";
  }
}

void cmd_evaluate(Context& c, const fs::path& scores_dir) {
  const Settings& s = c.settings;
  const auto regimes = to_regimes(load_scores(scores_dir));
  EvalConfig cfg = s.eval;
  cfg.metrics = resolve_metrics(s, regimes);
  const auto report = evaluate(regimes, cfg);
  io::write_report(c.out / "report.json", report);
  io::write_report_csv(c.out / "report.csv", report);
  c.outputs.push_back("report.json");
  c.outputs.push_back("report.csv");
  std::printf("%-14s %-13s %-28s %7s %8s %10s\n", "metric", "pool", "regime", "batch", "auc", "auc@1%fpr");
  for (const auto& r : report.rows) {
    std::printf("%-14s %-13s %-28s %7zu %8.4f %10.4f%s\n", std::string(metric_name(r.metric)).c_str(),
                std::string(pool_name(r.pool)).c_str(), r.regime.c_str(), r.batch_size, r.result.auc,
                r.result.auc_at_fpr, r.result.floored ? " (floor)" : "");
  }
  for (const auto& sk : report.skipped) {
    std::printf("skipped %s %s batch %zu: %s\n", std::string(metric_name(sk.metric)).c_str(),
                sk.regime.c_str(), sk.batch_size, sk.reason.c_str());
  }
}

void cmd_pareto(Context& c, const fs::path& scores_dir) {
  const Settings& s = c.settings;
  const auto regimes = to_regimes(load_scores(scores_dir));
  std::vector<RegimeScores> honest;
  const RegimeScores* incorrect = nullptr;
  for (const auto& r : regimes) {
    if (r.honest) {
      honest.push_back(r);
      continue;
    }
    const std::string bare = r.label.substr(0, r.label.find('('));
    if (r.label == s.pareto_incorrect || bare == s.pareto_incorrect) {
      if (incorrect) throw std::invalid_argument("pareto: '" + s.pareto_incorrect + "' matches several regimes");
      incorrect = &r;
    }
  }
  if (!incorrect) throw std::invalid_argument("pareto: no scores for regime '" + s.pareto_incorrect + "'");
  if (honest.empty()) throw std::invalid_argument("pareto: missing honest scores");
  ParetoConfig cfg = s.pareto;
  cfg.seed = s.eval.seed;
  const auto report = pareto_sweep(honest, *incorrect, cfg);
  io::write_report(c.out / "pareto.json", report);
  io::write_cost_csv(c.out / "pareto.csv", report);
  c.outputs.push_back("pareto.json");
  c.outputs.push_back("pareto.csv");
  std::printf("frontier (%s):\n%6s %4s %4s %8s\n", incorrect->label.c_str(), "cost", "k", "B", "tpr");
  for (const auto& p : report.frontier) std::printf("%6zu %4zu %4zu %8.4f\n", p.cost(), p.k, p.batch, p.tpr);
  std::printf("min cost per %zu tokens:\n", kParetoWindow);
  for (const auto& m : report.min_cost) {
    if (m.cost) std::printf("  tpr >= %-7g %zu\n", m.threshold, *m.cost);
    else std::printf("  tpr >= %-7g unreachable\n", m.threshold);
  }
}

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> prompts;
  std::optional<std::size_t> tokens;
  std::string batch_sizes;
  std::string metrics;
  std::optional<double> percentile;
  std::string traces;
  std::string scores;
  std::string pools;
  std::string ks;
  std::string incorrect;
  std::string manifest;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "INI config file");
  sub->add_option("--out", o.out, "output directory")->required();
  sub->add_option("--seed", o.seed, "run seed (prompts, provider noise, batch sampling)");
  sub->add_option("--prompts", o.prompts, "number of prompts");
  sub->add_option("--tokens", o.tokens, "generated tokens per prompt");
  sub->add_option("--batch-sizes", o.batch_sizes, "comma-separated batch sizes");
  sub->add_option("--metrics", o.metrics, "comma-separated metrics");
  sub->add_option("--percentile", o.percentile, "winsorization percentile");
}

int run_impl(const std::vector<std::string>& args, const std::optional<std::string>& config_text,
             const std::optional<std::string>& out_override) {
  CLI::App app{"Divergence-from-reference verification toolkit"};
  app.require_subcommand(1);
  Overrides o;
  auto* gen = app.add_subcommand("generate", "simulate providers and write trace files");
  auto* ver = app.add_subcommand("verify", "replay traces and write score files");
  auto* cal = app.add_subcommand("calibrate", "fit winsorization profiles on honest scores");
  auto* eva = app.add_subcommand("evaluate", "batch-level detection metrics");
  auto* par = app.add_subcommand("pareto", "communication-cost sweep for activation fingerprints");
  auto* rep = app.add_subcommand("replay", "rerun a command from its manifest");
  for (auto* sub : {gen, ver, cal, eva, par}) add_common(sub, o);
  ver->add_option("--traces", o.traces, "trace directory (default <out>/traces)");
  for (auto* sub : {cal, eva, par}) sub->add_option("--scores", o.scores, "score directory (default <out>/scores)");
  for (auto* sub : {cal, eva}) sub->add_option("--pools", o.pools, "mean,tail_focused");
  par->add_option("--ks", o.ks, "comma-separated projection dimensions");
  par->add_option("--incorrect", o.incorrect, "regime label to detect");
  rep->add_option("manifest", o.manifest, "manifest file")->required();
  rep->add_option("--out", o.out, "output directory (default: the recorded one)");

  std::vector<std::string> rev(args.begin() + 1, args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (rep->parsed()) {
      const json m = json::parse(io::read_text(o.manifest));
      const auto argv = m.at("argv").get<std::vector<std::string>>();
      std::optional<std::string> out;
      if (!o.out.empty()) out = o.out;
      return run_impl(argv, m.at("config_text").get<std::string>(), out);
    }

    Context c;
    c.argv = args;
    c.started = utc_now();
    c.config_path = o.config;
    if (config_text) c.config_text = *config_text;
    else if (!o.config.empty()) c.config_text = io::read_text(o.config);
    c.settings = load_settings(c.config_text);
    Settings& s = c.settings;
    if (o.seed) s.seed = s.eval.seed = *o.seed;
    if (o.prompts) s.prompts = *o.prompts;
    if (o.tokens) s.tokens = *o.tokens;
    if (!o.batch_sizes.empty()) s.eval.batch_sizes = parse_list<std::size_t>("--batch-sizes", o.batch_sizes);
    if (!o.metrics.empty()) s.metrics = split_top_level(o.metrics);
    if (o.percentile) s.eval.winsor_percentile = s.pareto.winsor_percentile = *o.percentile;
    if (!o.pools.empty()) {
      s.eval.pools.clear();
      for (const auto& p : split_top_level(o.pools)) s.eval.pools.push_back(parse_pool(p));
    }
    if (!o.ks.empty()) s.pareto.ks = parse_list<std::size_t>("--ks", o.ks);
    if (!o.incorrect.empty()) s.pareto_incorrect = o.incorrect;
    c.out = out_override ? fs::path(*out_override) : fs::path(o.out);
    if (out_override) {
      // Keep the recorded argv pointing at the directory actually written.
      for (std::size_t i = 0; i + 1 < c.argv.size(); ++i) {
        if (c.argv[i] == "--out") c.argv[i + 1] = *out_override;
      }
    }
    ensure_dir(c.out);
    const auto dir_or = [&](const std::string& given, const char* sub) {
      return given.empty() ? c.out / sub : fs::path(given);
    };

    if (gen->parsed()) {
      c.command = "generate";
      cmd_generate(c);
    } else if (ver->parsed()) {
      c.command = "verify";
      cmd_verify(c, dir_or(o.traces, "traces"));
    } else if (cal->parsed()) {
      c.command = "calibrate";
      cmd_calibrate(c, dir_or(o.scores, "scores"));
    } else if (eva->parsed()) {
      c.command = "evaluate";
      cmd_evaluate(c, dir_or(o.scores, "scores"));
    } else if (par->parsed()) {
      c.command = "pareto";
      cmd_pareto(c, dir_or(o.scores, "scores"));
    }
    write_manifest(c);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) { return run_impl(args, std::nullopt, std::nullopt); }

}  // namespace difr::cli
