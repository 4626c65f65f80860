// peel: command-line front end for the reasoning-chain pipeline.
//
// Exit codes: 0 success, 1 backend/transport failure, 2 validation failure,
// 3 usage error (bad flags, missing stage outputs).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "peel/aggregation.hpp"
#include "peel/chain_io.hpp"
#include "peel/digest.hpp"
#include "peel/error.hpp"
#include "peel/fsutil.hpp"
#include "peel/log.hpp"
#include "peel/mock_backend.hpp"
#include "peel/pipeline.hpp"
#include "peel/stats.hpp"
#include "peel/validator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string run_id;
  std::vector<std::string> topics;
  bool mock = false;
  std::string script;
  std::size_t parallel = 0;  // 0: from config, else 1
  std::string cache_dir;
  std::string out;
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::string speakers;
  std::string themes;
  std::string prompts;
  std::string log_level = "warn";
  std::string chains;  // stats only
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON config file (backends, parallelism, paths)");
  cmd->add_option("--run-id", o.run_id, "Run to use; default: derived from inputs, else the latest run");
  cmd->add_option("--topic", o.topics, "Topic id or label to analyze (repeatable)");
  cmd->add_flag("--mock", o.mock, "Use the offline mock backend (needs --script)");
  cmd->add_option("--script", o.script, "Mock response script");
  cmd->add_option("--seed", o.seed, "Mock seed");
  cmd->add_option("--parallel", o.parallel, "Maximum concurrent tasks")->check(CLI::PositiveNumber);
  cmd->add_option("--cache-dir", o.cache_dir, "LLM response cache directory");
  cmd->add_option("--out", o.out, "Directory holding runs/ (default: .)");
  cmd->add_option("--input", o.inputs, "Transcript file (repeatable)");
  cmd->add_option("--speakers", o.speakers, "CSV: speaker,episode,profession,gender");
  cmd->add_option("--themes", o.themes, "CSV: question_id,theme");
  cmd->add_option("--prompts", o.prompts, "Directory of prompt templates replacing the built-in set");
  cmd->add_option("--log-level", o.log_level, "debug|info|warn|error|off");
}

// Secrets are only read from the environment.
void reject_api_keys(const json& doc, const std::string& where) {
  if (doc.is_object()) {
    for (const auto& [key, value] : doc.items()) {
      if (key == "api_key" || key == "apiKey" || key == "api-key") {
        throw peel::UsageError("config " + where + "." + key +
                               ": API keys are read from environment variables only (use api_key_env)");
      }
      reject_api_keys(value, where + "." + key);
    }
  } else if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) reject_api_keys(doc[i], where + "[" + std::to_string(i) + "]");
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json doc;
  try {
    doc = json::parse(peel::read_file(path));
  } catch (const json::parse_error& e) {
    throw peel::UsageError("config " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw peel::UsageError("config " + path + ": expected a JSON object");
  reject_api_keys(doc, "");
  return doc;
}

std::string str_or(const json& cfg, const char* key, const std::string& flag) {
  if (!flag.empty()) return flag;
  return cfg.contains(key) ? cfg.at(key).get<std::string>() : std::string();
}

peel::Clock pick_clock(bool mock) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    return peel::fixed_clock(peel::format_utc(std::strtoll(epoch, nullptr, 10)));
  }
  return mock ? peel::fixed_clock(peel::format_utc(0)) : peel::system_clock();
}

struct Setup {
  peel::PipelineConfig config;
  fs::path runs_dir;
};

Setup build_setup(const Options& o) {
  const json cfg = load_config(o.config);
  Setup s;
  auto& ens = s.config.ensemble;

  const std::string prompts = str_or(cfg, "prompts", o.prompts);
  if (!prompts.empty()) ens.prompts = peel::PromptSet::from_directory(prompts);

  const bool mock = o.mock || cfg.value("mock", false);
  if (mock) {
    const std::string script = str_or(cfg, "script", o.script);
    if (script.empty()) throw peel::UsageError("--mock requires --script");
    auto shared = std::make_shared<peel::MockScript>(peel::MockScript::load(script));
    const std::uint64_t seed = o.seed ? o.seed : cfg.value("seed", std::uint64_t{0});
    ens.worker_a = std::make_shared<peel::MockBackend>("mock-worker-a", shared, seed);
    ens.worker_b = std::make_shared<peel::MockBackend>("mock-worker-b", shared, seed);
    ens.integrator = std::make_shared<peel::MockBackend>("mock-integrator", shared, seed);
    ens.sleep = [](std::chrono::milliseconds) {};
    s.config.backend_settings = {{"mock", true}, {"seed", seed}, {"script", peel::sha256_hex(peel::read_file(script))}};
  } else {
    if (!o.script.empty()) throw peel::UsageError("--script is only meaningful with --mock");
    const json backends = cfg.value("backends", json::object());
    auto make = [&](const char* role) -> std::shared_ptr<peel::LlmBackend> {
      if (!backends.contains(role)) {
        throw peel::UsageError(std::string("live mode needs backends.") + role +
                               " in --config (or use --mock --script FILE)");
      }
      const json& b = backends.at(role);
      peel::OpenAiBackendConfig bc;
      bc.base_url = b.value("base_url", "");
      bc.model = b.value("model", "");
      bc.api_key_env = b.value("api_key_env", "");
      if (b.contains("timeout_s")) bc.timeout = std::chrono::seconds(b.at("timeout_s").get<int>());
      return peel::make_openai_backend(bc);
    };
    ens.worker_a = make("worker_a");
    ens.worker_b = make("worker_b");
    ens.integrator = make("integrator");
    s.config.backend_settings = {{"mock", false}};
  }
  ens.clock = pick_clock(mock);
  if (cfg.contains("temperature")) ens.params.temperature = cfg.at("temperature").get<double>();
  if (cfg.contains("max_tokens")) ens.params.max_tokens = cfg.at("max_tokens").get<int>();
  if (cfg.contains("retry")) {
    const json& r = cfg.at("retry");
    ens.retry.retry_limit = r.value("limit", ens.retry.retry_limit);
    ens.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", 500));
  }
  const std::string cache = str_or(cfg, "cache_dir", o.cache_dir);
  if (!cache.empty()) ens.cache_dir = cache;

  s.config.parallel = o.parallel ? o.parallel : cfg.value("parallel", std::size_t{1});
  s.config.topics = o.topics;
  if (s.config.topics.empty() && cfg.contains("topics")) {
    s.config.topics = cfg.at("topics").get<std::vector<std::string>>();
  }
  const std::string speakers = str_or(cfg, "speakers", o.speakers);
  if (!speakers.empty()) {
    const std::string text = peel::read_file(speakers);
    s.config.speakers = peel::SpeakerDirectory::from_csv(text);
    s.config.speakers_digest = peel::sha256_hex(text);
  }
  const std::string themes = str_or(cfg, "themes", o.themes);
  if (!themes.empty()) {
    const std::string text = peel::read_file(themes);
    s.config.themes = peel::parse_theme_csv(text);
    s.config.themes_digest = peel::sha256_hex(text);
  }
  if (cfg.contains("reliability_weights")) {
    const auto w = cfg.at("reliability_weights").get<std::vector<double>>();
    if (w.size() != 3) throw peel::UsageError("reliability_weights needs three numbers (R3, R2, R1)");
    s.config.reliability_weights = {w[0], w[1], w[2]};
  }
  s.runs_dir = fs::path(str_or(cfg, "out", o.out).empty() ? "." : str_or(cfg, "out", o.out)) / "runs";
  return s;
}

std::string resolve_run_id(const Options& o, const Setup& s, const std::vector<fs::path>& inputs) {
  if (!o.run_id.empty()) return o.run_id;
  if (!inputs.empty()) return peel::Pipeline::default_run_id(inputs, s.config);
  const fs::path latest = s.runs_dir / "LATEST";
  if (fs::exists(latest)) {
    std::string id = peel::read_file(latest);
    while (!id.empty() && (id.back() == '\n' || id.back() == '\r')) id.pop_back();
    return id;
  }
  throw peel::UsageError("no run found under " + s.runs_dir.string() + "; run 'ingest' first");
}

json stage_summary(const peel::Pipeline& p, const std::vector<peel::Stage>& ran) {
  json names = json::array();
  for (auto st : ran) names.push_back(std::string(peel::to_string(st)));
  const auto point = p.status();
  return {{"run_id", p.run_id()},
          {"run_dir", p.run_dir().string()},
          {"ran", names},
          {"next", point.next ? json(std::string(peel::to_string(*point.next))) : json("done")}};
}

int run_stage_command(const Options& o, std::optional<peel::Stage> stage) {
  peel::set_log_level(o.log_level);
  Setup s = build_setup(o);
  std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
  const bool takes_inputs = !stage || *stage == peel::Stage::Ingest;
  if (!takes_inputs && !inputs.empty()) throw peel::UsageError("--input is only accepted by ingest and run-all");
  peel::Pipeline pipeline(s.runs_dir, resolve_run_id(o, s, inputs), std::move(s.config));
  if (!inputs.empty()) pipeline.set_inputs(inputs);
  std::vector<peel::Stage> ran;
  if (stage) {
    if (pipeline.run(*stage)) ran.push_back(*stage);
  } else {
    ran = pipeline.run_all();
  }
  std::cout << stage_summary(pipeline, ran).dump(2) << "\n";
  return 0;
}

int run_status(const Options& o) {
  peel::set_log_level(o.log_level);
  Setup s = build_setup(o);
  peel::Pipeline pipeline(s.runs_dir, resolve_run_id(o, s, {}), std::move(s.config));
  std::cout << stage_summary(pipeline, {}).dump(2) << "\n";
  return 0;
}

// Composition and z-tests straight from chain files, without a run.
int run_stats_on_chains(const Options& o) {
  peel::set_log_level(o.log_level);
  const auto chains = peel::load_chains(o.chains);
  const auto comp = peel::composition_summary(chains);
  json z = json::object();
  const auto moral = peel::index_of(peel::PremiseType::Moral);
  std::size_t x2 = 0, n2 = 0;
  for (auto t : peel::kPremiseTypes) {
    if (t == peel::PremiseType::Moral) continue;
    x2 += comp.implicit_counts[peel::index_of(t)];
    n2 += comp.type_counts[peel::index_of(t)];
  }
  try {
    z = peel::to_json(peel::two_prop_z(comp.implicit_counts[moral], comp.type_counts[moral], x2, n2));
  } catch (const peel::InputError& e) {
    z = {{"error", e.what()}};
  }
  std::cout << json{{"chains", chains.size()}, {"composition", peel::to_json(comp)}, {"moral_implicit_z", z}}.dump(2)
            << "\n";
  return 0;
}

int run_validate(const std::vector<std::string>& paths) {
  json out = json::array();
  bool ok = true;
  for (const auto& p : paths) {
    for (const auto& chain : peel::load_chains(p)) {
      const auto report = peel::validate_chain(chain);
      ok = ok && report.is_valid;
      out.push_back(peel::report_to_json(report));
    }
  }
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"peel: extract, compare and aggregate reasoning chains from AI-risk discourse"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  Options o;
  const std::vector<std::pair<const char*, const char*>> stage_commands = {
      {"ingest", "Parse transcripts into the run"},
      {"segment", "Split transcripts into topical segments"},
      {"summarize", "Summarize each speaker's AI-related statements"},
      {"extract", "Extract reasoning chains from summaries"},
      {"classify", "Assign topic and attitude to every conclusion"},
      {"pairs", "Enumerate optimistic x pessimistic pairs per topic"},
      {"disagree", "Find divergences and the root divergence per pair"},
      {"aggregate", "Map causal root divergences onto core questions"},
      {"stats", "Composition, z-tests, root-type distributions, regression export"},
      {"report", "Plot-ready JSON/CSV tables"},
  };
  std::map<CLI::App*, peel::Stage> stage_of;
  for (const auto& [name, help] : stage_commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, o);
    if (std::string(name) == "stats") {
      cmd->add_option("--chains", o.chains, "Compute composition statistics from chain files only");
    }
    stage_of[cmd] = *peel::stage_from_string(name);
  }
  CLI::App* run_all = app.add_subcommand("run-all", "Run every pending stage");
  add_common(run_all, o);
  CLI::App* status = app.add_subcommand("status", "Show the next pending stage of a run");
  add_common(status, o);
  std::vector<std::string> validate_paths;
  CLI::App* validate = app.add_subcommand("validate", "Check chain files (structural checks V1-V8)");
  validate->add_option("paths", validate_paths, "Chain files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (run_all->parsed()) return run_stage_command(o, std::nullopt);
    if (status->parsed()) return run_status(o);
    if (validate->parsed()) return run_validate(validate_paths);
    for (const auto& [cmd, stage] : stage_of) {
      if (!cmd->parsed()) continue;
      if (stage == peel::Stage::Stats && !o.chains.empty()) return run_stats_on_chains(o);
      return run_stage_command(o, stage);
    }
    return 3;
  } catch (const peel::UsageError& e) {
    std::cerr << "peel: " << e.what() << "\n";
    return 3;
  } catch (const peel::BackendError& e) {
    std::cerr << "peel: backend failure: " << e.what() << "\n";
    return 1;
  } catch (const peel::ValidationError& e) {
    std::cerr << "peel: validation failure: " << e.what() << "\n";
    return 2;
  } catch (const peel::InputError& e) {
    std::cerr << "peel: " << e.what() << "\n";
    return 2;
  } catch (const peel::WriteOnceViolation& e) {
    std::cerr << "peel: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "peel: bad JSON value: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "peel: " << e.what() << "\n";
    return 1;
  }
}
