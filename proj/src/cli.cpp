#include "restsec/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "restsec/auth.hpp"
#include "restsec/corpus.hpp"
#include "restsec/errors.hpp"
#include "restsec/executor.hpp"
#include "restsec/fixtures.hpp"
#include "restsec/oracles.hpp"
#include "restsec/payloads.hpp"
#include "restsec/schema.hpp"

namespace restsec {

namespace {

std::string trim_slash(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

SchemaModel load_run_schema(const RunConfig& c, const std::string& fallback_source = {}) {
  if (c.schema_text) return load_schema(*c.schema_text);
  const std::string& source = c.schema_source.empty() ? fallback_source : c.schema_source;
  if (source.empty()) throw ConfigError("no schema given");
  return load_schema_source(source);
}

std::vector<AuthIdentity> load_run_auth(const RunConfig& c) {
  if (c.auth_text) return load_auth_config(*c.auth_text);
  if (c.auth_path.empty()) throw ConfigError("no auth config given");
  return load_auth_config_file(c.auth_path);
}

SecurityConfig security_config(const RunConfig& c) {
  SecurityConfig sc;
  for (const auto& [code, on] : c.oracles) {
    if (code == fault::kServerError) continue;
    if (on) {
      sc.enabled.insert(code);
    } else {
      sc.enabled.erase(code);
    }
  }
  if (auto it = c.oracles.find(fault::kServerError); it != c.oracles.end()) {
    sc.tag_server_errors = it->second;
  }
  sc.tag_server_errors = sc.tag_server_errors || c.tag_server_errors;
  sc.sqli_sleep_seconds = c.sqli_sleep_seconds;
  sc.sqli_baseline_max_ms = c.sqli_baseline_max_ms;
  if (!c.sqli_payloads_path.empty()) sc.sqli_templates = load_payload_file(c.sqli_payloads_path);
  if (!c.xss_payloads_path.empty()) sc.xss_payloads = load_payload_file(c.xss_payloads_path);
  if (!c.stack_trace_patterns_path.empty()) {
    sc.stack_traces = StackTraceDetector::from_json(slurp(c.stack_trace_patterns_path));
  }
  sc.phase_budget_ms = c.security_budget_ms();
  sc.seed = c.seed;
  if (auto err = sc.validate(c.timeout_ms); !err.empty()) throw ConfigError(err);
  return sc;
}

/// Security phase, report and suites over an existing pool.
void finish_run(const RunConfig& c, const SchemaModel& schema, const std::string& schema_source,
                CredentialStore& creds, HttpExecutor& executor, TestPool& pool, RunResult& r) {
  SecurityPhase phase(schema, creds, executor, security_config(c));
  auto sec = phase.run(pool);
  r.pool_size = pool.size();
  r.warnings.insert(r.warnings.end(), sec.warnings.begin(), sec.warnings.end());

  r.report.target_base_url = c.base_url;
  r.report.schema_source = schema_source;
  r.report.run_seed = c.seed;
  r.report.faults = std::move(sec.faults);
  r.report.phase_stats = sec.stats;
  r.report.generated_at = utc_timestamp();

  std::filesystem::create_directories(c.out_dir);
  r.report_path = (std::filesystem::path(c.out_dir) / "report.json").string();
  write_report(r.report, r.report_path);
  auto plan = make_plan(r.report.faults, c.base_url, creds.identities());
  for (auto format : c.emit) {
    auto written = write_suite(emit_suite(plan, format), c.out_dir);
    r.suite_paths.insert(r.suite_paths.end(), written.begin(), written.end());
  }
  r.exit_code = r.report.faults.empty() ? kExitClean : kExitFaults;
  spdlog::info("{} fault(s); report written to {}", r.report.faults.size(), r.report_path);
}

template <typename Fn>
RunResult guarded(Fn&& fn) {
  RunResult r;
  try {
    fn(r);
  } catch (const std::exception& e) {
    r.exit_code = kExitError;
    r.error = e.what();
    spdlog::error("{}", r.error);
  }
  return r;
}

ExecutorOptions executor_options(const RunConfig& c) {
  ExecutorOptions o;
  o.timeout_ms = c.timeout_ms;
  o.proxy = c.proxy;
  return o;
}

}  // namespace

std::string RunConfig::validate(bool need_budget) const {
  if (base_url.empty()) return "a base URL is required";
  if (need_budget && !(budget_seconds > 0.0)) return "--budget-seconds must be positive";
  if (security_budget_seconds && security_budget_percent) {
    return "give either --security-budget-seconds or --security-budget-percent";
  }
  if (security_budget_seconds && *security_budget_seconds < 0.0) {
    return "--security-budget-seconds must not be negative";
  }
  if (security_budget_percent &&
      !(*security_budget_percent > 0.0 && *security_budget_percent <= 100.0)) {
    return "--security-budget-percent must be in (0, 100]";
  }
  if (!(timeout_ms > 0.0)) return "--timeout-ms must be positive";
  for (const auto& [code, on] : oracles) {
    if (!is_known_fault_code(code) || code == fault::kSchemaMismatch) {
      return fmt::format("unknown oracle code {}", code);
    }
  }
  return {};
}

double RunConfig::security_budget_ms() const {
  if (security_budget_seconds) return *security_budget_seconds * 1000.0;
  double percent = security_budget_percent.value_or(100.0);
  return budget_seconds * 1000.0 * percent / 100.0;
}

RunResult run_fuzz(const RunConfig& config) {
  if (!config.corpus_in.empty()) return run_security_only(config);
  return guarded([&](RunResult& r) {
    if (auto err = config.validate(); !err.empty()) throw ConfigError(err);
    auto schema = load_run_schema(config);
    for (const auto& w : schema.warnings()) spdlog::warn("schema: {}", w);
    CredentialStore creds(load_run_auth(config));
    HttpExecutor executor(config.base_url, executor_options(config));
    // Fail fast on payload or oracle settings before spending the budget.
    security_config(config);

    FuzzConfig fc;
    fc.budget_seconds = config.budget_seconds;
    fc.seed = config.seed;
    fc.plateau_window = config.plateau_window;
    fc.deny_paths = config.deny_paths;
    TestPool pool = base_fuzz(schema, creds, executor, fc, &r.fuzz);
    spdlog::info("fuzzing: {} tests, {} calls, pool of {}", r.fuzz.tests_executed,
                 r.fuzz.calls_executed, pool.size());
    if (!config.corpus_out.empty()) {
      save_corpus(Corpus{config.base_url, config.schema_source, config.seed, pool},
                  config.corpus_out);
    }
    finish_run(config, schema, config.schema_source, creds, executor, pool, r);
  });
}

RunResult run_security_only(const RunConfig& config) {
  return guarded([&](RunResult& r) {
    if (auto err = config.validate(false); !err.empty()) throw ConfigError(err);
    if (config.corpus_in.empty()) throw ConfigError("--corpus-in is required");
    Corpus corpus = load_corpus(config.corpus_in);
    if (trim_slash(corpus.target_base_url) != trim_slash(config.base_url)) {
      throw ConfigError(fmt::format("corpus was recorded against {} but the target is {}",
                                    corpus.target_base_url, config.base_url));
    }
    auto schema = load_run_schema(config, corpus.schema_source);
    for (const auto& entry : corpus.pool.entries()) {
      for (const auto& call : entry.test.calls) {
        if (!schema.declares(call.endpoint)) {
          throw ConfigError("corpus call " + call.endpoint.str() + " is not in the schema");
        }
      }
    }
    CredentialStore creds(load_run_auth(config));
    for (const auto& entry : corpus.pool.entries()) {
      for (const auto& call : entry.test.calls) {
        if (!creds.has(call.identity)) {
          throw ConfigError("corpus identity '" + call.identity + "' is not in the auth config");
        }
      }
    }
    HttpExecutor executor(config.base_url, executor_options(config));
    TestPool pool = std::move(corpus.pool);
    const std::string source =
        config.schema_source.empty() ? corpus.schema_source : config.schema_source;
    finish_run(config, schema, source, creds, executor, pool, r);
  });
}

ReplayResult run_replay(const std::string& plan_path, const std::string& base_url,
                        double timeout_ms) {
  ReplayResult r;
  try {
    auto plan = load_plan(plan_path);
    ExecutorOptions options;
    options.timeout_ms = timeout_ms;
    r.outcomes = replay_plan(plan, base_url, options);
    for (const auto& o : r.outcomes) {
      if (o.passed) {
        spdlog::info("PASS {}", o.name);
      } else {
        spdlog::error("FAIL {}: {}", o.name, o.failure);
        r.exit_code = kExitError;
      }
    }
  } catch (const std::exception& e) {
    r.exit_code = kExitError;
    r.error = e.what();
    spdlog::error("{}", r.error);
  }
  return r;
}

std::optional<std::pair<int, bool>> parse_oracle_toggle(std::string_view text) {
  auto eq = text.find('=');
  if (eq == std::string_view::npos) return std::nullopt;
  auto code_text = text.substr(0, eq);
  if (!code_text.empty() && (code_text[0] == 'F' || code_text[0] == 'f'))
    code_text.remove_prefix(1);
  int code = 0;
  try {
    std::size_t used = 0;
    code = std::stoi(std::string(code_text), &used);
    if (used != code_text.size()) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  auto value = text.substr(eq + 1);
  if (value == "on") return std::pair{code, true};
  if (value == "off") return std::pair{code, false};
  return std::nullopt;
}

namespace {

std::atomic<bool> g_stop{false};

void add_run_options(CLI::App& cmd, RunConfig& c, std::vector<std::string>& toggles,
                     std::vector<std::string>& emit) {
  cmd.add_option("--schema", c.schema_source, "OpenAPI schema file or URL");
  cmd.add_option("--base-url", c.base_url, "Target base URL")->required();
  cmd.add_option("--auth", c.auth_path, "Auth config (YAML)")->required();
  cmd.add_option("--budget-seconds", c.budget_seconds, "Fuzzing budget in seconds");
  cmd.add_option("--seed", c.seed, "Random seed");
  cmd.add_option("--oracle", toggles, "Enable or disable an oracle, e.g. 205=off");
  cmd.add_option("--sqli-sleep-seconds", c.sqli_sleep_seconds, "Sleep injected by SQLi payloads");
  cmd.add_option("--sqli-baseline-max-ms", c.sqli_baseline_max_ms,
                 "Upper bound on the uninjected call duration");
  auto* abs = cmd.add_option_function<double>(
      "--security-budget-seconds", [&c](double v) { c.security_budget_seconds = v; },
      "Security phase budget in seconds");
  auto* pct = cmd.add_option_function<double>(
      "--security-budget-percent", [&c](double v) { c.security_budget_percent = v; },
      "Security phase budget as a percentage of the fuzzing budget");
  abs->excludes(pct);
  cmd.add_option("--emit", emit, "Suite formats: json-plan, shell, httpfile")->delimiter(',');
  cmd.add_option("--corpus-in", c.corpus_in, "Skip fuzzing and load this corpus");
  cmd.add_option("--corpus-out", c.corpus_out, "Save the fuzzing corpus here");
  cmd.add_option("--out-dir", c.out_dir, "Directory for the report and suites");
  cmd.add_option("--timeout-ms", c.timeout_ms, "Per-call timeout in milliseconds");
  cmd.add_option("--proxy", c.proxy, "HTTP proxy URL (default: HTTP_PROXY)");
  cmd.add_option("--sqli-payloads", c.sqli_payloads_path, "SQLi payload templates, one per line");
  cmd.add_option("--xss-payloads", c.xss_payloads_path, "XSS payloads, one per line");
  cmd.add_option("--stack-trace-patterns", c.stack_trace_patterns_path,
                 "Stack trace pattern file (JSON)");
  cmd.add_flag("--tag-server-errors", c.tag_server_errors, "Report endpoints answering 500");
  cmd.add_option("--deny-path", c.deny_paths, "Regex of paths never sent modifying verbs");
  cmd.add_option_function<std::size_t>(
      "--plateau-window", [&c](std::size_t v) { c.plateau_window = v; },
      "Stop fuzzing after this many tests without new coverage (0 disables)");
}

std::string finalize_run_options(RunConfig& c, const std::vector<std::string>& toggles,
                                 const std::vector<std::string>& emit) {
  for (const auto& t : toggles) {
    auto parsed = parse_oracle_toggle(t);
    if (!parsed) return "bad --oracle value '" + t + "' (expected CODE=on|off)";
    c.oracles[parsed->first] = parsed->second;
  }
  if (!emit.empty()) {
    c.emit.clear();
    for (const auto& e : emit) {
      auto f = parse_emit_format(e);
      if (!f) return "unknown --emit format '" + e + "'";
      if (std::find(c.emit.begin(), c.emit.end(), *f) == c.emit.end()) c.emit.push_back(*f);
    }
  }
  return {};
}

}  // namespace

int cli_main(int argc, char** argv) {
  auto logger = spdlog::get("restsec");
  if (!logger) logger = spdlog::stderr_color_mt("restsec");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  CLI::App app{"Black-box security testing for REST APIs"};
  app.set_version_flag("--version", std::string(RESTSEC_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  RunConfig fuzz_cfg;
  std::vector<std::string> fuzz_toggles, fuzz_emit;
  auto* fuzz = app.add_subcommand("fuzz", "Fuzz the target, then run the security oracles");
  add_run_options(*fuzz, fuzz_cfg, fuzz_toggles, fuzz_emit);

  RunConfig sec_cfg;
  std::vector<std::string> sec_toggles, sec_emit;
  auto* security =
      app.add_subcommand("security", "Run the security oracles over a saved corpus");
  add_run_options(*security, sec_cfg, sec_toggles, sec_emit);

  std::string plan_path, replay_url;
  double replay_timeout = 10000.0;
  auto* replay = app.add_subcommand("replay", "Replay a json-plan suite");
  replay->add_option("plan", plan_path, "Plan file")->required();
  replay->add_option("--base-url", replay_url, "Override the plan's target URL");
  replay->add_option("--timeout-ms", replay_timeout, "Per-call timeout in milliseconds");

  auto* fixture = app.add_subcommand("fixture", "Bundled mock APIs");
  fixture->require_subcommand(1);
  std::string fixture_name, export_dir;
  int fixture_port = 0;
  bool no_sleep = false;
  auto* serve = fixture->add_subcommand("serve", "Serve a fixture until interrupted");
  serve->add_option("name", fixture_name, "Fixture name")->required();
  serve->add_option("--port", fixture_port, "Port (0 picks one)");
  serve->add_flag("--no-sqli-sleep", no_sleep, "Disable the SQLi fixture delay");
  auto* list = fixture->add_subcommand("list", "List fixtures");
  auto* exp = fixture->add_subcommand("export", "Write a fixture's schema and auth config");
  exp->add_option("name", fixture_name, "Fixture name")->required();
  exp->add_option("dir", export_dir, "Target directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitClean : kExitError;
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                    : quiet ? spdlog::level::warn
                            : spdlog::level::info);

  auto report_run = [](const RunResult& r) {
    for (const auto& f : r.report.faults) {
      std::cout << fmt::format("F{} {} {}\n", f.code, f.endpoint.str(), f.evidence);
    }
    return r.exit_code;
  };

  if (*fuzz) {
    if (auto err = finalize_run_options(fuzz_cfg, fuzz_toggles, fuzz_emit); !err.empty()) {
      spdlog::error("{}", err);
      return kExitError;
    }
    if (fuzz_cfg.schema_source.empty() && fuzz_cfg.corpus_in.empty()) {
      spdlog::error("--schema is required");
      return kExitError;
    }
    return report_run(run_fuzz(fuzz_cfg));
  }
  if (*security) {
    if (auto err = finalize_run_options(sec_cfg, sec_toggles, sec_emit); !err.empty()) {
      spdlog::error("{}", err);
      return kExitError;
    }
    return report_run(run_security_only(sec_cfg));
  }
  if (*replay) return run_replay(plan_path, replay_url, replay_timeout).exit_code;
  if (*list) {
    for (const auto& f : embedded_fixtures()) {
      int code = seeded_fault_code(f.name);
      std::cout << f.name << (code ? fmt::format("  seeded F{}", code) : std::string()) << "\n";
    }
    return kExitClean;
  }
  if (*exp) {
    try {
      const auto& f = find_fixture(fixture_name);
      std::filesystem::create_directories(export_dir);
      std::ofstream(std::filesystem::path(export_dir) / "openapi.json") << f.schema;
      std::ofstream(std::filesystem::path(export_dir) / "auth.yaml") << f.auth;
      return kExitClean;
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return kExitError;
    }
  }
  if (*serve) {
    try {
      FixtureOptions opts;
      opts.sqli_sleep_enabled = !no_sleep;
      FixtureServer server(fixture_name, opts);
      server.start(fixture_port);
      std::cout << server.base_url() << std::endl;
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return kExitClean;
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return kExitError;
    }
  }
  return kExitError;
}

}  // namespace restsec
