#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "restsec/fuzzer.hpp"
#include "restsec/report.hpp"

namespace restsec {

inline constexpr int kExitClean = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFaults = 2;

struct RunConfig {
  /// File path or http(s) URL. Ignored when `schema_text` is set.
  std::string schema_source;
  std::optional<std::string> schema_text;
  std::string base_url;
  /// YAML auth config path. Ignored when `auth_text` is set.
  std::string auth_path;
  std::optional<std::string> auth_text;

  double budget_seconds = 30.0;
  std::uint64_t seed = 0;
  /// Explicit on/off per oracle code; unlisted oracles are on.
  std::map<int, bool> oracles;
  double sqli_sleep_seconds = 5.0;
  double sqli_baseline_max_ms = 2000.0;
  std::optional<double> security_budget_seconds;
  std::optional<double> security_budget_percent;
  std::string out_dir = "restsec-out";
  std::vector<EmitFormat> emit{EmitFormat::JsonPlan};
  std::string corpus_in;
  std::string corpus_out;

  double timeout_ms = 10000.0;
  std::string proxy;
  std::string sqli_payloads_path;
  std::string xss_payloads_path;
  std::string stack_trace_patterns_path;
  bool tag_server_errors = false;
  std::optional<std::size_t> plateau_window;
  std::vector<std::string> deny_paths;

  /// Empty when consistent; otherwise the reason. `need_budget` is false for
  /// security-only runs.
  std::string validate(bool need_budget = true) const;
  /// Security phase budget in milliseconds. Without an explicit budget the
  /// phase may use as long as the fuzzing budget.
  double security_budget_ms() const;
};

struct RunResult {
  int exit_code = kExitClean;
  std::string error;
  FaultReport report;
  FuzzStats fuzz;
  std::size_t pool_size = 0;
  std::vector<std::string> warnings;
  std::string report_path;
  std::vector<std::string> suite_paths;
};

/// Base fuzzing, security phase, report and suites. Never throws; failures
/// give exit code 1 and a message.
RunResult run_fuzz(const RunConfig& config);
/// Security phase over the pool stored at `config.corpus_in`.
RunResult run_security_only(const RunConfig& config);

struct ReplayResult {
  int exit_code = kExitClean;
  std::string error;
  std::vector<ReplayOutcome> outcomes;
};

ReplayResult run_replay(const std::string& plan_path, const std::string& base_url = {},
                        double timeout_ms = 10000.0);

/// Parses `--oracle` values such as "205=off".
std::optional<std::pair<int, bool>> parse_oracle_toggle(std::string_view text);

/// Command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace restsec
