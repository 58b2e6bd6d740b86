#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "restsec/auth.hpp"
#include "restsec/executor.hpp"
#include "restsec/oracles.hpp"

namespace restsec {

inline constexpr int kReportFormatVersion = 1;
inline constexpr int kPlanFormatVersion = 1;

struct FaultReport {
  std::string target_base_url;
  std::string schema_source;
  std::uint64_t run_seed = 0;
  std::string tool_version = RESTSEC_VERSION;
  std::vector<Fault> faults;
  PhaseStats phase_stats;
  /// UTC ISO-8601; filled with the current time when empty.
  std::string generated_at;
};

/// "2026-01-31T12:00:00Z".
std::string utc_timestamp();

/// Faults sorted by (code, endpoint).
json report_to_json(const FaultReport& report);
std::string dump_report(const FaultReport& report);
/// Throws Error on I/O failure.
void write_report(const FaultReport& report, const std::string& path);

enum class EmitFormat { JsonPlan, Shell, HttpFile };

std::string_view to_string(EmitFormat format) noexcept;
std::optional<EmitFormat> parse_emit_format(std::string_view token) noexcept;

/// "Fault206. Missed Authorization Checks."
std::string fault_comment(int code);

/// One runnable test of a json-plan suite.
struct PlanTest {
  std::string name;
  /// 0 for base-coverage tests.
  int fault_code = 0;
  std::size_t flagged_call_index = 0;
  /// Comment placed before the flagged call (empty for base-coverage tests).
  std::string comment;
  TestCase test;
  bool operator==(const PlanTest&) const = default;
};

struct SuitePlan {
  std::string target_base_url;
  /// Identities the tests refer to; login recipes run before each test.
  std::vector<AuthIdentity> identities;
  std::vector<PlanTest> tests;
  bool operator==(const SuitePlan&) const = default;
};

/// One test per fault, in report order, plus `extra` base-coverage tests.
SuitePlan make_plan(const std::vector<Fault>& faults, const std::string& target_base_url,
                    const std::vector<AuthIdentity>& identities,
                    const std::vector<TestCase>& extra = {});

std::string dump_plan(const SuitePlan& plan);
SuitePlan parse_plan(std::string_view text);  // throws ParseError
SuitePlan load_plan(const std::string& path);

struct EmittedSuite {
  EmitFormat format = EmitFormat::JsonPlan;
  std::vector<std::pair<std::string, std::string>> files;  ///< (name, content)
};

EmittedSuite emit_suite(const SuitePlan& plan, EmitFormat format);
/// Writes the files of a suite into `dir` (created if missing). Returns the paths.
std::vector<std::string> write_suite(const EmittedSuite& suite, const std::string& dir);

/// Failure description for a finished run of `test`, or empty when every
/// status expectation and timing bound held.
std::string check_run(const TestCase& test, const TestRun& run);

struct ReplayOutcome {
  std::string name;
  bool passed = false;
  std::string failure;
  TestRun run;
};

/// Executes every test of the plan against `base_url` (the plan's URL when
/// empty). Tokens are obtained afresh for each test. TransportError
/// propagates.
std::vector<ReplayOutcome> replay_plan(const SuitePlan& plan, const std::string& base_url = {},
                                       ExecutorOptions options = {});

}  // namespace restsec
