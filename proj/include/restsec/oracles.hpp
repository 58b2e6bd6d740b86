#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "restsec/auth.hpp"
#include "restsec/corpus.hpp"
#include "restsec/executor.hpp"
#include "restsec/fuzzer.hpp"
#include "restsec/schema.hpp"
#include "restsec/stack_traces.hpp"

namespace restsec {

namespace fault {
inline constexpr int kServerError = 100;
inline constexpr int kSchemaMismatch = 101;
inline constexpr int kSqlInjection = 200;
inline constexpr int kXss = 201;
inline constexpr int kExistenceLeakage = 204;
inline constexpr int kNotRecognizedAuthentication = 205;
inline constexpr int kMissedAuthorization = 206;
inline constexpr int kIgnoreAnonymous = 900;
inline constexpr int kAnonymousModifications = 901;
inline constexpr int kLeakedStackTrace = 902;
inline constexpr int kHiddenAccessible = 903;
}  // namespace fault

/// PhaseStats code of the 403-scenario synthesis step.
inline constexpr int kSynthesisStep = 403;

/// Security oracles in execution order.
inline constexpr int kSecurityOracles[] = {205, 204, 206, 901, 900, 902, 903, 200, 201};

/// Canonical label, or empty for unknown codes.
std::string_view fault_label(int code) noexcept;
bool is_known_fault_code(int code) noexcept;

struct Fault {
  int code = 0;
  EndpointId endpoint;
  /// Reproducing test; expectations are the statuses observed when confirmed.
  TestCase test;
  std::vector<ExecutedCall> observed;
  std::string evidence;
  std::size_t flagged_call_index = 0;
};

struct SecurityConfig {
  std::set<int> enabled{std::begin(kSecurityOracles), std::end(kSecurityOracles)};
  double sqli_sleep_seconds = 5.0;
  double sqli_baseline_max_ms = 2000.0;
  /// P: tests per endpoint for each injection oracle.
  std::size_t injection_tests_per_endpoint = 16;
  std::vector<std::string> sqli_templates;  ///< empty means the shipped list
  std::vector<std::string> xss_payloads;    ///< empty means the shipped list
  std::optional<StackTraceDetector> stack_traces;
  /// Wall-clock budget of the whole phase; nullopt means unlimited.
  std::optional<double> phase_budget_ms;
  /// Tag endpoints that answered 500 with code 100.
  bool tag_server_errors = false;
  std::uint64_t seed = 0;

  /// Empty when consistent; otherwise the reason.
  std::string validate(double call_timeout_ms) const;
};

struct OracleStats {
  int code = 0;
  std::size_t new_tests = 0;
  double elapsed_ms = 0.0;
};

struct PhaseStats {
  std::vector<OracleStats> per_oracle;
  double total_elapsed_ms = 0.0;
  bool truncated = false;
};

struct SecurityResult {
  std::vector<Fault> faults;  ///< sorted by (code, endpoint), one per pair
  PhaseStats stats;
  std::vector<std::string> warnings;
};

/// Post-fuzzing security phase against one target.
class SecurityPhase {
 public:
  SecurityPhase(const SchemaModel& schema, CredentialStore& credentials, HttpExecutor& executor,
                SecurityConfig config);

  /// Adds confirmed 403 scenarios for endpoints that have 401s but no 403.
  void synthesize_403(TestPool& pool);

  std::vector<Fault> oracle_f205(const TestPool& pool);
  std::vector<Fault> oracle_f204(const TestPool& pool);
  std::vector<Fault> oracle_f206(const TestPool& pool);
  std::vector<Fault> oracle_f901(const TestPool& pool);
  std::vector<Fault> oracle_f900(const TestPool& pool);
  std::vector<Fault> oracle_f902(const TestPool& pool);
  std::vector<Fault> oracle_f903(const TestPool& pool);
  std::vector<Fault> oracle_f200(const TestPool& pool);
  std::vector<Fault> oracle_f201(const TestPool& pool);
  std::vector<Fault> tag_server_errors(const TestPool& pool);

  /// Synthesis, then every enabled oracle in order, within the budget.
  SecurityResult run(TestPool& pool);

  /// Tests executed by this phase so far.
  std::size_t new_tests() const noexcept { return new_tests_; }
  const SecurityConfig& config() const noexcept { return config_; }

 private:
  TestRun execute(const TestCase& test);
  TestCase prefix(const TestPool& pool, const SliceSpec& spec);
  bool out_of_time() const;
  Fault make_fault(int code, const EndpointId& endpoint, TestCase test, const TestRun& run,
                   std::size_t flagged, std::string evidence) const;

  const SchemaModel& schema_;
  CredentialStore& credentials_;
  HttpExecutor& executor_;
  SecurityConfig config_;
  StackTraceDetector traces_;
  std::vector<std::string> sqli_payloads_;
  std::vector<std::string> xss_payloads_;
  FreshIds fresh_;
  InputGenerator gen_;
  std::size_t new_tests_ = 0;
  std::optional<std::chrono::steady_clock::time_point> deadline_;
  std::vector<std::string> warnings_;
};

/// Rewrites the string inputs (query, header, JSON or form body fields) of
/// `action` through `rewrite`, keeping only results the schema accepts.
/// An appended suffix that would exceed maxLength shortens the original
/// value instead. Returns the number of inputs changed.
std::size_t rewrite_string_inputs(const EndpointSpec& spec, HttpAction& action,
                                  const std::function<std::string(const std::string&)>& rewrite);

}  // namespace restsec
