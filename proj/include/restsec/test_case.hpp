#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "restsec/schema.hpp"
#include "restsec/types.hpp"

namespace restsec {

inline constexpr const char* kAnonymous = "anonymous";

struct RequestBody {
  std::string media_type;
  std::string payload;
  bool operator==(const RequestBody&) const = default;
};

/// One HTTP call as written in a test: `(AUTH) VERB PATH -> CODES`.
struct HttpAction {
  EndpointId endpoint;
  std::string identity = kAnonymous;
  std::map<std::string, std::string> path_args;
  std::map<std::string, std::string> query;
  Headers headers;
  std::optional<RequestBody> body;
  std::optional<StatusExpectation> expected_status;
  /// Timing assertions checked on replay (strict bounds, milliseconds).
  std::optional<double> max_duration_ms;
  std::optional<double> min_duration_ms;

  /// Path with placeholders substituted (percent-encoded), no query string.
  std::string rendered_path() const;
  /// "?a=1&b=2" or empty.
  std::string rendered_query() const;

  bool operator==(const HttpAction&) const = default;
};

enum class ExtractorKind { LocationHeader, BodyField };
enum class SlotKind { PathArg, QueryParam, BodyField };

struct Extractor {
  ExtractorKind kind = ExtractorKind::LocationHeader;
  /// Dotted field path for BodyField ("id", "data.id").
  std::string field;
  bool operator==(const Extractor&) const = default;
};

struct Slot {
  SlotKind kind = SlotKind::PathArg;
  std::string name;
  bool operator==(const Slot&) const = default;
};

/// Value produced by one call's response, consumed by a later call.
struct Binding {
  std::size_t source_call = 0;
  Extractor extractor;
  std::size_t target_call = 0;
  Slot slot;
  bool operator==(const Binding&) const = default;
};

struct Provenance {
  /// 0 for base fuzzing; otherwise the fault code (or 403 for scenario
  /// synthesis) of the security step that built the test.
  int oracle_code = 0;
  bool synthesized() const noexcept { return oracle_code != 0; }
  bool operator==(const Provenance&) const = default;
};

struct TestCase {
  std::vector<HttpAction> calls;
  std::vector<Binding> bindings;
  Provenance provenance;

  bool operator==(const TestCase&) const = default;
};

/// Checks the structural invariants (non-empty, source < target, indices in
/// range, path args cover placeholders). Returns an error message or empty.
std::string validate(const TestCase& test);

struct ExecutedCall {
  /// The action as sent, with bindings already applied.
  HttpAction action;
  int status = 0;
  Headers response_headers;
  std::string response_body;
  bool body_truncated = false;
  double duration_ms = 0.0;
  bool timed_out = false;
};

struct TestRun {
  std::vector<ExecutedCall> calls;
  bool unbindable = false;
  std::string unbindable_reason;
};

/// True iff every call carrying an expectation matched the observed status.
/// Calls that were not executed (unbindable run) count as mismatches.
bool verify_statuses(const TestCase& test, std::span<const ExecutedCall> observed);

/// Extracts a binding value from an executed response. Location values
/// yield their last path segment.
std::optional<std::string> extract(const Extractor& extractor, const ExecutedCall& call);

/// Writes `value` into the slot of `action`. Body-field slots require a JSON
/// body. Returns false when the slot cannot be written.
bool apply_slot(HttpAction& action, const Slot& slot, const std::string& value);

/// Dotted-path lookup in a JSON document.
const json* find_field(const json& doc, std::string_view dotted);

/// Percent-encodes a single path segment or query component.
std::string url_encode(std::string_view text);

}  // namespace restsec
