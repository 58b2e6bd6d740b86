#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "restsec/auth.hpp"
#include "restsec/corpus.hpp"
#include "restsec/executor.hpp"
#include "restsec/schema.hpp"

namespace restsec {

/// Seeded generator of schema-valid inputs.
class InputGenerator {
 public:
  explicit InputGenerator(std::uint64_t seed);

  std::mt19937_64& rng() noexcept { return rng_; }
  bool chance(double p);
  std::size_t pick(std::size_t n);

  /// A string accepted by the constraints. Enums round-robin per `slot_key`.
  /// Throws GenerationError when a pattern cannot be satisfied.
  std::string string_value(const Constraints& c, const json& schema, const std::string& slot_key,
                           std::size_t min_length_floor = 0);
  long long integer_value(const Constraints& c);
  double number_value(const Constraints& c);
  /// Recursive value for a (resolved) JSON schema.
  json value_for_schema(const json& schema, const std::string& slot_key, int depth = 0);
  /// Rendered value of a path/query/header parameter.
  std::string param_value(const ParamSpec& p, const std::string& slot_key);

  /// A complete call on `endpoint`. Optional parameters are included with
  /// probability one half.
  HttpAction action_for(const EndpointSpec& endpoint, const std::string& identity);
  /// Request body for `endpoint`, if it declares one.
  std::optional<RequestBody> body_for(const EndpointSpec& endpoint);

 private:
  std::mt19937_64 rng_;
  std::map<std::string, std::size_t> enum_cursor_;
};

enum class CreationKind { PutToId, PostToCollection };

/// Ways the resource addressed by `target` (a templated path) can be created.
std::vector<CreationKind> creation_options(const SchemaModel& schema, const EndpointId& target);

/// [creator, target]: a creating call followed by `target` on the same
/// resource. POST creations bind the new id from the response.
TestCase creation_chain(const SchemaModel& schema, const EndpointSpec& target, CreationKind kind,
                        const std::string& creator_identity, const std::string& target_identity,
                        InputGenerator& gen);

/// Appends a call on `next` addressing the same resource as call `anchor`:
/// path arguments are copied and bindings into `anchor` replicated.
void append_on_same_resource(TestCase& test, std::size_t anchor, const EndpointSpec& next,
                             const std::string& identity, InputGenerator& gen);

struct FuzzConfig {
  double budget_seconds = 30.0;
  std::uint64_t seed = 0;
  /// Stop after this many consecutive tests that reach no new
  /// (endpoint, status, identity) combination. nullopt picks a default from
  /// the schema size; 0 disables the early stop.
  std::optional<std::size_t> plateau_window;
  /// Paths matching any of these are never targeted with modifying verbs.
  std::vector<std::string> deny_paths;
  /// Kept tests per (endpoint, status, identity).
  std::size_t archive_per_key = 3;
};

struct FuzzStats {
  std::size_t tests_executed = 0;
  std::size_t calls_executed = 0;
  double elapsed_ms = 0.0;
  bool stopped_on_plateau = false;
};

std::size_t default_plateau_window(std::size_t endpoints, std::size_t identities);

/// Builds the base pool. Transport errors abort with TransportError.
TestPool base_fuzz(const SchemaModel& schema, CredentialStore& credentials, HttpExecutor& executor,
                   const FuzzConfig& config, FuzzStats* stats = nullptr);

}  // namespace restsec
