#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "restsec/types.hpp"

namespace restsec {

/// Order-preserving JSON used throughout (document order, stable output).
using json = nlohmann::ordered_json;

enum class ParamLocation { Path, Query, Header, BodyField };
enum class ValueKind { String, Integer, Number, Boolean, Array, Object };

std::string_view to_string(ParamLocation loc) noexcept;
std::string_view to_string(ValueKind kind) noexcept;

/// Input constraints carried over from the schema. All bounds optional.
struct Constraints {
  std::optional<std::size_t> min_length;
  std::optional<std::size_t> max_length;
  std::optional<double> minimum;
  std::optional<double> maximum;
  bool exclusive_minimum = false;
  bool exclusive_maximum = false;
  std::optional<std::string> pattern;
  std::vector<json> enum_values;

  /// True when `value` satisfies length, enum and pattern constraints.
  bool accepts_string(std::string_view value) const;
  bool accepts_number(double value) const;
};

struct ParamSpec {
  std::string name;
  ParamLocation location = ParamLocation::Query;
  ValueKind kind = ValueKind::String;
  Constraints constraints;
  bool required = false;
  /// Fully resolved schema (internal refs inlined), used for nested values.
  json schema = json::object();
};

struct BodySpec {
  std::string media_type;
  json schema = json::object();
  bool required = false;
};

struct EndpointSpec {
  EndpointId id;
  std::vector<ParamSpec> parameters;
  std::optional<BodySpec> body;
  std::set<int> declared_responses;
  /// Property names of the declared success response body, if an object.
  std::vector<std::string> response_fields;

  const ParamSpec* param(std::string_view name, ParamLocation loc) const;
};

/// One declared path. Children are the declared paths whose closest
/// declared ancestor is this one.
struct PathNode {
  std::string path_template;
  std::vector<std::string> children;
  std::vector<HttpVerb> verbs;
};

enum class SchemaFormat { Json, Yaml };

/// Immutable normalized view of an OpenAPI v3 document.
class SchemaModel {
 public:
  const std::vector<EndpointSpec>& endpoints() const noexcept { return endpoints_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  /// Distinct declared paths in document order.
  const std::vector<std::string>& paths() const noexcept { return paths_; }
  const std::string& title() const noexcept { return title_; }

  const EndpointSpec* find(const EndpointId& id) const;
  const EndpointSpec& at(const EndpointId& id) const;  // throws NotFoundError
  bool declares(const EndpointId& id) const { return find(id) != nullptr; }
  bool declares_path(std::string_view path) const;
  std::vector<HttpVerb> verbs_at(std::string_view path) const;

  /// Throws NotFoundError for undeclared paths.
  const PathNode& node(std::string_view path) const;
  std::vector<const PathNode*> roots() const;

  /// GET endpoint on the declared ancestor closest to the root that has a
  /// GET; never the path itself. Throws NotFoundError for undeclared paths.
  std::optional<EndpointId> top_get_ancestor(std::string_view path) const;

  /// Allowed verbs that the schema does not declare at `path`, excluding
  /// OPTIONS and HEAD. Order follows `allow`.
  std::vector<HttpVerb> undeclared_verbs(std::string_view path,
                                         std::span<const HttpVerb> allow) const;

 private:
  friend class SchemaBuilder;
  std::string title_;
  std::vector<EndpointSpec> endpoints_;
  std::vector<std::string> paths_;
  std::map<std::string, PathNode, std::less<>> nodes_;
  std::vector<std::string> warnings_;
};

/// Parses an OpenAPI v3 document. Errors: ParseError (malformed input, with
/// location), UnsupportedVersionError (Swagger 2 or missing `openapi`),
/// ConfigError (external `$ref`).
SchemaModel load_schema(std::string_view document, SchemaFormat format);
/// Picks the format from the first non-blank character.
SchemaModel load_schema(std::string_view document);
/// Local file path or http(s) URL.
SchemaModel load_schema_source(const std::string& source);

/// Reads a file or fetches an http(s) URL into memory.
std::string read_source(const std::string& source);

/// Parses an `Allow` header value ("HEAD, POST,GET"). Unknown tokens are dropped.
std::vector<HttpVerb> parse_allow_header(std::string_view value);

/// Proper ancestors of a path template, root first ("/a/{x}/b" -> "/a", "/a/{x}").
/// A trailing slash does not introduce an extra level.
std::vector<std::string> ancestor_paths(std::string_view path_template);

/// Converts a YAML document into JSON. Throws ParseError.
json yaml_to_json(std::string_view document);

}  // namespace restsec
