#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace restsec {

enum class HttpVerb { Get, Post, Put, Patch, Delete, Head, Options };

inline constexpr HttpVerb kAllVerbs[] = {HttpVerb::Get,    HttpVerb::Post, HttpVerb::Put,
                                         HttpVerb::Patch,  HttpVerb::Delete,
                                         HttpVerb::Head,   HttpVerb::Options};

std::string_view to_string(HttpVerb verb) noexcept;
/// Case-insensitive. Returns nullopt for tokens outside the supported set.
std::optional<HttpVerb> parse_verb(std::string_view token) noexcept;

/// Verbs that modify an existing resource.
inline bool is_modification(HttpVerb v) noexcept {
  return v == HttpVerb::Put || v == HttpVerb::Patch || v == HttpVerb::Delete;
}

/// One schema operation: verb plus path template, e.g. `GET /items/{id}`.
struct EndpointId {
  HttpVerb verb = HttpVerb::Get;
  std::string path;

  std::string str() const;
  auto operator<=>(const EndpointId&) const = default;
};

/// Parses "GET /items/{id}".
std::optional<EndpointId> parse_endpoint(std::string_view text);

/// Placeholder names of a path template, in order of appearance.
std::vector<std::string> placeholders(std::string_view path_template);

/// Header map with case-insensitive keys.
struct CaseInsensitiveLess {
  bool operator()(std::string_view a, std::string_view b) const noexcept;
  using is_transparent = void;
};
using Headers = std::map<std::string, std::string, CaseInsensitiveLess>;

/// An exact status code (`201`) or a status class (`2xx`).
class StatusExpectation {
 public:
  static StatusExpectation exact(int code) { return StatusExpectation(code, false); }
  static StatusExpectation of_class(int hundreds) { return StatusExpectation(hundreds, true); }
  /// Accepts "201" or "2xx"/"2XX".
  static std::optional<StatusExpectation> parse(std::string_view text);

  bool matches(int status) const noexcept {
    return is_class_ ? status / 100 == value_ : status == value_;
  }
  bool is_class() const noexcept { return is_class_; }
  int value() const noexcept { return value_; }
  std::string str() const;

  bool operator==(const StatusExpectation&) const = default;

 private:
  StatusExpectation(int v, bool c) : value_(v), is_class_(c) {}
  int value_;
  bool is_class_;
};

inline bool is_success(int status) noexcept { return status >= 200 && status < 300; }

}  // namespace restsec
