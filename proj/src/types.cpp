#include "restsec/types.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace restsec {

std::string_view to_string(HttpVerb verb) noexcept {
  switch (verb) {
    case HttpVerb::Get: return "GET";
    case HttpVerb::Post: return "POST";
    case HttpVerb::Put: return "PUT";
    case HttpVerb::Patch: return "PATCH";
    case HttpVerb::Delete: return "DELETE";
    case HttpVerb::Head: return "HEAD";
    case HttpVerb::Options: return "OPTIONS";
  }
  return "GET";
}

std::optional<HttpVerb> parse_verb(std::string_view token) noexcept {
  std::string upper(token);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (HttpVerb v : kAllVerbs) {
    if (to_string(v) == upper) return v;
  }
  return std::nullopt;
}

std::string EndpointId::str() const {
  std::string out(to_string(verb));
  out += ' ';
  out += path;
  return out;
}

std::optional<EndpointId> parse_endpoint(std::string_view text) {
  auto space = text.find(' ');
  if (space == std::string_view::npos) return std::nullopt;
  auto verb = parse_verb(text.substr(0, space));
  auto path = text.substr(space + 1);
  while (!path.empty() && path.front() == ' ') path.remove_prefix(1);
  if (!verb || path.empty() || path.front() != '/') return std::nullopt;
  return EndpointId{*verb, std::string(path)};
}

std::vector<std::string> placeholders(std::string_view path_template) {
  std::vector<std::string> names;
  size_t pos = 0;
  while ((pos = path_template.find('{', pos)) != std::string_view::npos) {
    auto end = path_template.find('}', pos);
    if (end == std::string_view::npos) break;
    names.emplace_back(path_template.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return names;
}

bool CaseInsensitiveLess::operator()(std::string_view a, std::string_view b) const noexcept {
  return std::lexicographical_compare(
      a.begin(), a.end(), b.begin(), b.end(), [](unsigned char x, unsigned char y) {
        return std::tolower(x) < std::tolower(y);
      });
}

std::optional<StatusExpectation> StatusExpectation::parse(std::string_view text) {
  if (text.size() == 3 && (text[1] == 'x' || text[1] == 'X') &&
      (text[2] == 'x' || text[2] == 'X')) {
    if (text[0] < '1' || text[0] > '5') return std::nullopt;
    return of_class(text[0] - '0');
  }
  int code = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), code);
  if (ec != std::errc{} || ptr != text.data() + text.size() || code < 100 || code > 599) {
    return std::nullopt;
  }
  return exact(code);
}

std::string StatusExpectation::str() const {
  if (is_class_) return std::to_string(value_) + "xx";
  return std::to_string(value_);
}

}  // namespace restsec
