#include "restsec/payloads.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "restsec/errors.hpp"

namespace restsec {

std::vector<std::string> parse_payload_lines(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> load_payload_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read payload file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto out = parse_payload_lines(ss.str());
  if (out.empty()) throw ConfigError("payload file " + path + " is empty");
  return out;
}

std::vector<std::string> default_sqli_templates() {
  return parse_payload_lines(shipped_sqli_payloads());
}

std::vector<std::string> default_xss_payloads() {
  return parse_payload_lines(shipped_xss_payloads());
}

std::string render_sqli_payload(std::string_view tmpl, double sleep_seconds) {
  auto replace_all = [](std::string s, std::string_view from, const std::string& to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
      s.replace(pos, from.size(), to);
    }
    return s;
  };
  std::string out(tmpl);
  out =
      replace_all(out, "{S_INT}", std::to_string(static_cast<long long>(std::ceil(sleep_seconds))));
  out = replace_all(out, "{S}", fmt::format("{:.2f}", sleep_seconds));
  return out;
}

}  // namespace restsec
