#include "restsec/stack_traces.hpp"

#include <nlohmann/json.hpp>

#include "restsec/errors.hpp"
#include "restsec/payloads.hpp"

namespace restsec {

namespace {

// Longer lines are cut before matching; std::regex recursion grows with the
// input length.
constexpr std::size_t kMaxLine = 2048;

void collect_strings(const nlohmann::json& node, std::string& out) {
  if (node.is_string()) {
    out += node.get<std::string>();
    out += '\n';
  } else if (node.is_structured()) {
    for (const auto& child : node) collect_strings(child, out);
  }
}

}  // namespace

StackTraceDetector::StackTraceDetector(std::vector<TracePattern> patterns)
    : patterns_(std::move(patterns)) {}

StackTraceDetector StackTraceDetector::from_json(std::string_view document) {
  auto doc = nlohmann::json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.contains("patterns") || !doc["patterns"].is_array()) {
    throw ConfigError("stack trace pattern file needs a `patterns` array");
  }
  std::vector<TracePattern> out;
  for (const auto& p : doc["patterns"]) {
    if (!p.contains("name") || !p.contains("regex")) {
      throw ConfigError("stack trace pattern entries need `name` and `regex`");
    }
    TracePattern tp;
    tp.name = p["name"].get<std::string>();
    tp.language = p.value("language", std::string());
    tp.source = p["regex"].get<std::string>();
    try {
      tp.regex = std::regex(tp.source, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid stack trace pattern '" + tp.name + "': " + e.what());
    }
    out.push_back(std::move(tp));
  }
  if (out.empty()) throw ConfigError("stack trace pattern file is empty");
  return StackTraceDetector(std::move(out));
}

StackTraceDetector StackTraceDetector::shipped() {
  return from_json(shipped_stack_trace_patterns());
}

std::optional<TraceMatch> StackTraceDetector::scan_text(std::string_view text) const {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() > kMaxLine) line = line.substr(0, kMaxLine);
    if (!line.empty()) {
      std::string owned(line);
      for (const auto& p : patterns_) {
        if (std::regex_search(owned, p.regex)) return TraceMatch{p.name, p.language, owned};
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return std::nullopt;
}

std::optional<TraceMatch> StackTraceDetector::find(std::string_view body) const {
  if (auto m = scan_text(body)) return m;
  auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_structured()) return std::nullopt;
  std::string strings;
  collect_strings(doc, strings);
  return scan_text(strings);
}

}  // namespace restsec
