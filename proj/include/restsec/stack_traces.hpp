#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace restsec {

struct TracePattern {
  std::string name;
  std::string language;
  std::string source;
  std::regex regex;
};

struct TraceMatch {
  std::string pattern;
  std::string language;
  std::string line;
};

/// Line-oriented stack trace recognizer. Bodies that parse as JSON are also
/// scanned through their string values, so traces nested in error objects
/// are found.
class StackTraceDetector {
 public:
  explicit StackTraceDetector(std::vector<TracePattern> patterns);
  /// {"patterns": [{"name", "language", "regex"}, ...]}. Throws ConfigError.
  static StackTraceDetector from_json(std::string_view document);
  static StackTraceDetector shipped();

  std::optional<TraceMatch> find(std::string_view body) const;
  const std::vector<TracePattern>& patterns() const noexcept { return patterns_; }

 private:
  std::optional<TraceMatch> scan_text(std::string_view text) const;
  std::vector<TracePattern> patterns_;
};

}  // namespace restsec
