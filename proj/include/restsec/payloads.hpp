#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace restsec {

// Shipped copies of data/*.txt and data/stack_trace_patterns.json.
std::string_view shipped_sqli_payloads();
std::string_view shipped_xss_payloads();
std::string_view shipped_stack_trace_patterns();

/// One payload per non-empty line (trailing CR stripped).
std::vector<std::string> parse_payload_lines(std::string_view text);
std::vector<std::string> load_payload_file(const std::string& path);

/// Sleep templates; `{S}` is the sleep in seconds ("5.00"), `{S_INT}` the
/// same rounded up to whole seconds.
std::vector<std::string> default_sqli_templates();
std::vector<std::string> default_xss_payloads();

std::string render_sqli_payload(std::string_view tmpl, double sleep_seconds);

}  // namespace restsec
