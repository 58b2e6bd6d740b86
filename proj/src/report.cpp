#include "restsec/report.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "restsec/errors.hpp"
#include "restsec/json_io.hpp"

namespace restsec {

namespace {

double round_ms(double ms) { return std::round(ms * 1000.0) / 1000.0; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out.flush()) throw Error("cannot write " + path);
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError("missing key", where + "." + key);
  return j.at(key);
}

}  // namespace

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json report_to_json(const FaultReport& report) {
  std::vector<const Fault*> sorted;
  for (const auto& f : report.faults) sorted.push_back(&f);
  std::stable_sort(sorted.begin(), sorted.end(), [](const Fault* a, const Fault* b) {
    return std::tie(a->code, a->endpoint) < std::tie(b->code, b->endpoint);
  });
  json faults = json::array();
  for (const Fault* f : sorted) {
    faults.push_back(json{{"code", f->code},
                          {"label", std::string(fault_label(f->code))},
                          {"endpoint", to_json(f->endpoint)},
                          {"flaggedCallIndex", f->flagged_call_index},
                          {"evidence", f->evidence},
                          {"test", to_json(f->test)}});
  }
  json per_oracle = json::array();
  for (const auto& s : report.phase_stats.per_oracle) {
    per_oracle.push_back(json{{"code", s.code},
                              {"newTestsExecuted", s.new_tests},
                              {"elapsedMs", round_ms(std::max(0.0, s.elapsed_ms))}});
  }
  return json{{"formatVersion", kReportFormatVersion},
              {"targetBaseUrl", report.target_base_url},
              {"schemaSource", report.schema_source},
              {"runSeed", report.run_seed},
              {"toolVersion", report.tool_version},
              {"generatedAt", report.generated_at.empty() ? utc_timestamp() : report.generated_at},
              {"faults", std::move(faults)},
              {"phaseStats", json{{"perOracle", std::move(per_oracle)},
                                  {"totalElapsedMs",
                                   round_ms(std::max(0.0, report.phase_stats.total_elapsed_ms))}}}};
}

std::string dump_report(const FaultReport& report) { return report_to_json(report).dump(2) + "\n"; }

void write_report(const FaultReport& report, const std::string& path) {
  write_file(path, dump_report(report));
}

std::string_view to_string(EmitFormat format) noexcept {
  switch (format) {
    case EmitFormat::JsonPlan: return "json-plan";
    case EmitFormat::Shell: return "shell";
    case EmitFormat::HttpFile: return "httpfile";
  }
  return "json-plan";
}

std::optional<EmitFormat> parse_emit_format(std::string_view token) noexcept {
  for (auto f : {EmitFormat::JsonPlan, EmitFormat::Shell, EmitFormat::HttpFile}) {
    if (to_string(f) == token) return f;
  }
  return std::nullopt;
}

std::string fault_comment(int code) { return fmt::format("Fault{}. {}.", code, fault_label(code)); }

SuitePlan make_plan(const std::vector<Fault>& faults, const std::string& target_base_url,
                    const std::vector<AuthIdentity>& identities,
                    const std::vector<TestCase>& extra) {
  SuitePlan plan;
  plan.target_base_url = target_base_url;
  for (const auto& id : identities) {
    if (!id.is_anonymous()) plan.identities.push_back(id);
  }
  std::vector<const Fault*> sorted;
  for (const auto& f : faults) sorted.push_back(&f);
  std::stable_sort(sorted.begin(), sorted.end(), [](const Fault* a, const Fault* b) {
    return std::tie(a->code, a->endpoint) < std::tie(b->code, b->endpoint);
  });
  std::size_t n = 0;
  for (const Fault* f : sorted) {
    PlanTest t;
    t.name = fmt::format("test_{}_fault{}", ++n, f->code);
    t.fault_code = f->code;
    t.flagged_call_index = f->flagged_call_index;
    t.comment = fault_comment(f->code);
    t.test = f->test;
    plan.tests.push_back(std::move(t));
  }
  for (const auto& test : extra) {
    PlanTest t;
    t.name = fmt::format("test_{}_coverage", ++n);
    t.test = test;
    plan.tests.push_back(std::move(t));
  }
  return plan;
}

std::string dump_plan(const SuitePlan& plan) {
  json identities = json::array();
  for (const auto& id : plan.identities) identities.push_back(to_json(id));
  json tests = json::array();
  for (const auto& t : plan.tests) {
    tests.push_back(json{{"name", t.name},
                         {"faultCode", t.fault_code},
                         {"flaggedCallIndex", t.flagged_call_index},
                         {"comment", t.comment},
                         {"test", to_json(t.test)}});
  }
  json doc{{"formatVersion", kPlanFormatVersion},
           {"targetBaseUrl", plan.target_base_url},
           {"identities", std::move(identities)},
           {"tests", std::move(tests)}};
  return doc.dump(2) + "\n";
}

SuitePlan parse_plan(std::string_view text) {
  json doc = parse_json_document(text, "test plan");
  const std::string root = "$";
  const auto& version = require(doc, "formatVersion", root);
  if (!version.is_number_integer() || version.get<int>() != kPlanFormatVersion) {
    throw ParseError("unsupported plan formatVersion", root + ".formatVersion");
  }
  SuitePlan plan;
  const auto& url = require(doc, "targetBaseUrl", root);
  if (!url.is_string()) throw ParseError("expected a string", root + ".targetBaseUrl");
  plan.target_base_url = url.get<std::string>();
  const auto& ids = require(doc, "identities", root);
  if (!ids.is_array()) throw ParseError("expected an array", root + ".identities");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    plan.identities.push_back(
        identity_from_json(ids[i], fmt::format("{}.identities[{}]", root, i)));
  }
  const auto& tests = require(doc, "tests", root);
  if (!tests.is_array()) throw ParseError("expected an array", root + ".tests");
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const std::string where = fmt::format("{}.tests[{}]", root, i);
    const auto& t = tests[i];
    PlanTest pt;
    const auto& name = require(t, "name", where);
    if (!name.is_string()) throw ParseError("expected a string", where + ".name");
    pt.name = name.get<std::string>();
    const auto& code = require(t, "faultCode", where);
    if (!code.is_number_integer()) throw ParseError("expected an integer", where + ".faultCode");
    pt.fault_code = code.get<int>();
    const auto& flagged = require(t, "flaggedCallIndex", where);
    if (!flagged.is_number_unsigned()) {
      throw ParseError("expected a non-negative integer", where + ".flaggedCallIndex");
    }
    pt.flagged_call_index = flagged.get<std::size_t>();
    const auto& comment = require(t, "comment", where);
    if (!comment.is_string()) throw ParseError("expected a string", where + ".comment");
    pt.comment = comment.get<std::string>();
    pt.test = test_from_json(require(t, "test", where), where + ".test");
    if (pt.flagged_call_index >= pt.test.calls.size()) {
      throw ParseError("flagged call out of range", where + ".flaggedCallIndex");
    }
    plan.tests.push_back(std::move(pt));
  }
  return plan;
}

SuitePlan load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read test plan " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_plan(text);
}

namespace {

// Rendering of bound values: each binding writes a marker into its slot, the
// rendered call is escaped, and markers become references to the extracted
// value.
std::string marker(std::size_t call, std::size_t k) { return fmt::format("RSBIND{}X{}Z", call, k); }

struct BoundRef {
  std::string marker;
  std::size_t binding;
};

HttpAction with_markers(const TestCase& test, std::size_t i, std::vector<BoundRef>& refs) {
  HttpAction action = test.calls[i];
  for (std::size_t k = 0; k < test.bindings.size(); ++k) {
    const auto& b = test.bindings[k];
    if (b.target_call != i) continue;
    auto m = marker(i, k);
    if (apply_slot(action, b.slot, m)) refs.push_back(BoundRef{m, k});
  }
  return action;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string sh_single(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string sh_double_body(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\' || c == '$' || c == '`') out += '\\';
    out += c;
  }
  return out;
}

/// Double-quoted shell word with markers replaced by variable references.
std::string sh_word(const std::string& text, const std::vector<BoundRef>& refs,
                    const std::function<std::string(const BoundRef&)>& var) {
  std::string body = sh_double_body(text);
  for (const auto& r : refs) body = replace_all(body, r.marker, "${" + var(r) + "}");
  return "\"" + body + "\"";
}

std::string identity_var(const std::string& name) {
  std::string out = "TOKEN_";
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string login_url_sh(const LoginRecipe& r) {
  if (r.endpoint.starts_with("http://") || r.endpoint.starts_with("https://")) {
    return sh_single(r.endpoint);
  }
  return "\"$BASE_URL\"" + sh_single(r.endpoint.starts_with("/") ? r.endpoint : "/" + r.endpoint);
}

std::vector<std::string> identities_used(const TestCase& test) {
  std::vector<std::string> out;
  for (const auto& c : test.calls) {
    if (c.identity != kAnonymous && std::find(out.begin(), out.end(), c.identity) == out.end()) {
      out.push_back(c.identity);
    }
  }
  return out;
}

const AuthIdentity* find_identity(const SuitePlan& plan, const std::string& name) {
  for (const auto& id : plan.identities) {
    if (id.name == name) return &id;
  }
  return nullptr;
}

constexpr const char* kShellPrelude = R"SH(#!/usr/bin/env bash
# Usage: faults.sh [BASE_URL] [TEST_NAME...]
set -u
BASE_URL="${1:-__BASE_URL__}"
shift || true
WORK=$(mktemp -d)
trap 'rm -rf "$WORK"' EXIT

# call N VERB [curl args...] URL: sets STATUS and ELAPSED_MS; response in
# $WORK/bN (body) and $WORK/hN (headers).
call() {
  local n=$1 verb=$2
  shift 2
  local url="${!#}"
  set -- "${@:1:$#-1}"
  local method=(-X "$verb")
  if [ "$verb" = HEAD ]; then method=(--head); fi
  local out
  out=$(curl -sS --max-time 60 -o "$WORK/b$n" -D "$WORK/h$n" -w '%{http_code} %{time_total}' \
    "${method[@]}" "$@" "$url") || { echo "  call $n: request failed" >&2; return 1; }
  STATUS=${out%% *}
  ELAPSED_MS=$(awk -v t="${out#* }" 'BEGIN { printf "%d", t * 1000 }')
}

expect_status() {  # N EXPECTED (exact code or class like 2xx)
  local ok=1
  case "$2" in
    ?xx) [ "${STATUS:0:1}" = "${2:0:1}" ] || ok=0 ;;
    *) [ "$STATUS" = "$2" ] || ok=0 ;;
  esac
  if [ $ok = 0 ]; then echo "  call $1: status $STATUS, expected $2" >&2; return 1; fi
}

expect_faster() {  # N MS
  if [ "$ELAPSED_MS" -ge "$2" ]; then
    echo "  call $1: elapsed $ELAPSED_MS ms should be less than $2 ms" >&2; return 1
  fi
}

expect_slower() {  # N MS
  if [ "$ELAPSED_MS" -le "$2" ]; then
    echo "  call $1: elapsed $ELAPSED_MS ms should be greater than $2 ms" >&2; return 1
  fi
}

location_id() {  # N: last path segment of the Location header of call N
  local v
  v=$(sed -n 's/^[Ll]ocation:[[:space:]]*//p' "$WORK/h$1" | tr -d '\r' | tail -n 1)
  v=${v%%[?#]*}
  while [ "${v%/}" != "$v" ]; do v=${v%/}; done
  printf '%s' "${v##*/}"
}

body_field() {  # FILE DOTTED_PATH
  python3 - "$1" "$2" <<'PY'
import json, sys
v = json.load(open(sys.argv[1]))
for k in sys.argv[2].split("."):
    v = v[int(k)] if isinstance(v, list) else v[k]
print(v if isinstance(v, str) else json.dumps(v), end="")
PY
}

)SH";

std::string emit_shell(const SuitePlan& plan) {
  std::string out =
      replace_all(kShellPrelude, "__BASE_URL__", sh_double_body(plan.target_base_url));
  std::vector<std::string> names;
  for (const auto& pt : plan.tests) {
    names.push_back(pt.name);
    const auto& test = pt.test;
    out += fmt::format("{}() {{\n", pt.name);
    for (const auto& who : identities_used(test)) {
      const AuthIdentity* id = find_identity(plan, who);
      if (!id || id->kind != AuthKind::LoginFlow || !id->login) continue;
      const auto& r = *id->login;
      out += fmt::format("  # Login as {}\n", who);
      std::string args;
      if (!r.content_type.empty()) args += " -H " + sh_single("Content-Type: " + r.content_type);
      if (!r.payload.empty()) args += " --data-binary " + sh_single(r.payload);
      if (r.extract_from == TokenSource::Body) {
        out += fmt::format("  curl -sS -o \"$WORK/login\" -X {}{} {} || return 1\n",
                           to_string(r.method), args, login_url_sh(r));
        out += fmt::format("  {}=$(body_field \"$WORK/login\" {}) || return 1\n", identity_var(who),
                           sh_single(r.field));
      } else {
        out += fmt::format("  curl -sS -o /dev/null -D \"$WORK/login\" -X {}{} {} || return 1\n",
                           to_string(r.method), args, login_url_sh(r));
        out += fmt::format(
            "  {}=$(sed -n 's/^{}:[[:space:]]*//Ip' \"$WORK/login\" | tr -d '\\r' | tail -n 1)\n",
            identity_var(who), r.field);
      }
    }
    for (std::size_t i = 0; i < test.calls.size(); ++i) {
      std::vector<BoundRef> refs;
      HttpAction a = with_markers(test, i, refs);
      auto var = [&](const BoundRef& r) { return fmt::format("B{}_{}", i, r.binding); };
      for (const auto& r : refs) {
        const auto& b = test.bindings[r.binding];
        if (b.extractor.kind == ExtractorKind::LocationHeader) {
          out += fmt::format("  local {}; {}=$(location_id {})\n", var(r), var(r), b.source_call);
        } else {
          out += fmt::format("  local {}; {}=$(body_field \"$WORK/b{}\" {}) || return 1\n", var(r),
                             var(r), b.source_call, sh_single(b.extractor.field));
        }
      }
      if (!pt.comment.empty() && i == pt.flagged_call_index) out += "  # " + pt.comment + "\n";
      std::string args;
      Headers headers = a.headers;
      if (a.body && !a.body->media_type.empty()) headers["Content-Type"] = a.body->media_type;
      for (const auto& [k, v] : headers) args += " -H " + sh_word(k + ": " + v, refs, var);
      if (a.identity != kAnonymous) {
        if (const AuthIdentity* id = find_identity(plan, a.identity)) {
          if (id->kind == AuthKind::StaticHeaders) {
            for (const auto& [k, v] : id->static_headers) args += " -H " + sh_single(k + ": " + v);
          } else if (id->login) {
            std::string value = id->login->render("RSTOKENZ");
            std::string word = sh_double_body(std::string(kTokenHeader) + ": " + value);
            args += " -H \"" +
                    replace_all(word, "RSTOKENZ", "${" + identity_var(a.identity) + "}") + "\"";
          }
        }
      }
      if (a.body) args += " --data-binary " + sh_word(a.body->payload, refs, var);
      std::string url =
          "\"$BASE_URL\"" + sh_word(a.rendered_path() + a.rendered_query(), refs, var);
      out +=
          fmt::format("  call {} {}{} {} || return 1\n", i, to_string(a.endpoint.verb), args, url);
      if (a.expected_status) {
        out += fmt::format("  expect_status {} {} || return 1\n", i, a.expected_status->str());
      }
      if (a.max_duration_ms) {
        out += fmt::format("  expect_faster {} {} || return 1\n", i,
                           static_cast<long long>(std::llround(*a.max_duration_ms)));
      }
      if (a.min_duration_ms) {
        out += fmt::format("  expect_slower {} {} || return 1\n", i,
                           static_cast<long long>(std::llround(*a.min_duration_ms)));
      }
    }
    out += "}\n\n";
  }
  out += "TESTS=(";
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? " " : "") + names[i];
  out += ")\n";
  out += R"SH(if [ $# -gt 0 ]; then TESTS=("$@"); fi
FAILED=0
for t in ${TESTS[@]+"${TESTS[@]}"}; do
  if "$t"; then echo "PASS $t"; else echo "FAIL $t"; FAILED=1; fi
done
exit $FAILED
)SH";
  return out;
}

std::string emit_httpfile(const SuitePlan& plan) {
  std::string out = "@baseUrl = " + plan.target_base_url + "\n\n";
  for (const auto& pt : plan.tests) {
    const auto& test = pt.test;
    for (const auto& who : identities_used(test)) {
      const AuthIdentity* id = find_identity(plan, who);
      if (!id || id->kind != AuthKind::LoginFlow || !id->login) continue;
      const auto& r = *id->login;
      out += fmt::format("### {}: login as {}\n# @name {}_login_{}\n", pt.name, who, pt.name, who);
      bool absolute = r.endpoint.starts_with("http://") || r.endpoint.starts_with("https://");
      out +=
          fmt::format("{} {}{}\n", to_string(r.method), absolute ? "" : "{{baseUrl}}", r.endpoint);
      if (!r.content_type.empty()) out += "Content-Type: " + r.content_type + "\n";
      out += "\n";
      if (!r.payload.empty()) out += r.payload + "\n";
      out += "\n";
    }
    for (std::size_t i = 0; i < test.calls.size(); ++i) {
      std::vector<BoundRef> refs;
      HttpAction a = with_markers(test, i, refs);
      auto ref_text = [&](const BoundRef& r) {
        const auto& b = test.bindings[r.binding];
        if (b.extractor.kind == ExtractorKind::LocationHeader) {
          return fmt::format("{{{{{}_call{}.response.headers.Location}}}}", pt.name, b.source_call);
        }
        return fmt::format("{{{{{}_call{}.response.body.$.{}}}}}", pt.name, b.source_call,
                           b.extractor.field);
      };
      auto subst = [&](std::string s) {
        for (const auto& r : refs) s = replace_all(s, r.marker, ref_text(r));
        return s;
      };
      out += fmt::format("### {} call {}\n", pt.name, i);
      if (!pt.comment.empty() && i == pt.flagged_call_index) out += "# " + pt.comment + "\n";
      for (const auto& r : refs) {
        if (test.bindings[r.binding].extractor.kind == ExtractorKind::LocationHeader) {
          out += "# bound value: last path segment of the Location header\n";
          break;
        }
      }
      if (a.expected_status) out += "# expected status: " + a.expected_status->str() + "\n";
      if (a.max_duration_ms)
        out += fmt::format("# elapsed should be less than {:.0f} ms\n", *a.max_duration_ms);
      if (a.min_duration_ms) {
        out += fmt::format("# elapsed should be greater than {:.0f} ms\n", *a.min_duration_ms);
      }
      out += fmt::format("# @name {}_call{}\n", pt.name, i);
      out += fmt::format("{} {{{{baseUrl}}}}{}\n", to_string(a.endpoint.verb),
                         subst(a.rendered_path() + a.rendered_query()));
      Headers headers = a.headers;
      if (a.body && !a.body->media_type.empty()) headers["Content-Type"] = a.body->media_type;
      if (a.identity != kAnonymous) {
        if (const AuthIdentity* id = find_identity(plan, a.identity)) {
          if (id->kind == AuthKind::StaticHeaders) {
            for (const auto& [k, v] : id->static_headers) headers[k] = v;
          } else if (id->login) {
            std::string var =
                id->login->extract_from == TokenSource::Body
                    ? fmt::format("{{{{{}_login_{}.response.body.$.{}}}}}", pt.name, a.identity,
                                  id->login->field)
                    : fmt::format("{{{{{}_login_{}.response.headers.{}}}}}", pt.name, a.identity,
                                  id->login->field);
            headers[kTokenHeader] = id->login->render(var);
          }
        }
      }
      for (const auto& [k, v] : headers) out += k + ": " + subst(v) + "\n";
      out += "\n";
      if (a.body) out += subst(a.body->payload) + "\n";
      out += "\n";
    }
  }
  return out;
}

}  // namespace

EmittedSuite emit_suite(const SuitePlan& plan, EmitFormat format) {
  EmittedSuite suite;
  suite.format = format;
  switch (format) {
    case EmitFormat::JsonPlan: suite.files.emplace_back("faults.plan.json", dump_plan(plan)); break;
    case EmitFormat::Shell: suite.files.emplace_back("faults.sh", emit_shell(plan)); break;
    case EmitFormat::HttpFile: suite.files.emplace_back("faults.http", emit_httpfile(plan)); break;
  }
  return suite;
}

std::vector<std::string> write_suite(const EmittedSuite& suite, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());
  std::vector<std::string> paths;
  for (const auto& [name, content] : suite.files) {
    auto path = (fs::path(dir) / name).string();
    write_file(path, content);
    if (suite.format == EmitFormat::Shell) {
      fs::permissions(path, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                      fs::perm_options::add, ec);
    }
    paths.push_back(path);
  }
  return paths;
}

std::string check_run(const TestCase& test, const TestRun& run) {
  if (run.unbindable) return run.unbindable_reason;
  for (std::size_t i = 0; i < test.calls.size(); ++i) {
    if (i >= run.calls.size()) return fmt::format("call {} was not executed", i);
    const auto& a = test.calls[i];
    const auto& c = run.calls[i];
    if (c.timed_out) return fmt::format("call {} timed out", i);
    if (a.expected_status && !a.expected_status->matches(c.status)) {
      return fmt::format("call {}: status {}, expected {}", i, c.status, a.expected_status->str());
    }
    if (a.max_duration_ms && !(c.duration_ms < *a.max_duration_ms)) {
      return fmt::format("call {}: elapsed {:.0f} ms should be less than {:.0f} ms", i,
                         c.duration_ms, *a.max_duration_ms);
    }
    if (a.min_duration_ms && !(c.duration_ms > *a.min_duration_ms)) {
      return fmt::format("call {}: elapsed {:.0f} ms should be greater than {:.0f} ms", i,
                         c.duration_ms, *a.min_duration_ms);
    }
  }
  return {};
}

std::vector<ReplayOutcome> replay_plan(const SuitePlan& plan, const std::string& base_url,
                                       ExecutorOptions options) {
  HttpExecutor executor(base_url.empty() ? plan.target_base_url : base_url, options);
  CredentialStore credentials(plan.identities);
  std::vector<ReplayOutcome> out;
  for (const auto& pt : plan.tests) {
    credentials.invalidate();
    ReplayOutcome o;
    o.name = pt.name;
    o.run = executor.run_test_case(pt.test, credentials);
    o.failure = check_run(pt.test, o.run);
    o.passed = o.failure.empty();
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace restsec
