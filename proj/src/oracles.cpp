#include "restsec/oracles.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "restsec/errors.hpp"
#include "restsec/payloads.hpp"

namespace restsec {

std::string_view fault_label(int code) noexcept {
  switch (code) {
    case 100: return "HTTP Status 500";
    case 101: return "schema mismatch";
    case 200: return "SQL Injection (SQLi)";
    case 201: return "Cross-Site Scripting (XSS)";
    case 204: return "Existence Leakage";
    case 205: return "Not Recognized Authentication";
    case 206: return "Missed Authorization Checks";
    case 900: return "Ignore Anonymous";
    case 901: return "Anonymous Modifications";
    case 902: return "Leaked Stack Trace";
    case 903: return "Hidden Accessible";
    default: return {};
  }
}

bool is_known_fault_code(int code) noexcept { return !fault_label(code).empty(); }

std::string SecurityConfig::validate(double call_timeout_ms) const {
  for (int code : enabled) {
    if (!is_known_fault_code(code)) return fmt::format("unknown oracle code {}", code);
  }
  if (sqli_sleep_seconds <= 0.0) return "sqli sleep must be positive";
  if (sqli_baseline_max_ms <= 0.0) return "sqli baseline bound must be positive";
  if (!(sqli_sleep_seconds * 1000.0 > sqli_baseline_max_ms)) {
    return "sqli sleep (ms) must exceed the baseline bound";
  }
  if (enabled.contains(fault::kSqlInjection) &&
      !(call_timeout_ms > sqli_sleep_seconds * 1000.0 + sqli_baseline_max_ms)) {
    return fmt::format("call timeout {} ms must exceed sqli sleep plus baseline ({} ms)",
                       call_timeout_ms, sqli_sleep_seconds * 1000.0 + sqli_baseline_max_ms);
  }
  if (injection_tests_per_endpoint == 0) return "tests per endpoint must be positive";
  if (phase_budget_ms && *phase_budget_ms < 0.0) return "security budget must not be negative";
  return {};
}

namespace {

using Clock = std::chrono::steady_clock;

const StatusExpectation k2xx = StatusExpectation::of_class(2);
// Caps on pool candidates tried per endpoint by the composing oracles, so
// the number of new tests stays linear in the endpoint count.
constexpr std::size_t kCandidatesPerEndpoint = 3;

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() &&
               std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
               std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_form(std::string_view body) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    auto amp = body.find('&', pos);
    auto part =
        body.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
    if (!part.empty()) {
      auto eq = part.find('=');
      out.emplace_back(url_decode(part.substr(0, eq)),
                       eq == std::string_view::npos ? "" : url_decode(part.substr(eq + 1)));
    }
    if (amp == std::string_view::npos) break;
    pos = amp + 1;
  }
  return out;
}

template <typename Slice>
std::vector<Slice> take(std::vector<Slice> v, std::size_t n) {
  if (v.size() > n) v.resize(n);
  return v;
}

void pin_observed(TestCase& test, const TestRun& run) {
  for (std::size_t i = 0; i < test.calls.size() && i < run.calls.size(); ++i) {
    if (!run.calls[i].timed_out) {
      test.calls[i].expected_status = StatusExpectation::exact(run.calls[i].status);
    }
  }
}

bool completed(const TestCase& test, const TestRun& run) {
  return !run.unbindable && run.calls.size() == test.calls.size() &&
         std::none_of(run.calls.begin(), run.calls.end(),
                      [](const ExecutedCall& c) { return c.timed_out; });
}

bool confirmed(const TestCase& test, const TestRun& run) {
  return completed(test, run) && verify_statuses(test, run.calls);
}

/// First call whose status did not match, for debug logs.
std::string mismatch(const TestCase& test, const TestRun& run) {
  if (run.unbindable) return "unbindable: " + run.unbindable_reason;
  for (std::size_t i = 0; i < test.calls.size() && i < run.calls.size(); ++i) {
    const auto& want = test.calls[i].expected_status;
    if (want && !want->matches(run.calls[i].status)) {
      return fmt::format("call {} ({} {}) expected {}, got {}", i, run.calls[i].action.identity,
                         run.calls[i].action.rendered_path(), want->str(), run.calls[i].status);
    }
  }
  return "incomplete run";
}

TestCase concat(const std::vector<TestCase>& parts) {
  TestCase out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out = concat_and_bind(out, parts[i], false);
  return out;
}

/// Single call test with `action` bound to the resource of head's last call.
TestCase solo_of(HttpAction action) {
  TestCase t;
  t.calls.push_back(std::move(action));
  return t;
}

std::string who(const std::string& identity) {
  return identity == kAnonymous ? std::string("anonymous") : "'" + identity + "'";
}

}  // namespace

namespace {

/// `value + suffix` cut down to `max_chars` code points by shortening
/// `value`; empty when the suffix alone is too long.
std::string fit_append(const std::string& value, const std::string& suffix, std::size_t max_chars) {
  auto is_lead = [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; };
  std::size_t suffix_chars = std::count_if(suffix.begin(), suffix.end(), is_lead);
  if (suffix_chars > max_chars) return {};
  std::size_t keep = max_chars - suffix_chars;
  std::size_t end = 0;
  for (std::size_t chars = 0; end < value.size(); ++end) {
    if (is_lead(value[end]) && chars++ == keep) break;
  }
  return value.substr(0, end) + suffix;
}

}  // namespace

std::size_t rewrite_string_inputs(const EndpointSpec& spec, HttpAction& action,
                                  const std::function<std::string(const std::string&)>& rewrite) {
  std::size_t changed = 0;
  auto try_rewrite = [&](const ParamSpec* p, std::string& value) {
    if (!p || p->kind != ValueKind::String) return;
    auto next = rewrite(value);
    if (next != value && !p->constraints.accepts_string(next) && p->constraints.max_length &&
        next.starts_with(value)) {
      auto fitted = fit_append(value, next.substr(value.size()), *p->constraints.max_length);
      if (!fitted.empty()) next = std::move(fitted);
    }
    if (next == value || !p->constraints.accepts_string(next)) return;
    value = std::move(next);
    ++changed;
  };
  for (auto& [name, value] : action.query)
    try_rewrite(spec.param(name, ParamLocation::Query), value);
  for (auto& [name, value] : action.headers) {
    try_rewrite(spec.param(name, ParamLocation::Header), value);
  }
  if (!action.body) return changed;
  auto& body = *action.body;
  if (body.media_type.find("json") != std::string::npos) {
    json doc = json::parse(body.payload, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return changed;
    std::size_t before = changed;
    for (auto& [name, value] : doc.items()) {
      if (!value.is_string()) continue;
      auto text = value.get<std::string>();
      try_rewrite(spec.param(name, ParamLocation::BodyField), text);
      value = text;
    }
    if (changed != before) body.payload = doc.dump();
  } else if (body.media_type == "application/x-www-form-urlencoded") {
    auto fields = parse_form(body.payload);
    std::size_t before = changed;
    for (auto& [name, value] : fields)
      try_rewrite(spec.param(name, ParamLocation::BodyField), value);
    if (changed != before) {
      std::string out;
      for (const auto& [name, value] : fields) {
        if (!out.empty()) out += '&';
        out += url_encode(name) + "=" + url_encode(value);
      }
      body.payload = out;
    }
  }
  return changed;
}

SecurityPhase::SecurityPhase(const SchemaModel& schema, CredentialStore& credentials,
                             HttpExecutor& executor, SecurityConfig config)
    : schema_(schema),
      credentials_(credentials),
      executor_(executor),
      config_(std::move(config)),
      traces_(config_.stack_traces ? *config_.stack_traces : StackTraceDetector::shipped()),
      fresh_(config_.seed),
      gen_(config_.seed ^ 0x5EC0DEULL) {
  auto templates =
      config_.sqli_templates.empty() ? default_sqli_templates() : config_.sqli_templates;
  for (const auto& t : templates) {
    sqli_payloads_.push_back(render_sqli_payload(t, config_.sqli_sleep_seconds));
  }
  xss_payloads_ = config_.xss_payloads.empty() ? default_xss_payloads() : config_.xss_payloads;
}

TestRun SecurityPhase::execute(const TestCase& test) {
  ++new_tests_;
  return executor_.run_test_case(test, credentials_);
}

TestCase SecurityPhase::prefix(const TestPool& pool, const SliceSpec& spec) {
  TestCase t = slice_prefix(pool, spec);
  freshen(t, fresh_);
  return t;
}

bool SecurityPhase::out_of_time() const { return deadline_ && Clock::now() >= *deadline_; }

Fault SecurityPhase::make_fault(int code, const EndpointId& endpoint, TestCase test,
                                const TestRun& run, std::size_t flagged,
                                std::string evidence) const {
  pin_observed(test, run);
  test.provenance.oracle_code = code;
  Fault f;
  f.code = code;
  f.endpoint = endpoint;
  f.test = std::move(test);
  f.observed = run.calls;
  f.evidence = std::move(evidence);
  f.flagged_call_index = flagged;
  return f;
}

void SecurityPhase::synthesize_403(TestPool& pool) {
  auto others = credentials_.authenticated_names();
  if (others.size() < 2) {
    spdlog::info("403 synthesis needs two authenticated users; skipped");
    return;
  }
  for (const auto& ep : schema_.endpoints()) {
    if (out_of_time()) return;
    const auto& id = ep.id;
    if (pool.find(id, StatusExpectation::exact(403), IdentityFilter::any())) continue;
    if (!pool.find(id, StatusExpectation::exact(401), IdentityFilter::any())) {
      spdlog::debug("403 synthesis: {} never answered 401, skipped", id.str());
      continue;
    }
    bool added = false;
    auto sources = take(pool.find_all(id, k2xx, IdentityFilter::authenticated()),
                        kCandidatesPerEndpoint);
    for (const auto& ref : sources) {
      const std::string owner = pool.call(ref).action.identity;
      for (const auto& other : others) {
        if (other == owner || out_of_time()) continue;
        TestCase t = prefix(pool, ref);
        std::size_t last = t.calls.size() - 1;
        HttpAction dup = t.calls[last];
        dup.identity = other;
        dup.expected_status = StatusExpectation::exact(403);
        t.calls.push_back(dup);
        for (const auto& b : std::vector<Binding>(t.bindings)) {
          if (b.target_call == last) {
            Binding copy = b;
            copy.target_call = last + 1;
            t.bindings.push_back(copy);
          }
        }
        auto run = execute(t);
        if (!confirmed(t, run)) continue;
        pin_observed(t, run);
        t.provenance.oracle_code = kSynthesisStep;
        pool.add(std::move(t), std::move(run.calls));
        spdlog::info("403 synthesis: {} denied to {} on {}", id.str(), who(other), id.path);
        added = true;
        break;
      }
      if (added) break;
    }
  }
}

std::vector<Fault> SecurityPhase::oracle_f205(const TestPool& pool) {
  std::vector<Fault> out;
  auto endpoints = pool.endpoints();
  for (const auto& x : endpoints) {
    if (out_of_time()) break;
    bool found = false;
    for (const auto& t1 : take(pool.find_all(x, StatusExpectation::exact(401),
                                             IdentityFilter::authenticated()),
                               kCandidatesPerEndpoint)) {
      const std::string a = pool.call(t1).action.identity;
      for (const auto& y : endpoints) {
        if (y == x || out_of_time()) continue;
        auto t2 = pool.find(y, k2xx, IdentityFilter::named(a));
        if (!t2) continue;
        auto t3 = pool.find(y, StatusExpectation::exact(401), IdentityFilter::any());
        if (!t3) t3 = pool.find(y, StatusExpectation::exact(403), IdentityFilter::any());
        if (!t3) continue;
        TestCase k = concat({prefix(pool, *t3), prefix(pool, *t2), prefix(pool, t1)});
        auto run = execute(k);
        if (!confirmed(k, run)) {
          spdlog::debug("F205 on {}: composed scenario did not reproduce: {}", x.str(),
                        mismatch(k, run));
          continue;
        }
        auto flagged = k.calls.size() - 1;
        out.push_back(make_fault(
            fault::kNotRecognizedAuthentication, x, std::move(k), run, flagged,
            fmt::format("{} was rejected with 401 on {} although the same credentials got {} on "
                        "{}, an endpoint that does enforce authentication",
                        who(a), x.str(), pool.call(*t2).status, y.str())));
        found = true;
        break;
      }
      if (found) break;
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f204(const TestPool& pool) {
  std::vector<Fault> out;
  for (const auto& x : pool.endpoints()) {
    if (x.verb != HttpVerb::Get || out_of_time()) continue;
    auto t1 = pool.find(x, StatusExpectation::exact(403), IdentityFilter::any());
    if (!t1) continue;
    for (const auto& t2 :
         take(pool.find_all(x, StatusExpectation::exact(404), IdentityFilter::any()),
              kCandidatesPerEndpoint)) {
      if (out_of_time()) break;
      const std::string a = pool.call(t2).action.identity;
      TestCase k = concat({prefix(pool, *t1), prefix(pool, t2)});
      const std::size_t flagged = k.calls.size() - 1;
      std::optional<EndpointId> ancestor;
      if (a != kAnonymous && schema_.declares_path(x.path))
        ancestor = schema_.top_get_ancestor(x.path);
      if (ancestor) {
        HttpAction probe;
        probe.endpoint = *ancestor;
        probe.identity = a;
        TestCase with_probe;
        try {
          with_probe = concat_and_bind(k, solo_of(probe), true);
        } catch (const CompositionError& e) {
          spdlog::debug("F204 on {}: {}", x.str(), e.what());
          continue;
        }
        auto run = execute(with_probe);
        if (!confirmed(with_probe, run)) continue;
        if (run.calls.back().status != 404) {
          spdlog::debug("F204 on {}: ancestor {} answered {}, inconclusive", x.str(),
                        ancestor->str(), run.calls.back().status);
          continue;
        }
        out.push_back(make_fault(
            fault::kExistenceLeakage, x, std::move(with_probe), run, flagged,
            fmt::format("{} answers 403 for an existing resource and 404 for a missing one; "
                        "the ancestor {} also answers 404 to {}",
                        x.str(), ancestor->str(), who(a))));
        break;
      }
      auto run = execute(k);
      if (!confirmed(k, run)) continue;
      out.push_back(make_fault(
          fault::kExistenceLeakage, x, std::move(k), run, flagged,
          fmt::format("{} answers 403 for an existing resource but 404 for a missing one ({}), "
                      "revealing which resources exist",
                      x.str(),
                      a == kAnonymous ? "anonymous caller" : "no GET ancestor to compare")));
      break;
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f206(const TestPool& pool) {
  std::vector<Fault> out;
  std::set<EndpointId> flagged_endpoints;
  const HttpVerb trio[] = {HttpVerb::Delete, HttpVerb::Put, HttpVerb::Patch};
  auto users = credentials_.authenticated_names();
  for (const auto& path : schema_.paths()) {
    std::vector<HttpVerb> declared;
    for (auto v : trio) {
      if (schema_.declares(EndpointId{v, path})) declared.push_back(v);
    }
    if (declared.size() < 2) continue;
    for (auto v : declared) {
      if (out_of_time()) return out;
      const EndpointId vx{v, path};
      // C_k: a call on (V, X) denied with 403 to some user A. Pool scenarios
      // first, then a fresh creation by another user.
      std::vector<std::pair<TestCase, std::string>> scenarios;
      for (const auto& ref : take(pool.find_all(vx, StatusExpectation::exact(403),
                                                IdentityFilter::authenticated()),
                                  kCandidatesPerEndpoint)) {
        scenarios.emplace_back(slice_prefix(pool, ref), pool.call(ref).action.identity);
      }
      bool chain_tried = false;
      auto add_chain = [&] {
        chain_tried = true;
        for (auto kind : creation_options(schema_, vx)) {
          for (const auto& creator : users) {
            for (const auto& other : users) {
              if (other == creator || out_of_time()) continue;
              TestCase attempt =
                  creation_chain(schema_, schema_.at(vx), kind, creator, other, gen_);
              auto run = execute(attempt);
              if (!completed(attempt, run) || run.calls.back().status != 403) continue;
              pin_observed(attempt, run);
              scenarios.emplace_back(std::move(attempt), other);
              return;
            }
          }
        }
      };
      for (auto v2 : declared) {
        if (v2 == v || out_of_time()) continue;
        const EndpointId target{v2, path};
        if (flagged_endpoints.contains(target)) continue;
        auto tj = pool.find(target, k2xx, IdentityFilter::any());
        if (!tj) continue;
        for (std::size_t k = 0; !flagged_endpoints.contains(target); ++k) {
          if (k == scenarios.size() && !chain_tried) add_chain();
          if (k >= scenarios.size() || out_of_time()) break;
          const auto& [ck, a] = scenarios[k];
          TestCase head = ck;
          freshen(head, fresh_);
          TestCase tail = slice_solo(pool, *tj);
          tail.calls[0].identity = a;
          tail.calls[0].expected_status = k2xx;
          TestCase z;
          try {
            z = concat_and_bind(head, tail, true);
          } catch (const CompositionError& e) {
            spdlog::debug("F206 {} -> {}: {}", vx.str(), target.str(), e.what());
            continue;
          }
          auto run = execute(z);
          if (!confirmed(z, run)) continue;
          // A PUT answered with 201 created a resource instead of modifying one.
          int status = run.calls.back().status;
          if (v2 == HttpVerb::Put && status == 201) continue;
          auto flagged = z.calls.size() - 1;
          out.push_back(make_fault(
              fault::kMissedAuthorization, target, std::move(z), run, flagged,
              fmt::format("{} is denied {} on a resource (403) but may {} the same resource ({})",
                          who(a), to_string(v), to_string(v2), status)));
          flagged_endpoints.insert(target);
        }
      }
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f901(const TestPool& pool) {
  std::vector<Fault> out;
  FindOptions not_created;
  not_created.predicate = [](const PoolEntry& e, std::size_t i) {
    const auto& c = e.executed[i];
    return !(c.action.endpoint.verb == HttpVerb::Put && c.status == 201);
  };
  for (const auto& x : pool.endpoints()) {
    if (!is_modification(x.verb)) continue;
    auto ref = pool.find(x, k2xx, IdentityFilter::anonymous(), not_created);
    if (!ref) continue;
    const auto& entry = pool.entry(ref->entry);
    TestRun run;
    run.calls.assign(entry.executed.begin(), entry.executed.begin() + ref->target + 1);
    out.push_back(make_fault(fault::kAnonymousModifications, x, slice_prefix(pool, *ref), run,
                             ref->target,
                             fmt::format("{} succeeded ({}) without any credentials", x.str(),
                                         pool.call(*ref).status)));
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f900(const TestPool& pool) {
  std::vector<Fault> out;
  for (const auto& x : pool.endpoints()) {
    if (out_of_time()) break;
    auto t1s = pool.find_all(x, StatusExpectation::exact(401), IdentityFilter::authenticated());
    auto more = pool.find_all(x, StatusExpectation::exact(403), IdentityFilter::authenticated());
    t1s.insert(t1s.end(), more.begin(), more.end());
    if (t1s.empty()) continue;
    const SliceSpec t1 = t1s.front();
    const std::string a = pool.call(t1).action.identity;
    const int denied = pool.call(t1).status;

    if (auto t2 = pool.find(x, k2xx, IdentityFilter::anonymous())) {
      TestCase k = concat({prefix(pool, t1), prefix(pool, *t2)});
      auto run = execute(k);
      if (!confirmed(k, run)) {
        spdlog::debug("F900 on {}: anonymous scenario did not reproduce: {}", x.str(),
                      mismatch(k, run));
      } else {
        auto flagged = k.calls.size() - 1;
        out.push_back(make_fault(
            fault::kIgnoreAnonymous, x, std::move(k), run, flagged,
            fmt::format("{} is refused ({}) to {} but an anonymous request succeeds ({})", x.str(),
                        denied, who(a), run.calls.back().status)));
        continue;
      }
    }
    for (const auto& t3 : take(pool.find_all(x, k2xx, IdentityFilter::authenticated()),
                               kCandidatesPerEndpoint)) {
      if (out_of_time()) break;
      TestCase c3 = prefix(pool, t3);
      c3.calls.back().identity = kAnonymous;
      c3.calls.back().expected_status = k2xx;
      TestCase k = concat({prefix(pool, t1), c3});
      auto run = execute(k);
      if (!confirmed(k, run)) {
        spdlog::debug("F900 on {}: replay without credentials did not reproduce: {}", x.str(),
                      mismatch(k, run));
        continue;
      }
      auto flagged = k.calls.size() - 1;
      out.push_back(make_fault(
          fault::kIgnoreAnonymous, x, std::move(k), run, flagged,
          fmt::format("{} is refused ({}) to {} but the same call without credentials succeeds "
                      "({})",
                      x.str(), denied, who(a), run.calls.back().status)));
      break;
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f902(const TestPool& pool) {
  std::vector<Fault> out;
  for (const auto& x : pool.endpoints()) {
    auto refs = pool.find_all(x, StatusExpectation::exact(500), IdentityFilter::any());
    if (refs.empty()) continue;
    auto best =
        *std::min_element(refs.begin(), refs.end(), [&](const SliceSpec& l, const SliceSpec& r) {
          auto ls = pool.call(l).response_body.size();
          auto rs = pool.call(r).response_body.size();
          return ls != rs ? ls < rs : l < r;
        });
    auto match = traces_.find(pool.call(best).response_body);
    if (!match) continue;
    const auto& entry = pool.entry(best.entry);
    TestRun run;
    run.calls.assign(entry.executed.begin(), entry.executed.begin() + best.target + 1);
    out.push_back(make_fault(fault::kLeakedStackTrace, x, slice_prefix(pool, best), run,
                             best.target,
                             fmt::format("500 response body contains a {} stack trace ({}): {}",
                                         match->language, match->pattern, match->line)));
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f903(const TestPool& pool) {
  std::vector<Fault> out;
  std::vector<std::string> probes{kAnonymous};
  for (const auto& n : credentials_.authenticated_names()) probes.push_back(n);
  for (const auto& path : schema_.paths()) {
    if (out_of_time()) break;
    // Concrete arguments: values already used on this path, else generated.
    std::map<std::string, std::string> args;
    for (auto verb : schema_.verbs_at(path)) {
      for (const auto& ref : pool.calls_on(EndpointId{verb, path})) {
        for (const auto& [k, v] : pool.call(ref).action.path_args) args.emplace(k, v);
      }
    }
    for (const auto& name : placeholders(path)) {
      if (args.contains(name)) continue;
      const ParamSpec* spec = nullptr;
      for (const auto& ep : schema_.endpoints()) {
        if (ep.id.path == path && !spec) spec = ep.param(name, ParamLocation::Path);
      }
      ParamSpec fallback{name, ParamLocation::Path, ValueKind::String, {}, true, json::object()};
      args[name] = gen_.param_value(spec ? *spec : fallback, path + "#" + name);
    }
    std::set<HttpVerb> flagged;
    for (const auto& identity : probes) {
      if (out_of_time()) break;
      HttpAction options;
      options.endpoint = EndpointId{HttpVerb::Options, path};
      options.identity = identity;
      options.path_args = args;
      TestCase probe = solo_of(options);
      auto probe_run = execute(probe);
      if (!completed(probe, probe_run)) continue;
      auto allow = probe_run.calls[0].response_headers.find("Allow");
      if (allow == probe_run.calls[0].response_headers.end()) {
        spdlog::debug("F903: OPTIONS {} as {} has no Allow header; skipped", path, identity);
        continue;
      }
      auto hidden = schema_.undeclared_verbs(path, parse_allow_header(allow->second));
      for (auto verb : hidden) {
        if (flagged.contains(verb) || out_of_time()) continue;
        TestCase t = probe;
        t.calls[0].expected_status = StatusExpectation::exact(probe_run.calls[0].status);
        HttpAction call;
        call.endpoint = EndpointId{verb, path};
        call.identity = identity;
        call.path_args = args;
        t.calls.push_back(call);
        auto run = execute(t);
        if (!completed(t, run)) continue;
        int status = run.calls.back().status;
        if (status == 403 || status == 405 || status == 501) continue;
        flagged.insert(verb);
        out.push_back(make_fault(
            fault::kHiddenAccessible, EndpointId{verb, path}, std::move(t), run, 1,
            fmt::format("OPTIONS {} advertises {} which the schema does not declare; calling it "
                        "as {} returned {}",
                        path, to_string(verb), who(identity), status)));
      }
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::oracle_f200(const TestPool& pool) {
  std::vector<Fault> out;
  const double baseline_max = config_.sqli_baseline_max_ms;
  const double injected_min = config_.sqli_sleep_seconds * 1000.0;
  FindOptions fast;
  fast.duration_below_ms = baseline_max;
  for (const auto& ep : schema_.endpoints()) {
    if (out_of_time()) break;
    const auto candidates = take(pool.find_all(ep.id, k2xx, IdentityFilter::any(), fast),
                                 kCandidatesPerEndpoint);
    // The first candidate whose target call has at least one injectable input.
    std::optional<SliceSpec> t1;
    for (const auto& ref : candidates) {
      HttpAction probe = pool.entry(ref.entry).test.calls[ref.target];
      if (rewrite_string_inputs(ep, probe, [](const std::string& s) { return s + "'"; }) > 0) {
        t1 = ref;
        break;
      }
    }
    if (!t1) continue;
    std::size_t tests = 0;
    for (const auto& payload : sqli_payloads_) {
      if (tests >= config_.injection_tests_per_endpoint || out_of_time()) break;
      TestCase c1 = prefix(pool, *t1);
      const std::size_t x_index = c1.calls.size() - 1;
      HttpAction y = c1.calls.back();
      y.expected_status.reset();
      if (rewrite_string_inputs(ep, y, [&](const std::string& s) { return s + payload; }) == 0) {
        continue;
      }
      c1.calls[x_index].max_duration_ms = baseline_max;
      y.min_duration_ms = injected_min;
      TestCase k = concat_and_bind(c1, solo_of(y), true);
      ++tests;
      auto run = execute(k);
      if (!confirmed(k, run)) continue;
      double x_ms = run.calls[x_index].duration_ms;
      double y_ms = run.calls.back().duration_ms;
      if (!(x_ms < baseline_max && y_ms > injected_min)) continue;
      auto flagged = k.calls.size() - 1;
      out.push_back(make_fault(
          fault::kSqlInjection, ep.id, std::move(k), run, flagged,
          fmt::format("baseline call took {:.0f} ms (< {:.0f}); with payload \"{}\" the call took "
                      "{:.0f} ms (> {:.0f})",
                      x_ms, baseline_max, payload, y_ms, injected_min)));
      break;
    }
  }
  return out;
}

namespace {

std::string collection_path(const std::string& path) {
  auto trimmed = path;
  if (trimmed.size() > 1 && trimmed.back() == '/') trimmed.pop_back();
  auto slash = trimmed.rfind('/');
  if (slash == std::string::npos || slash == 0) return {};
  return trimmed.substr(0, slash);
}

}  // namespace

std::vector<Fault> SecurityPhase::oracle_f201(const TestPool& pool) {
  std::vector<Fault> out;
  for (const auto& ep : schema_.endpoints()) {
    if (out_of_time()) break;
    std::optional<SliceSpec> t1;
    for (const auto& ref : take(pool.find_all(ep.id, k2xx, IdentityFilter::any()),
                                kCandidatesPerEndpoint)) {
      HttpAction probe = pool.entry(ref.entry).test.calls[ref.target];
      if (rewrite_string_inputs(ep, probe, [](const std::string& s) { return s + "x"; }) > 0) {
        t1 = ref;
        break;
      }
    }
    if (!t1) continue;

    // Read-back call for stored payloads: same template, the created child
    // when the target answered with a Location, else the parent collection.
    const bool writes = ep.id.verb == HttpVerb::Post || ep.id.verb == HttpVerb::Put ||
                        ep.id.verb == HttpVerb::Patch;
    std::optional<EndpointId> read_back;
    bool via_location = false;
    if (writes) {
      if (schema_.declares(EndpointId{HttpVerb::Get, ep.id.path})) {
        read_back = EndpointId{HttpVerb::Get, ep.id.path};
      } else if (pool.call(*t1).response_headers.contains("Location")) {
        for (const auto& child_path : schema_.node(ep.id.path).children) {
          auto base = ep.id.path.ends_with("/") ? ep.id.path : ep.id.path + "/";
          bool one_level = child_path.starts_with(base) &&
                           child_path.find('/', base.size()) == std::string::npos &&
                           child_path.size() > base.size() && child_path[base.size()] == '{';
          if (one_level && schema_.declares(EndpointId{HttpVerb::Get, child_path})) {
            read_back = EndpointId{HttpVerb::Get, child_path};
            via_location = true;
            break;
          }
        }
      }
      if (!read_back) {
        auto parent = collection_path(ep.id.path);
        for (const auto& candidate : {parent, parent + "/"}) {
          if (!parent.empty() && schema_.declares(EndpointId{HttpVerb::Get, candidate})) {
            read_back = EndpointId{HttpVerb::Get, candidate};
            break;
          }
        }
      }
      if (!read_back)
        spdlog::debug("F201: no GET to read back {}; stored check skipped", ep.id.str());
    }

    std::size_t tests = 0;
    for (const auto& payload : xss_payloads_) {
      if (tests >= config_.injection_tests_per_endpoint || out_of_time()) break;
      TestCase c1 = prefix(pool, *t1);
      HttpAction y = c1.calls.back();
      y.expected_status = k2xx;
      if (rewrite_string_inputs(ep, y, [&](const std::string&) { return payload; }) == 0) continue;
      TestCase k;
      try {
        k = concat_and_bind(c1, solo_of(y), true);
        if (read_back) {
          HttpAction get;
          get.endpoint = *read_back;
          get.identity = y.identity;
          get.expected_status = k2xx;
          if (via_location) {
            // Parent placeholders follow the injected call; the child id
            // comes from its Location header.
            const std::size_t yi = k.calls.size() - 1;
            const auto names = placeholders(read_back->path);
            for (std::size_t n = 0; n + 1 < names.size(); ++n) {
              auto it = k.calls[yi].path_args.find(names[n]);
              if (it != k.calls[yi].path_args.end()) get.path_args[names[n]] = it->second;
            }
            std::vector<Binding> extra;
            for (const auto& b : k.bindings) {
              if (b.target_call == yi && b.slot.kind == SlotKind::PathArg &&
                  !get.path_args.contains(b.slot.name)) {
                Binding copy = b;
                copy.target_call = yi + 1;
                extra.push_back(copy);
              }
            }
            k.calls.push_back(get);
            for (auto& b : extra) k.bindings.push_back(b);
            k.bindings.push_back(Binding{yi, Extractor{ExtractorKind::LocationHeader, {}}, yi + 1,
                                         Slot{SlotKind::PathArg, names.back()}});
            if (auto err = validate(k); !err.empty()) throw CompositionError(err);
          } else {
            k = concat_and_bind(k, solo_of(get), true);
          }
        }
      } catch (const CompositionError& e) {
        spdlog::debug("F201 on {}: {}", ep.id.str(), e.what());
        break;
      }
      ++tests;
      const std::size_t y_index = c1.calls.size();
      auto run = execute(k);
      if (run.unbindable || run.calls.size() <= y_index) continue;
      // Only the prefix needs to reproduce; the injected calls are judged
      // by their bodies.
      TestCase prefix_only = k;
      for (std::size_t i = y_index; i < prefix_only.calls.size(); ++i) {
        prefix_only.calls[i].expected_status.reset();
      }
      if (!verify_statuses(prefix_only, run.calls)) continue;
      const auto& yc = run.calls[y_index];
      if (!yc.timed_out && is_success(yc.status) &&
          yc.response_body.find(payload) != std::string::npos) {
        k.calls.resize(y_index + 1);
        std::erase_if(k.bindings, [&](const Binding& b) { return b.target_call > y_index; });
        run.calls.resize(y_index + 1);
        out.push_back(make_fault(fault::kXss, ep.id, std::move(k), run, y_index,
                                 fmt::format("payload {} is reflected unescaped in the response "
                                             "of {}",
                                             payload, ep.id.str())));
        break;
      }
      if (run.calls.size() == k.calls.size() && k.calls.size() > y_index + 1) {
        const auto& gc = run.calls.back();
        if (!gc.timed_out && is_success(gc.status) &&
            gc.response_body.find(payload) != std::string::npos && is_success(yc.status)) {
          auto flagged = k.calls.size() - 1;
          out.push_back(make_fault(fault::kXss, ep.id, std::move(k), run, flagged,
                                   fmt::format("payload {} sent to {} is returned unescaped by {}",
                                               payload, ep.id.str(), read_back->str())));
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Fault> SecurityPhase::tag_server_errors(const TestPool& pool) {
  std::vector<Fault> out;
  for (const auto& x : pool.endpoints()) {
    auto ref = pool.find(x, StatusExpectation::exact(500), IdentityFilter::any());
    if (!ref) continue;
    const auto& entry = pool.entry(ref->entry);
    TestRun run;
    run.calls.assign(entry.executed.begin(), entry.executed.begin() + ref->target + 1);
    out.push_back(make_fault(fault::kServerError, x, slice_prefix(pool, *ref), run, ref->target,
                             fmt::format("{} answered 500", x.str())));
  }
  return out;
}

SecurityResult SecurityPhase::run(TestPool& pool) {
  SecurityResult result;
  credentials_.invalidate();
  fresh_.reserve_pool(pool);
  const auto start = Clock::now();
  if (config_.phase_budget_ms) {
    deadline_ = start + std::chrono::duration_cast<Clock::duration>(
                            std::chrono::duration<double, std::milli>(*config_.phase_budget_ms));
  }
  auto mark = start;
  auto record = [&](int code, std::size_t tests_before) {
    auto now = Clock::now();
    result.stats.per_oracle.push_back(
        OracleStats{code, new_tests_ - tests_before,
                    std::chrono::duration<double, std::milli>(now - mark).count()});
    mark = now;
  };
  auto budget_exhausted = [&] {
    if (!config_.phase_budget_ms) return false;
    return *config_.phase_budget_ms <= 0.0 || Clock::now() >= *deadline_;
  };

  std::map<std::pair<int, EndpointId>, Fault> faults;
  auto isolate = [&](int code, auto&& fn) {
    if (budget_exhausted()) {
      if (!result.stats.truncated) {
        result.warnings.push_back(
            fmt::format("security phase budget exhausted; skipped oracles from {} on", code));
        spdlog::warn("{}", result.warnings.back());
      }
      result.stats.truncated = true;
      return;
    }
    std::size_t before = new_tests_;
    try {
      fn();
    } catch (const std::exception& e) {
      auto msg = fmt::format("oracle {} failed: {}", code, e.what());
      spdlog::warn("{}", msg);
      result.warnings.push_back(msg);
    }
    record(code, before);
  };

  isolate(kSynthesisStep, [&] { synthesize_403(pool); });
  for (int code : kSecurityOracles) {
    if (!config_.enabled.contains(code)) continue;
    isolate(code, [&] {
      std::vector<Fault> found;
      switch (code) {
        case 205: found = oracle_f205(pool); break;
        case 204: found = oracle_f204(pool); break;
        case 206: found = oracle_f206(pool); break;
        case 901: found = oracle_f901(pool); break;
        case 900: found = oracle_f900(pool); break;
        case 902: found = oracle_f902(pool); break;
        case 903: found = oracle_f903(pool); break;
        case 200: found = oracle_f200(pool); break;
        case 201: found = oracle_f201(pool); break;
      }
      for (auto& f : found) {
        spdlog::info("F{} on {}: {}", f.code, f.endpoint.str(), f.evidence);
        faults.try_emplace({f.code, f.endpoint}, std::move(f));
      }
    });
  }
  if (config_.tag_server_errors) {
    isolate(fault::kServerError, [&] {
      for (auto& f : tag_server_errors(pool))
        faults.try_emplace({f.code, f.endpoint}, std::move(f));
    });
  }
  result.stats.total_elapsed_ms =
      std::chrono::duration<double, std::milli>(mark - start).count();
  for (auto& [key, f] : faults) result.faults.push_back(std::move(f));
  for (auto& w : warnings_) result.warnings.push_back(std::move(w));
  deadline_.reset();
  return result;
}

}  // namespace restsec
