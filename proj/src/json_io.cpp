#include "restsec/json_io.hpp"

#include "restsec/errors.hpp"

namespace restsec {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError(what, where);
}

const json& member(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(where, std::string("missing field `") + key + "`");
  return *it;
}

std::string get_string(const json& j, const char* key, const std::string& where) {
  const auto& v = member(j, key, where);
  if (!v.is_string()) fail(where + "." + key, "expected a string");
  return v.get<std::string>();
}

std::string opt_string(const json& j, const char* key, const std::string& where,
                       const std::string& fallback = {}) {
  if (!j.contains(key)) return fallback;
  return get_string(j, key, where);
}

std::size_t get_index(const json& j, const char* key, const std::string& where) {
  const auto& v = member(j, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    fail(where + "." + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

template <typename Map>
json map_to_json(const Map& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

template <typename Map>
Map map_from_json(const json& j, const char* key, const std::string& where) {
  Map out;
  if (!j.contains(key)) return out;
  const auto& obj = j.at(key);
  if (!obj.is_object()) fail(where + "." + key, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!it.value().is_string()) fail(where + "." + key + "." + it.key(), "expected a string");
    out[it.key()] = it.value().template get<std::string>();
  }
  return out;
}

}  // namespace

json to_json(const EndpointId& id) {
  return json{{"verb", std::string(to_string(id.verb))}, {"path", id.path}};
}

EndpointId endpoint_from_json(const json& j, const std::string& where) {
  auto verb = parse_verb(get_string(j, "verb", where));
  if (!verb) fail(where + ".verb", "unknown HTTP verb");
  auto path = get_string(j, "path", where);
  if (!path.starts_with("/")) fail(where + ".path", "path must begin with '/'");
  return EndpointId{*verb, path};
}

json to_json(const HttpAction& a) {
  json out = json::object();
  out["endpoint"] = to_json(a.endpoint);
  out["identity"] = a.identity;
  out["pathArgs"] = map_to_json(a.path_args);
  out["query"] = map_to_json(a.query);
  out["headers"] = map_to_json(a.headers);
  if (a.body) out["body"] = json{{"mediaType", a.body->media_type}, {"payload", a.body->payload}};
  if (a.expected_status) out["expectedStatus"] = a.expected_status->str();
  if (a.max_duration_ms) out["maxDurationMs"] = *a.max_duration_ms;
  if (a.min_duration_ms) out["minDurationMs"] = *a.min_duration_ms;
  return out;
}

HttpAction action_from_json(const json& j, const std::string& where) {
  HttpAction a;
  a.endpoint = endpoint_from_json(member(j, "endpoint", where), where + ".endpoint");
  a.identity = opt_string(j, "identity", where, kAnonymous);
  a.path_args = map_from_json<std::map<std::string, std::string>>(j, "pathArgs", where);
  a.query = map_from_json<std::map<std::string, std::string>>(j, "query", where);
  a.headers = map_from_json<Headers>(j, "headers", where);
  if (j.contains("body") && !j.at("body").is_null()) {
    const auto& b = j.at("body");
    a.body = RequestBody{opt_string(b, "mediaType", where + ".body"),
                         get_string(b, "payload", where + ".body")};
  }
  if (j.contains("expectedStatus")) {
    auto text = get_string(j, "expectedStatus", where);
    auto st = StatusExpectation::parse(text);
    if (!st) fail(where + ".expectedStatus", "bad status expectation '" + text + "'");
    a.expected_status = *st;
  }
  for (const char* key : {"maxDurationMs", "minDurationMs"}) {
    if (!j.contains(key)) continue;
    if (!j.at(key).is_number()) fail(where + "." + key, "expected a number");
    (std::string(key) == "maxDurationMs" ? a.max_duration_ms : a.min_duration_ms) =
        j.at(key).get<double>();
  }
  return a;
}

json to_json(const Binding& b) {
  json extractor = b.extractor.kind == ExtractorKind::LocationHeader
                       ? json{{"kind", "locationHeader"}}
                       : json{{"kind", "bodyField"}, {"field", b.extractor.field}};
  const char* slot_kind = b.slot.kind == SlotKind::PathArg      ? "pathArg"
                          : b.slot.kind == SlotKind::QueryParam ? "queryParam"
                                                                : "bodyField";
  return json{{"sourceCall", b.source_call},
              {"extractor", extractor},
              {"targetCall", b.target_call},
              {"slot", json{{"kind", slot_kind}, {"name", b.slot.name}}}};
}

Binding binding_from_json(const json& j, const std::string& where) {
  Binding b;
  b.source_call = get_index(j, "sourceCall", where);
  b.target_call = get_index(j, "targetCall", where);
  const auto& ex = member(j, "extractor", where);
  auto kind = get_string(ex, "kind", where + ".extractor");
  if (kind == "locationHeader") {
    b.extractor.kind = ExtractorKind::LocationHeader;
  } else if (kind == "bodyField") {
    b.extractor.kind = ExtractorKind::BodyField;
    b.extractor.field = get_string(ex, "field", where + ".extractor");
  } else {
    fail(where + ".extractor.kind", "unknown extractor '" + kind + "'");
  }
  const auto& slot = member(j, "slot", where);
  auto skind = get_string(slot, "kind", where + ".slot");
  if (skind == "pathArg") {
    b.slot.kind = SlotKind::PathArg;
  } else if (skind == "queryParam") {
    b.slot.kind = SlotKind::QueryParam;
  } else if (skind == "bodyField") {
    b.slot.kind = SlotKind::BodyField;
  } else {
    fail(where + ".slot.kind", "unknown slot kind '" + skind + "'");
  }
  b.slot.name = get_string(slot, "name", where + ".slot");
  return b;
}

json to_json(const TestCase& t) {
  json calls = json::array();
  for (const auto& c : t.calls) calls.push_back(to_json(c));
  json bindings = json::array();
  for (const auto& b : t.bindings) bindings.push_back(to_json(b));
  return json{{"provenance", t.provenance.oracle_code}, {"calls", calls}, {"bindings", bindings}};
}

TestCase test_from_json(const json& j, const std::string& where) {
  TestCase t;
  if (j.contains("provenance")) {
    if (!j.at("provenance").is_number_integer()) fail(where + ".provenance", "expected an integer");
    t.provenance.oracle_code = j.at("provenance").get<int>();
  }
  const auto& calls = member(j, "calls", where);
  if (!calls.is_array()) fail(where + ".calls", "expected an array");
  for (std::size_t i = 0; i < calls.size(); ++i) {
    t.calls.push_back(action_from_json(calls[i], where + ".calls[" + std::to_string(i) + "]"));
  }
  if (j.contains("bindings")) {
    const auto& bs = j.at("bindings");
    if (!bs.is_array()) fail(where + ".bindings", "expected an array");
    for (std::size_t i = 0; i < bs.size(); ++i) {
      t.bindings.push_back(
          binding_from_json(bs[i], where + ".bindings[" + std::to_string(i) + "]"));
    }
  }
  if (auto err = validate(t); !err.empty()) fail(where, err);
  return t;
}

json to_json(const ExecutedCall& c) {
  return json{{"action", to_json(c.action)},
              {"status", c.status},
              {"responseHeaders", map_to_json(c.response_headers)},
              {"responseBody", c.response_body},
              {"bodyTruncated", c.body_truncated},
              {"durationMs", c.duration_ms},
              {"timedOut", c.timed_out}};
}

ExecutedCall executed_from_json(const json& j, const std::string& where) {
  ExecutedCall c;
  c.action = action_from_json(member(j, "action", where), where + ".action");
  const auto& st = member(j, "status", where);
  if (!st.is_number_integer()) fail(where + ".status", "expected an integer");
  c.status = st.get<int>();
  c.response_headers = map_from_json<Headers>(j, "responseHeaders", where);
  c.response_body = opt_string(j, "responseBody", where);
  c.body_truncated = j.value("bodyTruncated", false);
  const auto& d = member(j, "durationMs", where);
  if (!d.is_number()) fail(where + ".durationMs", "expected a number");
  c.duration_ms = d.get<double>();
  c.timed_out = j.value("timedOut", false);
  return c;
}

json to_json(const AuthIdentity& id) {
  json out{{"name", id.name}};
  switch (id.kind) {
    case AuthKind::Anonymous:
      out["kind"] = "anonymous";
      break;
    case AuthKind::StaticHeaders:
      out["kind"] = "staticHeaders";
      out["headers"] = map_to_json(id.static_headers);
      break;
    case AuthKind::LoginFlow: {
      const auto& r = *id.login;
      out["kind"] = "loginFlow";
      out["login"] = json{{"endpoint", r.endpoint},
                          {"method", std::string(to_string(r.method))},
                          {"contentType", r.content_type},
                          {"payload", r.payload},
                          {"token", json{{"extractFrom", r.extract_from == TokenSource::Body
                                                             ? "body"
                                                             : "header"},
                                         {"field", r.field},
                                         {"headerTemplate", r.header_template}}}};
      break;
    }
  }
  return out;
}

AuthIdentity identity_from_json(const json& j, const std::string& where) {
  AuthIdentity id;
  id.name = get_string(j, "name", where);
  auto kind = get_string(j, "kind", where);
  if (kind == "anonymous") {
    id.kind = AuthKind::Anonymous;
  } else if (kind == "staticHeaders") {
    id.kind = AuthKind::StaticHeaders;
    id.static_headers = map_from_json<Headers>(j, "headers", where);
  } else if (kind == "loginFlow") {
    id.kind = AuthKind::LoginFlow;
    const auto& l = member(j, "login", where);
    const auto& tok = member(l, "token", where + ".login");
    LoginRecipe r;
    r.endpoint = get_string(l, "endpoint", where + ".login");
    auto verb = parse_verb(opt_string(l, "method", where + ".login", "POST"));
    if (!verb) fail(where + ".login.method", "unknown HTTP verb");
    r.method = *verb;
    r.content_type = opt_string(l, "contentType", where + ".login");
    r.payload = opt_string(l, "payload", where + ".login");
    r.extract_from = opt_string(tok, "extractFrom", where + ".login.token", "body") == "header"
                         ? TokenSource::Header
                         : TokenSource::Body;
    r.field = get_string(tok, "field", where + ".login.token");
    r.header_template = opt_string(tok, "headerTemplate", where + ".login.token", "Bearer {token}");
    id.login = r;
  } else {
    fail(where + ".kind", "unknown identity kind '" + kind + "'");
  }
  return id;
}

json parse_json_document(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed " + what + ": " + e.what(), "byte " + std::to_string(e.byte));
  }
}

}  // namespace restsec
