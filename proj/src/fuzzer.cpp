#include "restsec/fuzzer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "restsec/errors.hpp"

namespace restsec {

namespace {

constexpr std::string_view kAlphabet =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
constexpr std::size_t kDefaultMaxLength = 12;
constexpr long long kIdMax = 1'000'000;

std::string render_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string form_encode(const json& object) {
  std::string out;
  for (const auto& [k, v] : object.items()) {
    if (!out.empty()) out += '&';
    out += url_encode(k) + "=" + url_encode(render_scalar(v));
  }
  return out;
}

}  // namespace

InputGenerator::InputGenerator(std::uint64_t seed) : rng_(seed) {}

bool InputGenerator::chance(double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p;
}

std::size_t InputGenerator::pick(std::size_t n) {
  if (n == 0) return 0;
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
}

std::string InputGenerator::string_value(const Constraints& c, const json& schema,
                                         const std::string& slot_key,
                                         std::size_t min_length_floor) {
  if (!c.enum_values.empty()) {
    auto& cursor = enum_cursor_[slot_key];
    const auto& v = c.enum_values[cursor++ % c.enum_values.size()];
    return render_scalar(v);
  }
  std::size_t lo = std::max(c.min_length.value_or(0), min_length_floor);
  std::size_t hi = c.max_length ? std::max(*c.max_length, lo) : std::max(lo, kDefaultMaxLength);
  hi = std::min(hi, lo + 64);

  auto random_string = [&] {
    std::size_t len;
    double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (r < 0.15) {
      len = lo;
    } else if (r < 0.3 && c.max_length) {
      len = hi;
    } else {
      len = std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    std::string s(len, 'a');
    for (auto& ch : s) ch = kAlphabet[pick(kAlphabet.size())];
    return s;
  };

  if (c.pattern) {
    for (const char* key : {"example", "default"}) {
      if (schema.contains(key) && schema[key].is_string()) {
        auto ex = schema[key].get<std::string>();
        if (c.accepts_string(ex) && ex.size() >= min_length_floor) return ex;
      }
    }
    for (int attempt = 0; attempt < 100; ++attempt) {
      auto s = random_string();
      if (c.accepts_string(s)) return s;
    }
    throw GenerationError("cannot produce a value for '" + slot_key + "' matching pattern " +
                          *c.pattern + " within 100 attempts");
  }

  auto format = schema.value("format", std::string());
  if (format == "email") {
    auto s = random_string() + "@example.com";
    if (c.accepts_string(s)) return s;
  } else if (format == "date") {
    return "2024-01-15";
  } else if (format == "date-time") {
    return "2024-01-15T10:00:00Z";
  } else if (format == "uuid") {
    std::string s = "xxxxxxxx-xxxx-4xxx-8xxx-xxxxxxxxxxxx";
    for (auto& ch : s) {
      if (ch == 'x') ch = "0123456789abcdef"[pick(16)];
    }
    return s;
  }
  return random_string();
}

long long InputGenerator::integer_value(const Constraints& c) {
  if (!c.enum_values.empty()) {
    const auto& v = c.enum_values[pick(c.enum_values.size())];
    if (v.is_number()) return v.get<long long>();
  }
  long long lo = 1;
  long long hi = kIdMax;
  if (c.minimum) lo = static_cast<long long>(std::ceil(*c.minimum)) + (c.exclusive_minimum ? 1 : 0);
  if (c.maximum) {
    hi = static_cast<long long>(std::floor(*c.maximum)) - (c.exclusive_maximum ? 1 : 0);
  } else if (c.minimum) {
    hi = std::max(lo, lo + kIdMax - 1);
  }
  if (hi < lo) hi = lo;
  double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  if (c.minimum && r < 0.1) return lo;
  if (c.maximum && r < 0.2) return hi;
  return std::uniform_int_distribution<long long>(lo, hi)(rng_);
}

double InputGenerator::number_value(const Constraints& c) {
  double lo = c.minimum.value_or(0.0);
  double hi = c.maximum.value_or(lo + 1000.0);
  if (hi < lo) hi = lo;
  double v = std::uniform_real_distribution<double>(lo, hi)(rng_);
  if (!c.accepts_number(v)) v = (lo + hi) / 2.0;
  return std::round(v * 100.0) / 100.0;
}

json InputGenerator::value_for_schema(const json& schema, const std::string& slot_key, int depth) {
  std::string type = schema.value("type", std::string());
  if (type.empty() && schema.contains("properties")) type = "object";
  if (schema.contains("enum") && schema["enum"].is_array() && !schema["enum"].empty()) {
    auto& cursor = enum_cursor_[slot_key];
    return schema["enum"][cursor++ % schema["enum"].size()];
  }
  auto constraints = [&] {
    Constraints c;
    if (schema.contains("minLength") && schema["minLength"].is_number_unsigned())
      c.min_length = schema["minLength"].get<std::size_t>();
    if (schema.contains("maxLength") && schema["maxLength"].is_number_unsigned())
      c.max_length = schema["maxLength"].get<std::size_t>();
    if (schema.contains("minimum") && schema["minimum"].is_number())
      c.minimum = schema["minimum"].get<double>();
    if (schema.contains("maximum") && schema["maximum"].is_number())
      c.maximum = schema["maximum"].get<double>();
    if (schema.contains("pattern") && schema["pattern"].is_string())
      c.pattern = schema["pattern"].get<std::string>();
    return c;
  };
  if (type == "integer") return integer_value(constraints());
  if (type == "number") return number_value(constraints());
  if (type == "boolean") return chance(0.5);
  if (type == "array") {
    json arr = json::array();
    if (depth > 3) return arr;
    json items = schema.contains("items") ? schema["items"] : json::object();
    std::size_t n = pick(3);
    if (schema.contains("minItems") && schema["minItems"].is_number_unsigned())
      n = std::max(n, schema["minItems"].get<std::size_t>());
    for (std::size_t i = 0; i < n; ++i) {
      arr.push_back(value_for_schema(items, slot_key + "[]", depth + 1));
    }
    return arr;
  }
  if (type == "object") {
    json obj = json::object();
    if (depth > 3 || !schema.contains("properties")) return obj;
    std::set<std::string> required;
    if (schema.contains("required") && schema["required"].is_array()) {
      for (const auto& r : schema["required"]) required.insert(r.get<std::string>());
    }
    for (const auto& [name, prop] : schema["properties"].items()) {
      if (prop.value("readOnly", false)) continue;
      if (!required.contains(name) && !chance(0.5)) continue;
      obj[name] = value_for_schema(prop, slot_key + "." + name, depth + 1);
    }
    return obj;
  }
  return string_value(constraints(), schema, slot_key);
}

std::string InputGenerator::param_value(const ParamSpec& p, const std::string& slot_key) {
  switch (p.kind) {
    case ValueKind::Integer:
      return std::to_string(integer_value(p.constraints));
    case ValueKind::Number: {
      auto v = json(number_value(p.constraints));
      return v.dump();
    }
    case ValueKind::Boolean:
      return chance(0.5) ? "true" : "false";
    case ValueKind::Array:
    case ValueKind::Object: {
      auto v = value_for_schema(p.schema, slot_key);
      if (v.is_array()) {
        std::string out;
        for (const auto& item : v) {
          if (!out.empty()) out += ',';
          out += render_scalar(item);
        }
        return out;
      }
      return v.dump();
    }
    case ValueKind::String:
      break;
  }
  return string_value(p.constraints, p.schema, slot_key,
                      p.location == ParamLocation::Path ? 1 : 0);
}

std::optional<RequestBody> InputGenerator::body_for(const EndpointSpec& endpoint) {
  if (!endpoint.body) return std::nullopt;
  const auto& spec = *endpoint.body;
  bool json_media = spec.media_type.find("json") != std::string::npos;
  bool form_media = spec.media_type == "application/x-www-form-urlencoded";
  if (!json_media && !form_media) return std::nullopt;
  std::string key_base = endpoint.id.str() + "#body";

  bool has_fields = false;
  json obj = json::object();
  for (const auto& p : endpoint.parameters) {
    if (p.location != ParamLocation::BodyField) continue;
    has_fields = true;
    if (p.schema.value("readOnly", false)) continue;
    if (!p.required && !chance(0.5)) continue;
    auto key = key_base + "." + p.name;
    switch (p.kind) {
      case ValueKind::String:
        obj[p.name] = string_value(p.constraints, p.schema, key);
        break;
      case ValueKind::Integer:
        obj[p.name] = integer_value(p.constraints);
        break;
      case ValueKind::Number:
        obj[p.name] = number_value(p.constraints);
        break;
      default:
        obj[p.name] = value_for_schema(p.schema, key);
    }
  }
  if (!has_fields) {
    if (!spec.required && !chance(0.5)) return std::nullopt;
    json v = value_for_schema(spec.schema, key_base);
    return RequestBody{spec.media_type, json_media ? v.dump() : form_encode(v)};
  }
  return RequestBody{spec.media_type, json_media ? obj.dump() : form_encode(obj)};
}

HttpAction InputGenerator::action_for(const EndpointSpec& endpoint, const std::string& identity) {
  HttpAction a;
  a.endpoint = endpoint.id;
  a.identity = identity;
  for (const auto& p : endpoint.parameters) {
    auto key = endpoint.id.str() + "#" + std::string(to_string(p.location)) + "." + p.name;
    switch (p.location) {
      case ParamLocation::Path:
        a.path_args[p.name] = param_value(p, key);
        break;
      case ParamLocation::Query:
        if (p.required || chance(0.5)) a.query[p.name] = param_value(p, key);
        break;
      case ParamLocation::Header:
        if (p.required || chance(0.5)) a.headers[p.name] = param_value(p, key);
        break;
      case ParamLocation::BodyField:
        break;
    }
  }
  a.body = body_for(endpoint);
  return a;
}

namespace {

/// "/a/{x}/items/{id}" -> "/a/{x}/items"; "" when the path does not end in a
/// placeholder segment.
std::string collection_of(const std::string& path) {
  auto slash = path.rfind('/');
  if (slash == std::string::npos || slash + 1 >= path.size()) return {};
  auto last = path.substr(slash + 1);
  if (last.size() < 3 || last.front() != '{' || last.back() != '}') return {};
  return path.substr(0, slash);
}

const EndpointSpec* post_collection(const SchemaModel& schema, const std::string& path) {
  auto coll = collection_of(path);
  if (coll.empty()) return nullptr;
  for (const auto& candidate : {coll, coll + "/"}) {
    if (candidate.empty()) continue;
    if (auto* ep = schema.find(EndpointId{HttpVerb::Post, candidate})) return ep;
  }
  return nullptr;
}

}  // namespace

std::vector<CreationKind> creation_options(const SchemaModel& schema, const EndpointId& target) {
  std::vector<CreationKind> out;
  if (placeholders(target.path).empty()) return out;
  if (!collection_of(target.path).empty() &&
      schema.declares(EndpointId{HttpVerb::Put, target.path})) {
    out.push_back(CreationKind::PutToId);
  }
  if (post_collection(schema, target.path)) out.push_back(CreationKind::PostToCollection);
  return out;
}

TestCase creation_chain(const SchemaModel& schema, const EndpointSpec& target, CreationKind kind,
                        const std::string& creator_identity, const std::string& target_identity,
                        InputGenerator& gen) {
  TestCase t;
  HttpAction follow = gen.action_for(target, target_identity);
  if (kind == CreationKind::PutToId) {
    HttpAction creator = gen.action_for(schema.at(EndpointId{HttpVerb::Put, target.id.path}),
                                        creator_identity);
    creator.path_args = follow.path_args;
    t.calls = {creator, follow};
    return t;
  }
  const EndpointSpec* post = post_collection(schema, target.id.path);
  if (!post) throw CompositionError("no creating POST for " + target.id.str());
  HttpAction creator = gen.action_for(*post, creator_identity);
  for (auto& [name, value] : creator.path_args) {
    if (auto it = follow.path_args.find(name); it != follow.path_args.end()) value = it->second;
  }
  auto names = placeholders(target.id.path);
  Binding b;
  b.source_call = 0;
  b.target_call = 1;
  b.slot = Slot{SlotKind::PathArg, names.back()};
  bool id_in_body = std::find(post->response_fields.begin(), post->response_fields.end(), "id") !=
                    post->response_fields.end();
  b.extractor = id_in_body ? Extractor{ExtractorKind::BodyField, "id"}
                           : Extractor{ExtractorKind::LocationHeader, {}};
  follow.path_args.erase(names.back());
  t.calls = {creator, follow};
  t.bindings = {b};
  return t;
}

void append_on_same_resource(TestCase& test, std::size_t anchor, const EndpointSpec& next,
                             const std::string& identity, InputGenerator& gen) {
  HttpAction call = gen.action_for(next, identity);
  const auto& source = test.calls.at(anchor);
  std::size_t index = test.calls.size();
  for (const auto& name : placeholders(next.id.path)) {
    if (auto it = source.path_args.find(name); it != source.path_args.end()) {
      call.path_args[name] = it->second;
    }
    for (const auto& b : test.bindings) {
      if (b.target_call == anchor && b.slot.kind == SlotKind::PathArg && b.slot.name == name) {
        Binding copy = b;
        copy.target_call = index;
        test.bindings.push_back(copy);
        call.path_args.erase(name);
        break;
      }
    }
  }
  test.calls.push_back(std::move(call));
}

std::size_t default_plateau_window(std::size_t endpoints, std::size_t identities) {
  return std::max<std::size_t>(200, 20 * endpoints * identities);
}

namespace {

bool reads_only(HttpVerb v) {
  return v == HttpVerb::Get || v == HttpVerb::Head || v == HttpVerb::Options;
}

/// Concrete paths addressed by earlier tests. Later tests neither read
/// resources an earlier test changed nor change resources an earlier test
/// observed, so every kept test depends only on the initial target state and
/// its own calls.
class TouchedPaths {
 public:
  void record(const ExecutedCall& call) {
    observed_.insert(trimmed(call.action.rendered_path()));
    if (!is_success(call.status) || reads_only(call.action.endpoint.verb)) return;
    if (call.action.endpoint.verb != HttpVerb::Post &&
        !placeholders(call.action.endpoint.path).empty()) {
      changed_.insert(trimmed(call.action.rendered_path()));
    }
    if (auto it = call.response_headers.find("Location"); it != call.response_headers.end()) {
      changed_.insert(trimmed(location_path(it->second)));
    }
  }

  /// True when `path` or one of its ancestors was changed.
  bool changed(const std::string& path) const {
    for (std::size_t k = 1; k <= path.size(); ++k) {
      if ((k == path.size() || path[k] == '/') && changed_.contains(path.substr(0, k))) return true;
    }
    return false;
  }

  /// True when `path` or one of its descendants was addressed.
  bool observed(const std::string& path) const {
    const auto p = trimmed(path);
    if (observed_.contains(p)) return true;
    const auto below = p == "/" ? p : p + "/";
    auto it = observed_.lower_bound(below);
    return it != observed_.end() && it->starts_with(below);
  }

 private:
  static std::string trimmed(std::string path) {
    while (path.size() > 1 && path.back() == '/') path.pop_back();
    return path;
  }

  static std::string location_path(std::string value) {
    if (auto scheme = value.find("://"); scheme != std::string::npos) {
      auto slash = value.find('/', scheme + 3);
      value = slash == std::string::npos ? "/" : value.substr(slash);
    }
    if (auto q = value.find_first_of("?#"); q != std::string::npos) value.resize(q);
    return value;
  }

  std::set<std::string> observed_;
  std::set<std::string> changed_;
};

bool path_arg_bound(const TestCase& test, std::size_t call, const std::string& name) {
  return std::any_of(test.bindings.begin(), test.bindings.end(), [&](const Binding& b) {
    return b.target_call == call && b.slot.kind == SlotKind::PathArg && b.slot.name == name;
  });
}

void replace_arg(TestCase& test, std::size_t from, const std::string& name, FreshIds& ids) {
  const std::string old_value = test.calls[from].path_args.at(name);
  const std::string new_value = ids.next_like(old_value);
  for (std::size_t j = from; j < test.calls.size(); ++j) {
    auto it = test.calls[j].path_args.find(name);
    if (it != test.calls[j].path_args.end() && it->second == old_value) it->second = new_value;
  }
}

/// Gives fresh values to literal path arguments that would read a changed
/// resource or change an observed one, carrying each new value to the later
/// calls that used the old one.
void avoid_touched(TestCase& test, const TouchedPaths& touched, FreshIds& ids) {
  for (std::size_t i = 0; i < test.calls.size(); ++i) {
    const auto& path = test.calls[i].endpoint.path;
    const auto names = placeholders(path);
    for (const auto& name : names) {
      if (path_arg_bound(test, i, name) || !test.calls[i].path_args.contains(name)) continue;
      HttpAction upto = test.calls[i];
      upto.endpoint.path = path.substr(0, path.find("{" + name + "}") + name.size() + 2);
      if (touched.changed(upto.rendered_path())) replace_arg(test, i, name, ids);
    }
    if (reads_only(test.calls[i].endpoint.verb) || names.empty()) continue;
    const auto& last = names.back();
    if (path_arg_bound(test, i, last) || !test.calls[i].path_args.contains(last)) continue;
    if (touched.observed(test.calls[i].rendered_path())) replace_arg(test, i, last, ids);
  }
}

}  // namespace

TestPool base_fuzz(const SchemaModel& schema, CredentialStore& credentials, HttpExecutor& executor,
                   const FuzzConfig& config, FuzzStats* stats) {
  using Clock = std::chrono::steady_clock;
  TestPool pool;
  FuzzStats local;
  const auto start = Clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };
  auto finish = [&] {
    local.elapsed_ms = elapsed_ms();
    if (stats) *stats = local;
    return pool;
  };
  if (config.budget_seconds <= 0.0 || schema.endpoints().empty()) return finish();

  std::vector<std::regex> deny;
  for (const auto& d : config.deny_paths) deny.emplace_back(d);
  auto denied = [&](const EndpointId& id) {
    if (id.verb == HttpVerb::Get || id.verb == HttpVerb::Head || id.verb == HttpVerb::Options)
      return false;
    return std::any_of(deny.begin(), deny.end(),
                       [&](const std::regex& r) { return std::regex_search(id.path, r); });
  };

  std::vector<const EndpointSpec*> targets;
  for (const auto& ep : schema.endpoints()) {
    if (denied(ep.id)) {
      spdlog::info("skipping {} (deny-listed path)", ep.id.str());
      continue;
    }
    targets.push_back(&ep);
  }
  if (targets.empty()) return finish();

  const auto& identities = credentials.identities();
  std::vector<std::string> names;
  for (const auto& id : identities) names.push_back(id.name);
  auto authenticated = credentials.authenticated_names();
  const std::size_t window = config.plateau_window.value_or(
      default_plateau_window(targets.size(), names.size()));

  InputGenerator gen(config.seed);
  TouchedPaths touched;
  FreshIds fresh(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::map<std::tuple<EndpointId, int, std::string>, std::size_t> archive;
  std::size_t stale = 0;
  const double budget_ms = config.budget_seconds * 1000.0;

  for (std::size_t slot = 0; elapsed_ms() < budget_ms; ++slot) {
    const EndpointSpec& target = *targets[slot % targets.size()];
    const std::string& identity = names[(slot / targets.size()) % names.size()];

    TestCase test;
    auto options = creation_options(schema, target.id);
    std::erase_if(options, [&](CreationKind k) {
      auto creator = k == CreationKind::PutToId ? EndpointId{HttpVerb::Put, target.id.path}
                                                : post_collection(schema, target.id.path)->id;
      return denied(creator);
    });
    if (!options.empty() && gen.chance(0.6)) {
      auto kind = options[gen.pick(options.size())];
      const std::string& creator =
          !authenticated.empty() && gen.chance(0.85) ? authenticated[gen.pick(authenticated.size())]
                                                     : names[gen.pick(names.size())];
      test = creation_chain(schema, target, kind, creator, identity, gen);
      std::vector<const EndpointSpec*> siblings;
      for (const auto* ep : targets) {
        if (ep->id.path == target.id.path) siblings.push_back(ep);
      }
      std::size_t extra = gen.pick(3);
      for (std::size_t k = 0; k < extra; ++k) {
        const auto& who = names[gen.pick(names.size())];
        append_on_same_resource(test, 1, *siblings[gen.pick(siblings.size())], who, gen);
      }
    } else {
      test.calls.push_back(gen.action_for(target, identity));
    }

    avoid_touched(test, touched, fresh);
    auto run = executor.run_test_case(test, credentials);
    for (const auto& call : run.calls) {
      touched.record(call);
      for (const auto& [name, value] : call.action.path_args) fresh.reserve(value);
    }
    ++local.tests_executed;
    local.calls_executed += run.calls.size();
    if (run.unbindable) {
      // Keep the executed prefix; the unbound remainder is dropped.
      test.calls.resize(run.calls.size());
      std::erase_if(test.bindings,
                    [&](const Binding& b) { return b.target_call >= run.calls.size(); });
      if (test.calls.empty()) continue;
    }

    bool keep = false;
    bool novel = false;
    for (const auto& call : run.calls) {
      auto& count = archive[{call.action.endpoint, call.timed_out ? 0 : call.status,
                             call.action.identity}];
      if (count == 0) novel = true;
      if (count < config.archive_per_key) keep = true;
      ++count;
    }
    if (keep) pool.add(std::move(test), std::move(run.calls));
    stale = novel ? 0 : stale + 1;
    if (window > 0 && stale >= window) {
      local.stopped_on_plateau = true;
      spdlog::info("base fuzzing plateaued after {} tests", local.tests_executed);
      break;
    }
  }
  spdlog::info("base fuzzing: {} tests, {} calls, pool size {}", local.tests_executed,
               local.calls_executed, pool.size());
  return finish();
}

}  // namespace restsec
