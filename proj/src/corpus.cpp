#include "restsec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "restsec/errors.hpp"
#include "restsec/json_io.hpp"

namespace restsec {

bool IdentityFilter::matches(const std::string& identity) const {
  switch (kind) {
    case Kind::Any:
      return true;
    case Kind::Anonymous:
      return identity == kAnonymous;
    case Kind::Authenticated:
      return identity != kAnonymous;
    case Kind::Named:
      return identity == name;
    case Kind::NotNamed:
      return identity != kAnonymous && identity != name;
  }
  return false;
}

std::size_t TestPool::add(TestCase test, std::vector<ExecutedCall> executed) {
  if (test.calls.empty() || test.calls.size() != executed.size()) {
    throw std::invalid_argument("pool entry calls and executions must align");
  }
  std::size_t index = entries_.size();
  for (std::size_t i = 0; i < executed.size(); ++i) {
    by_endpoint_[test.calls[i].endpoint].push_back(SliceSpec{index, i});
  }
  entries_.push_back(PoolEntry{std::move(test), std::move(executed)});
  return index;
}

std::vector<SliceSpec> TestPool::find_all(const EndpointId& endpoint,
                                          const StatusExpectation& status,
                                          const IdentityFilter& identity,
                                          const FindOptions& options) const {
  std::vector<SliceSpec> out;
  auto it = by_endpoint_.find(endpoint);
  if (it == by_endpoint_.end()) return out;
  for (const auto& ref : it->second) {
    const auto& entry = entries_[ref.entry];
    const auto& call = entry.executed[ref.target];
    if (call.timed_out || !status.matches(call.status)) continue;
    if (!identity.matches(call.action.identity)) continue;
    if (options.duration_below_ms && !(call.duration_ms < *options.duration_below_ms)) continue;
    if (options.predicate && !options.predicate(entry, ref.target)) continue;
    out.push_back(ref);
  }
  std::stable_sort(out.begin(), out.end(), [this](const SliceSpec& a, const SliceSpec& b) {
    auto na = entries_[a.entry].test.calls.size();
    auto nb = entries_[b.entry].test.calls.size();
    if (na != nb) return na < nb;
    return a < b;
  });
  return out;
}

std::optional<SliceSpec> TestPool::find(const EndpointId& endpoint, const StatusExpectation& status,
                                        const IdentityFilter& identity,
                                        const FindOptions& options) const {
  auto all = find_all(endpoint, status, identity, options);
  if (all.empty()) return std::nullopt;
  return all.front();
}

std::vector<EndpointId> TestPool::endpoints() const {
  std::vector<EndpointId> out;
  for (const auto& [id, refs] : by_endpoint_) out.push_back(id);
  return out;
}

const std::vector<SliceSpec>& TestPool::calls_on(const EndpointId& endpoint) const {
  static const std::vector<SliceSpec> kNone;
  auto it = by_endpoint_.find(endpoint);
  return it == by_endpoint_.end() ? kNone : it->second;
}

TestCase slice_prefix(const TestPool& pool, const SliceSpec& spec) {
  const auto& entry = pool.entry(spec.entry);
  if (spec.target >= entry.test.calls.size()) throw std::out_of_range("slice target out of range");
  TestCase out;
  out.provenance = entry.test.provenance;
  for (std::size_t i = 0; i <= spec.target; ++i) {
    HttpAction call = entry.test.calls[i];
    call.expected_status = StatusExpectation::exact(entry.executed[i].status);
    out.calls.push_back(std::move(call));
  }
  for (const auto& b : entry.test.bindings) {
    if (b.target_call <= spec.target) out.bindings.push_back(b);
  }
  return out;
}

TestCase slice_solo(const TestPool& pool, const SliceSpec& spec) {
  const auto& entry = pool.entry(spec.entry);
  if (spec.target >= entry.test.calls.size()) throw std::out_of_range("slice target out of range");
  TestCase out;
  out.provenance = entry.test.provenance;
  HttpAction call = entry.executed[spec.target].action;
  call.expected_status = StatusExpectation::exact(entry.executed[spec.target].status);
  out.calls.push_back(std::move(call));
  return out;
}

TestCase concat_and_bind(const TestCase& head, const TestCase& tail, bool bind_resource) {
  if (head.calls.empty() || tail.calls.empty()) {
    throw CompositionError("cannot compose an empty test case");
  }
  TestCase out = head;
  const std::size_t offset = head.calls.size();
  const std::size_t head_target = offset - 1;
  for (const auto& c : tail.calls) out.calls.push_back(c);
  for (auto b : tail.bindings) {
    b.source_call += offset;
    b.target_call += offset;
    out.bindings.push_back(b);
  }
  if (!bind_resource) return out;

  const auto& target = head.calls.back();
  auto head_names = placeholders(target.endpoint.path);
  for (std::size_t j = offset; j < out.calls.size(); ++j) {
    auto& call = out.calls[j];
    for (const auto& name : placeholders(call.endpoint.path)) {
      if (std::find(head_names.begin(), head_names.end(), name) == head_names.end()) {
        throw CompositionError("placeholder '" + name + "' of " + call.endpoint.str() +
                               " does not exist on " + target.endpoint.str());
      }
      std::erase_if(out.bindings, [&](const Binding& b) {
        return b.target_call == j && b.slot.kind == SlotKind::PathArg && b.slot.name == name;
      });
      const Binding* inbound = nullptr;
      for (const auto& b : head.bindings) {
        if (b.target_call == head_target && b.slot.kind == SlotKind::PathArg &&
            b.slot.name == name) {
          inbound = &b;
        }
      }
      if (inbound) {
        Binding copy = *inbound;
        copy.target_call = j;
        out.bindings.push_back(copy);
        call.path_args.erase(name);
      } else if (auto it = target.path_args.find(name); it != target.path_args.end()) {
        call.path_args[name] = it->second;
      } else {
        throw CompositionError("placeholder '" + name + "' has no value on " +
                               target.endpoint.str());
      }
    }
  }
  return out;
}

FreshIds::FreshIds(std::uint64_t seed) : rng_(seed ^ 0x9E3779B97F4A7C15ULL) {}

void FreshIds::reserve_pool(const TestPool& pool) {
  for (const auto& entry : pool.entries()) {
    for (const auto& call : entry.executed) {
      for (const auto& [k, v] : call.action.path_args) used_.insert(v);
    }
  }
}

std::string FreshIds::next_like(const std::string& previous) {
  long long n = 0;
  auto [p, ec] = std::from_chars(previous.data(), previous.data() + previous.size(), n);
  bool integer = ec == std::errc{} && p == previous.data() + previous.size();
  std::uniform_int_distribution<long long> dist(1, 999'999'999);
  for (int attempt = 0;; ++attempt) {
    std::string candidate = integer || previous.empty()
                                ? std::to_string(dist(rng_))
                                : previous + "-" + std::to_string(dist(rng_));
    if (attempt > 1000) candidate += "-" + std::to_string(attempt);
    if (used_.insert(candidate).second) return candidate;
  }
}

void freshen(TestCase& test, FreshIds& ids) {
  for (std::size_t i = 0; i < test.calls.size(); ++i) {
    auto& call = test.calls[i];
    if (call.endpoint.verb != HttpVerb::Put) continue;
    if (!call.expected_status || call.expected_status->is_class() ||
        call.expected_status->value() != 201) {
      continue;
    }
    auto names = placeholders(call.endpoint.path);
    if (names.empty()) continue;
    auto it = call.path_args.find(names.back());
    if (it == call.path_args.end()) continue;
    const std::string old_value = it->second;
    const std::string new_value = ids.next_like(old_value);
    for (std::size_t j = i; j < test.calls.size(); ++j) {
      for (auto& [name, value] : test.calls[j].path_args) {
        if (value == old_value) value = new_value;
      }
    }
  }
}

std::string dump_corpus(const Corpus& corpus) {
  json entries = json::array();
  for (const auto& e : corpus.pool.entries()) {
    json executed = json::array();
    for (const auto& c : e.executed) executed.push_back(to_json(c));
    entries.push_back(json{{"test", to_json(e.test)}, {"executed", executed}});
  }
  json doc{{"formatVersion", 1},
           {"targetBaseUrl", corpus.target_base_url},
           {"schemaSource", corpus.schema_source},
           {"seed", corpus.seed},
           {"entries", entries}};
  return doc.dump(2) + "\n";
}

Corpus parse_corpus(std::string_view text) {
  json doc = parse_json_document(text, "corpus");
  if (!doc.is_object()) throw ParseError("corpus must be a JSON object", "$");
  if (doc.value("formatVersion", 0) != 1) throw ParseError("unsupported corpus formatVersion", "$");
  Corpus c;
  c.target_base_url = doc.value("targetBaseUrl", "");
  c.schema_source = doc.value("schemaSource", "");
  c.seed = doc.value("seed", std::uint64_t{0});
  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw ParseError("corpus needs an `entries` array", "$");
  }
  const auto& entries = doc["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto where = "entries[" + std::to_string(i) + "]";
    if (!entries[i].contains("test") || !entries[i].contains("executed")) {
      throw ParseError("entry needs `test` and `executed`", where);
    }
    auto test = test_from_json(entries[i]["test"], where + ".test");
    std::vector<ExecutedCall> executed;
    const auto& ex = entries[i]["executed"];
    if (!ex.is_array() || ex.size() != test.calls.size()) {
      throw ParseError("`executed` must align with the test calls", where);
    }
    for (std::size_t k = 0; k < ex.size(); ++k) {
      executed.push_back(executed_from_json(ex[k], where + ".executed[" + std::to_string(k) + "]"));
    }
    c.pool.add(std::move(test), std::move(executed));
  }
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write corpus " + path);
  out << dump_corpus(corpus);
  if (!out) throw ConfigError("failed writing corpus " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read corpus " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

}  // namespace restsec
