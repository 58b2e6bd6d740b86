#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "restsec/test_case.hpp"

namespace restsec {

/// Which identities a pool query accepts.
struct IdentityFilter {
  enum class Kind { Any, Anonymous, Authenticated, Named, NotNamed };
  Kind kind = Kind::Any;
  std::string name;

  static IdentityFilter any() { return {Kind::Any, {}}; }
  static IdentityFilter anonymous() { return {Kind::Anonymous, {}}; }
  static IdentityFilter authenticated() { return {Kind::Authenticated, {}}; }
  static IdentityFilter named(std::string n) { return {Kind::Named, std::move(n)}; }
  /// Any authenticated identity other than `n`.
  static IdentityFilter other_than(std::string n) { return {Kind::NotNamed, std::move(n)}; }

  bool matches(const std::string& identity) const;
};

struct PoolEntry {
  TestCase test;
  std::vector<ExecutedCall> executed;
};

/// A call inside a pool entry (the entry plus the index of the target call).
struct SliceSpec {
  std::size_t entry = 0;
  std::size_t target = 0;
  auto operator<=>(const SliceSpec&) const = default;
};

struct FindOptions {
  std::optional<double> duration_below_ms;
  std::function<bool(const PoolEntry&, std::size_t)> predicate;
};

class TestPool {
 public:
  /// Adds an entry; `executed` must align 1:1 with the test calls.
  /// Throws std::invalid_argument otherwise.
  std::size_t add(TestCase test, std::vector<ExecutedCall> executed);

  const std::vector<PoolEntry>& entries() const noexcept { return entries_; }
  const PoolEntry& entry(std::size_t i) const { return entries_.at(i); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const ExecutedCall& call(const SliceSpec& s) const {
    return entries_.at(s.entry).executed.at(s.target);
  }

  /// Deterministic choice: fewest calls in the whole test, then earliest
  /// insertion, then earliest call within the test.
  std::optional<SliceSpec> find(const EndpointId& endpoint, const StatusExpectation& status,
                                const IdentityFilter& identity,
                                const FindOptions& options = {}) const;
  /// All matches in the same preference order as `find`.
  std::vector<SliceSpec> find_all(const EndpointId& endpoint, const StatusExpectation& status,
                                  const IdentityFilter& identity,
                                  const FindOptions& options = {}) const;

  /// Endpoints with at least one executed call, sorted.
  std::vector<EndpointId> endpoints() const;
  /// Every call on `endpoint`, in insertion order.
  const std::vector<SliceSpec>& calls_on(const EndpointId& endpoint) const;

 private:
  std::vector<PoolEntry> entries_;
  std::map<EndpointId, std::vector<SliceSpec>> by_endpoint_;
};

/// First `target+1` calls, bindings inside the prefix kept, expectations set
/// to the observed statuses.
TestCase slice_prefix(const TestPool& pool, const SliceSpec& spec);
/// The target call alone, with inbound bindings replaced by the values that
/// were actually sent.
TestCase slice_solo(const TestPool& pool, const SliceSpec& spec);

/// head ⧺ tail. With `bind_resource`, every path placeholder of the tail
/// calls takes the value of the head's last call, reusing the head's binding
/// when that value was extracted dynamically. Throws CompositionError when a
/// tail placeholder does not exist on the head's last call.
TestCase concat_and_bind(const TestCase& head, const TestCase& tail, bool bind_resource);

/// Hands out identifiers that have not been used on the target yet.
class FreshIds {
 public:
  explicit FreshIds(std::uint64_t seed = 0);
  void reserve(const std::string& value) { used_.insert(value); }
  void reserve_pool(const TestPool& pool);
  /// Integer-looking inputs get an integer, anything else a suffixed string.
  std::string next_like(const std::string& previous);

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

/// Gives every resource-creating PUT (expected exact 201 on a templated path)
/// a new identifier and carries it through the later calls that used the
/// old one. Needed because re-executing a creation on the same id would no
/// longer return 201.
void freshen(TestCase& test, FreshIds& ids);

/// Corpus file: the pool plus the target it was recorded against.
struct Corpus {
  std::string target_base_url;
  std::string schema_source;
  std::uint64_t seed = 0;
  TestPool pool;
};

std::string dump_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);  // throws ParseError
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace restsec
