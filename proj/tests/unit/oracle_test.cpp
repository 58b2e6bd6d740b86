#include <gtest/gtest.h>

#include <chrono>
#include <mutex>
#include <thread>

#include "restsec/fixtures.hpp"
#include "restsec/oracles.hpp"
#include "restsec/payloads.hpp"
#include "test_support.hpp"

using namespace restsec;
using restsec::support::add_entry;
using restsec::support::make_action;
using restsec::support::make_executed;
using restsec::support::user_of;

namespace {

/// OpenAPI document declaring `endpoints` ("PUT /r/{id}") with integer path
/// ids and a small JSON body on writes.
SchemaModel schema_for(const std::vector<std::string>& endpoints) {
  json paths = json::object();
  for (const auto& text : endpoints) {
    auto ep = *parse_endpoint(text);
    json op{{"responses", json::object()}};
    for (const char* code : {"200", "201", "204", "401", "403", "404"}) {
      op["responses"][code] = json{{"description", code}};
    }
    json params = json::array();
    for (const auto& name : placeholders(ep.path)) {
      params.push_back(json{{"name", name},
                            {"in", "path"},
                            {"required", true},
                            {"schema", {{"type", "integer"}, {"minimum", 1}}}});
    }
    if (!params.empty()) op["parameters"] = params;
    if (ep.verb == HttpVerb::Post || ep.verb == HttpVerb::Put || ep.verb == HttpVerb::Patch) {
      op["requestBody"] = json{
          {"content",
           {{"application/json",
             {{"schema",
               {{"type", "object"}, {"properties", {{"value", {{"type", "integer"}}}}}}}}}}}};
    }
    std::string verb(to_string(ep.verb));
    for (auto& ch : verb) ch = static_cast<char>(std::tolower(ch));
    paths[ep.path][verb] = op;
  }
  json doc{{"openapi", "3.0.3"}, {"info", {{"title", "t"}, {"version", "1"}}}, {"paths", paths}};
  return load_schema(doc.dump());
}

struct Owners {
  std::mutex mutex;
  std::map<std::string, std::string> owner;
  int next = 1000;
};

/// Mock target plus everything a SecurityPhase needs.
struct Harness {
  support::MockApi api;
  Owners state;
  std::optional<SchemaModel> schema;
  std::unique_ptr<CredentialStore> store;
  std::unique_ptr<HttpExecutor> exec;
  std::unique_ptr<SecurityPhase> phase;

  void start(const SchemaModel& model, SecurityConfig cfg = {},
             const std::string& auth = support::kFooBarAuth) {
    api.start();
    schema = model;
    store = std::make_unique<CredentialStore>(load_auth_config(auth));
    exec = std::make_unique<HttpExecutor>(api.url());
    phase = std::make_unique<SecurityPhase>(*schema, *store, *exec, std::move(cfg));
  }

  /// PUT creates (201) or updates (204); foreign updates 403 unless `anyone`.
  void owned_put(const std::string& pattern, bool anyone = false) {
    api.server().Put(pattern, [this, anyone](const httplib::Request& req, httplib::Response& res) {
      auto user = user_of(req);
      if (user.empty()) return void(res.status = 401);
      std::lock_guard lock(state.mutex);
      auto id = req.matches[1].str();
      auto it = state.owner.find(id);
      if (it == state.owner.end()) {
        state.owner[id] = user;
        res.status = 201;
      } else {
        res.status = it->second == user || anyone ? 204 : 403;
      }
    });
  }

  /// Owner-only access; `missing` for unknown ids.
  httplib::Server::Handler owned(int ok, int missing) {
    return [this, ok, missing](const httplib::Request& req, httplib::Response& res) {
      auto user = user_of(req);
      if (user.empty()) return void(res.status = 401);
      std::lock_guard lock(state.mutex);
      auto it = state.owner.find(req.matches[1].str());
      if (it == state.owner.end()) return void(res.status = missing);
      res.status = it->second == user ? ok : 403;
      res.set_content(R"({"ok":true})", "application/json");
    };
  }
};

std::vector<int> codes(const std::vector<Fault>& faults) {
  std::vector<int> out;
  for (const auto& f : faults) out.push_back(f.code);
  return out;
}

const char* kRes = R"(/r/(\w+))";

}  // namespace

// ---- 403 synthesis ----

TEST(Synthesis, AddsDeniedScenarioForOtherUser) {
  Harness h;
  h.api.server().Post("/data", [&h](const httplib::Request& req, httplib::Response& res) {
    auto user = user_of(req);
    if (user.empty()) return void(res.status = 401);
    std::lock_guard lock(h.state.mutex);
    auto id = std::to_string(h.state.next++);
    h.state.owner[id] = user;
    res.status = 201;
    res.set_header("Location", "/data/" + id);
  });
  h.api.server().Get(R"(/data/(\w+))", h.owned(200, 404));
  h.start(schema_for({"POST /data", "GET /data/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Post, "/data", "FOO"),
             make_action(HttpVerb::Get, "/data/{id}", "FOO")},
            {201, 200},
            {Binding{0, {ExtractorKind::LocationHeader, {}}, 1, {SlotKind::PathArg, "id"}}});
  add_entry(pool, {make_action(HttpVerb::Get, "/data/{id}", kAnonymous, {{"id", "42"}})}, {401});
  h.phase->synthesize_403(pool);
  ASSERT_EQ(pool.size(), 3u);
  const auto& added = pool.entry(2);
  EXPECT_EQ(added.test.provenance.oracle_code, kSynthesisStep);
  ASSERT_EQ(added.executed.size(), 3u);
  EXPECT_EQ(added.executed.back().action.identity, "BAR");
  EXPECT_EQ(added.executed.back().status, 403);
  EXPECT_EQ(added.executed.back().action.path_args, added.executed[1].action.path_args);
}

TEST(Synthesis, SkipsEndpointsWithout401) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Get(kRes, h.owned(200, 404));
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 200});
  h.phase->synthesize_403(pool);
  EXPECT_EQ(pool.size(), 1u);
  EXPECT_EQ(h.phase->new_tests(), 0u);
}

TEST(Synthesis, SharedAccessAddsNothing) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Get(kRes, [](const httplib::Request& req, httplib::Response& res) {
    res.status = user_of(req).empty() ? 401 : 200;
  });
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 200});
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", kAnonymous, {{"id", "1"}})}, {401});
  h.phase->synthesize_403(pool);
  EXPECT_EQ(pool.size(), 2u);
  EXPECT_GT(h.phase->new_tests(), 0u);
}

// ---- F205 ----

namespace {

void f205_server(Harness& h, bool foo_broken_everywhere) {
  h.api.server().Put(kRes, [&h, foo_broken_everywhere](const httplib::Request& req,
                                                       httplib::Response& res) {
    auto user = user_of(req);
    if (user.empty() || (foo_broken_everywhere && user == "FOO")) return void(res.status = 401);
    std::lock_guard lock(h.state.mutex);
    auto id = req.matches[1].str();
    auto it = h.state.owner.find(id);
    if (it == h.state.owner.end()) {
      h.state.owner[id] = user;
      res.status = 201;
    } else {
      res.status = it->second == user ? 204 : 403;
    }
  });
  h.api.server().Post("/x", [](const httplib::Request& req, httplib::Response& res) {
    res.status = user_of(req) == "BAR" ? 201 : 401;
  });
}

}  // namespace

TEST(F205, RejectedUserWhoAuthenticatesElsewhere) {
  Harness h;
  f205_server(h, false);
  h.start(schema_for({"PUT /r/{id}", "POST /x"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "2"}})}, {201});
  add_entry(pool, {make_action(HttpVerb::Post, "/x", "FOO")}, {401});
  auto faults = h.phase->oracle_f205(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{205});
  const auto& f = faults[0];
  EXPECT_EQ(f.endpoint.str(), "POST /x");
  EXPECT_EQ(f.flagged_call_index, f.test.calls.size() - 1);
  EXPECT_EQ(f.observed.back().status, 401);
  EXPECT_TRUE(verify_statuses(f.test, f.observed));
  EXPECT_EQ(f.test.provenance.oracle_code, 205);
}

TEST(F205, GloballyBrokenCredentialsAreNotFlagged) {
  Harness h;
  f205_server(h, true);
  h.start(schema_for({"PUT /r/{id}", "POST /x"}));
  TestPool pool;
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}})}, {201});
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "2"}})}, {401});
  add_entry(pool, {make_action(HttpVerb::Post, "/x", "FOO")}, {401});
  EXPECT_TRUE(h.phase->oracle_f205(pool).empty());
}

TEST(F205, OpenEndpointIsNoEvidence) {
  Harness h;
  f205_server(h, false);
  h.start(schema_for({"PUT /r/{id}", "POST /x"}));
  TestPool pool;
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "2"}})}, {201});
  add_entry(pool, {make_action(HttpVerb::Post, "/x", "FOO")}, {401});
  EXPECT_TRUE(h.phase->oracle_f205(pool).empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);
}

// ---- F204 ----

TEST(F204, ForbiddenVersusMissing) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Get(kRes, h.owned(200, 404));
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", "BAR", {{"id", "339"}})}, {404});
  auto faults = h.phase->oracle_f204(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{204});
  const auto& f = faults[0];
  EXPECT_EQ(f.endpoint.str(), "GET /r/{id}");
  ASSERT_EQ(f.observed.size(), 3u);
  EXPECT_EQ(f.observed[0].status, 201);
  EXPECT_EQ(f.observed[1].status, 403);
  EXPECT_EQ(f.observed[2].status, 404);
  EXPECT_EQ(f.flagged_call_index, 2u);
}

TEST(F204, OnlyForbiddenIsNoFault) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Get(kRes, h.owned(200, 403));
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", "BAR", {{"id", "339"}})}, {403});
  EXPECT_TRUE(h.phase->oracle_f204(pool).empty());
}

TEST(F204, AncestorAnswering200IsInconclusive) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Get(kRes, h.owned(200, 404));
  h.api.server().Get("/r", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("[]", "application/json");
  });
  h.start(schema_for({"GET /r", "PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", "BAR", {{"id", "339"}})}, {404});
  EXPECT_TRUE(h.phase->oracle_f204(pool).empty());
  EXPECT_GT(h.phase->new_tests(), 0u);
}

TEST(F204, AncestorAnswering404Confirms) {
  Harness h;
  h.owned_put(R"(/p/\w+/r/(\w+))");
  h.api.server().Get(R"(/p/\w+/r/(\w+))", h.owned(200, 404));
  h.api.server().Get(R"(/p/(\w+))", [](const httplib::Request&, httplib::Response& res) {
    res.status = 404;
  });
  h.start(schema_for({"GET /p/{pid}", "PUT /p/{pid}/r/{id}", "GET /p/{pid}/r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/p/{pid}/r/{id}", "BAR", {{"pid", "1"}, {"id", "1"}}),
             make_action(HttpVerb::Get, "/p/{pid}/r/{id}", "FOO", {{"pid", "1"}, {"id", "1"}})},
            {201, 403});
  add_entry(pool,
            {make_action(HttpVerb::Get, "/p/{pid}/r/{id}", "BAR", {{"pid", "9"}, {"id", "9"}})},
            {404});
  auto faults = h.phase->oracle_f204(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{204});
  EXPECT_EQ(faults[0].test.calls.back().endpoint.str(), "GET /p/{pid}");
}

// ---- F206 ----

TEST(F206, DeniedDeleteButAllowedPut) {
  Harness h;
  h.owned_put(kRes, true);
  h.api.server().Delete(kRes, h.owned(204, 404));
  h.start(schema_for({"PUT /r/{id}", "DELETE /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Delete, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "66"}})}, {204});
  auto faults = h.phase->oracle_f206(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{206});
  const auto& f = faults[0];
  EXPECT_EQ(f.endpoint.str(), "PUT /r/{id}");
  ASSERT_EQ(f.observed.size(), 3u);
  EXPECT_EQ(f.observed[1].status, 403);
  EXPECT_EQ(f.observed[2].status, 204);
  EXPECT_EQ(f.observed[2].action.identity, "FOO");
  EXPECT_EQ(f.observed[2].action.path_args, f.observed[0].action.path_args);
}

TEST(F206, ConsistentDenialIsNoFault) {
  Harness h;
  h.owned_put(kRes);
  h.api.server().Delete(kRes, h.owned(204, 404));
  h.api.server().Patch(kRes, h.owned(204, 404));
  h.start(schema_for({"PUT /r/{id}", "DELETE /r/{id}", "PATCH /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Delete, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Patch, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403, 403, 403});
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "2"}}),
             make_action(HttpVerb::Patch, "/r/{id}", "BAR", {{"id", "2"}}),
             make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "2"}}),
             make_action(HttpVerb::Delete, "/r/{id}", "BAR", {{"id", "2"}})},
            {201, 204, 204, 204});
  EXPECT_TRUE(h.phase->oracle_f206(pool).empty());
}

TEST(F206, VanishedResourceIsDiscarded) {
  Harness h;
  // Nothing persists: every PUT creates, every DELETE finds nothing.
  h.api.server().Put(kRes, [](const httplib::Request& req, httplib::Response& res) {
    res.status = user_of(req).empty() ? 401 : 201;
  });
  h.api.server().Delete(kRes, [](const httplib::Request& req, httplib::Response& res) {
    res.status = user_of(req).empty() ? 401 : 404;
  });
  h.start(schema_for({"PUT /r/{id}", "DELETE /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Delete, "/r/{id}", "FOO", {{"id", "1"}})},
            {201, 403});
  add_entry(pool, {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "66"}})}, {204});
  EXPECT_TRUE(h.phase->oracle_f206(pool).empty());
  EXPECT_GT(h.phase->new_tests(), 0u);
}

// ---- F901 ----

TEST(F901, AnonymousModifications) {
  Harness h;
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool updated, created, read;
  add_entry(updated, {make_action(HttpVerb::Put, "/r/{id}", kAnonymous, {{"id", "1"}})}, {204});
  add_entry(created, {make_action(HttpVerb::Put, "/r/{id}", kAnonymous, {{"id", "1"}})}, {201});
  add_entry(read, {make_action(HttpVerb::Get, "/r/{id}", kAnonymous, {{"id", "1"}})}, {200});
  auto faults = h.phase->oracle_f901(updated);
  ASSERT_EQ(codes(faults), std::vector<int>{901});
  EXPECT_EQ(faults[0].endpoint.str(), "PUT /r/{id}");
  EXPECT_EQ(faults[0].observed.back().status, 204);
  EXPECT_TRUE(h.phase->oracle_f901(created).empty());
  EXPECT_TRUE(h.phase->oracle_f901(read).empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);
}

// ---- F900 ----

namespace {

void f900_server(Harness& h, bool anonymous_allowed) {
  h.owned_put(kRes);
  auto owned = h.owned(200, 404);
  h.api.server().Get(kRes, [&h, owned, anonymous_allowed](const httplib::Request& req,
                                                           httplib::Response& res) {
    if (!req.has_header("Authorization")) {
      if (!anonymous_allowed) return void(res.status = 401);
      std::lock_guard lock(h.state.mutex);
      res.status = h.state.owner.contains(req.matches[1].str()) ? 200 : 404;
      return;
    }
    owned(req, res);
  });
}

}  // namespace

TEST(F900, AnonymousSucceedsWhereUserIsDenied) {
  Harness h;
  f900_server(h, true);
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "BAR", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", kAnonymous, {{"id", "1"}})},
            {201, 200, 403, 200});
  auto faults = h.phase->oracle_f900(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{900});
  const auto& f = faults[0];
  EXPECT_EQ(f.endpoint.str(), "GET /r/{id}");
  EXPECT_EQ(f.observed[f.flagged_call_index].action.identity, kAnonymous);
  EXPECT_EQ(f.observed[f.flagged_call_index].status, 200);
}

TEST(F900, AnonymousRejectedIsNoFault) {
  Harness h;
  f900_server(h, false);
  h.start(schema_for({"PUT /r/{id}", "GET /r/{id}"}));
  TestPool pool;
  add_entry(pool,
            {make_action(HttpVerb::Put, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}}),
             make_action(HttpVerb::Get, "/r/{id}", "BAR", {{"id", "1"}})},
            {201, 200, 403});
  EXPECT_TRUE(h.phase->oracle_f900(pool).empty());
  EXPECT_GT(h.phase->new_tests(), 0u);
}

TEST(F900, OpenEndpointIsNoFault) {
  Harness h;
  h.start(schema_for({"GET /r/{id}"}));
  TestPool pool;
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", "FOO", {{"id", "1"}})}, {200});
  add_entry(pool, {make_action(HttpVerb::Get, "/r/{id}", kAnonymous, {{"id", "1"}})}, {200});
  EXPECT_TRUE(h.phase->oracle_f900(pool).empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);
}

// ---- F902 ----

namespace {

TestPool server_error_pool(const std::string& body) {
  TestPool pool;
  auto a = make_action(HttpVerb::Get, "/r", "FOO");
  TestCase t;
  t.calls = {a};
  pool.add(t, {make_executed(a, 500, 1.0, {}, body)});
  return pool;
}

}  // namespace

TEST(F902, JavaTraceIsFlagged) {
  Harness h;
  h.start(schema_for({"GET /r"}));
  auto faults = h.phase->oracle_f902(server_error_pool(
      "java.lang.NullPointerException\n\tat com.foo.Bar.baz(Bar.java:10)\n"
      "\tat com.foo.Main.main(Main.java:3)\n"));
  ASSERT_EQ(codes(faults), std::vector<int>{902});
  EXPECT_NE(faults[0].evidence.find("java"), std::string::npos);
}

TEST(F902, PlainErrorIsNotFlagged) {
  Harness h;
  h.start(schema_for({"GET /r"}));
  EXPECT_TRUE(h.phase->oracle_f902(server_error_pool("internal error")).empty());
}

TEST(F902, NestedJsonStackIsFlagged) {
  Harness h;
  h.start(schema_for({"GET /r"}));
  auto body = R"({"error":{"message":"boom","details":{"stack":[
    "Traceback (most recent call last):",
    "  File \"/app/server.py\", line 42, in handler",
    "ZeroDivisionError: division by zero"]}}})";
  EXPECT_EQ(codes(h.phase->oracle_f902(server_error_pool(body))), std::vector<int>{902});
}

TEST(StackTraces, ShippedPatternsRecognizeCommonLanguages) {
  auto d = StackTraceDetector::shipped();
  EXPECT_TRUE(d.find("Exception in thread \"main\" java.lang.IllegalStateException: x\n"
                     "\tat com.example.App.run(App.java:12)"));
  EXPECT_TRUE(d.find("Traceback (most recent call last):\n  File \"x.py\", line 1, in <module>"));
  EXPECT_TRUE(d.find("TypeError: x is undefined\n    at Object.<anonymous> (/app/index.js:3:9)"));
  EXPECT_TRUE(d.find("System.NullReferenceException: Object reference not set\n"
                     "   at App.Controllers.Home.Index() in C:\\src\\Home.cs:line 10"));
  EXPECT_TRUE(d.find("goroutine 1 [running]:\nmain.main()\n\t/app/main.go:12 +0x1d"));
  EXPECT_FALSE(d.find("{\"error\":\"not found\"}"));
  EXPECT_FALSE(d.find("Internal Server Error"));
}

// ---- F903 ----

namespace {

void f903_server(Harness& h, int hidden_status, const std::string& allow,
                 HttpVerb hidden = HttpVerb::Get) {
  auto& s = h.api.server();
  s.Options("/r", [allow](const httplib::Request&, httplib::Response& res) {
    res.set_header("Allow", allow);
  });
  s.Post("/r", [](const httplib::Request&, httplib::Response& res) { res.status = 201; });
  auto reply = [hidden_status](const httplib::Request&, httplib::Response& res) {
    res.status = hidden_status;
  };
  if (hidden == HttpVerb::Get) s.Get("/r", reply);
  if (hidden == HttpVerb::Put) s.Put("/r", reply);
}

}  // namespace

TEST(F903, HiddenGetIsAccessible) {
  Harness h;
  f903_server(h, 200, "HEAD,POST,GET,OPTIONS");
  h.start(schema_for({"POST /r"}));
  auto faults = h.phase->oracle_f903(TestPool{});
  ASSERT_EQ(codes(faults), std::vector<int>{903});
  EXPECT_EQ(faults[0].endpoint.str(), "GET /r");
  EXPECT_EQ(faults[0].flagged_call_index, 1u);
  EXPECT_EQ(faults[0].observed[0].action.endpoint.verb, HttpVerb::Options);
  EXPECT_EQ(faults[0].observed[1].status, 200);
}

TEST(F903, MethodNotAllowedIsCompliant) {
  Harness h;
  f903_server(h, 405, "HEAD,POST,GET,OPTIONS");
  h.start(schema_for({"POST /r"}));
  EXPECT_TRUE(h.phase->oracle_f903(TestPool{}).empty());
}

TEST(F903, UnsupportedMediaTypeIsStillFlagged) {
  Harness h;
  f903_server(h, 415, "POST, PUT, OPTIONS", HttpVerb::Put);
  h.start(schema_for({"POST /r"}));
  auto faults = h.phase->oracle_f903(TestPool{});
  ASSERT_EQ(codes(faults), std::vector<int>{903});
  EXPECT_EQ(faults[0].endpoint.str(), "PUT /r");
  EXPECT_EQ(faults[0].observed[1].status, 415);
}

// ---- F200 ----

namespace {

SecurityConfig fast_sqli() {
  SecurityConfig cfg;
  cfg.sqli_sleep_seconds = 1.0;
  cfg.sqli_baseline_max_ms = 500.0;
  return cfg;
}

TestPool login_pool(double duration_ms) {
  TestPool pool;
  auto a = make_action(HttpVerb::Post, "/api/sqli/body/vulnerable");
  a.body = RequestBody{"application/json", R"({"username":"alice","password":"pw"})"};
  TestCase t;
  t.calls = {a};
  pool.add(t, {make_executed(a, 200, duration_ms)});
  return pool;
}

}  // namespace

TEST(F200, SleepPayloadDelaysResponse) {
  FixtureServer server("f200", FixtureOptions{1.0, true});
  server.start();
  auto schema = load_schema(server.fixture().schema);
  CredentialStore store(load_auth_config(server.fixture().auth));
  HttpExecutor exec(server.base_url());
  SecurityPhase phase(schema, store, exec, fast_sqli());
  auto faults = phase.oracle_f200(login_pool(5.0));
  ASSERT_EQ(codes(faults), std::vector<int>{200});
  const auto& f = faults[0];
  ASSERT_EQ(f.observed.size(), 2u);
  EXPECT_LT(f.observed[0].duration_ms, 500.0);
  EXPECT_GT(f.observed[1].duration_ms, 1000.0);
  EXPECT_EQ(f.test.calls[0].max_duration_ms, 500.0);
  EXPECT_EQ(f.test.calls[1].min_duration_ms, 1000.0);
  EXPECT_NE(f.test.calls[1].body->payload.find("SLEEP(1.00)"), std::string::npos);
}

TEST(F200, ShortDelayIsNoFault) {
  Harness h;
  h.api.server().Post("/api/sqli/body/vulnerable",
                      [](const httplib::Request& req, httplib::Response& res) {
                        if (req.body.find("SLEEP") != std::string::npos ||
                            req.body.find("sleep") != std::string::npos) {
                          std::this_thread::sleep_for(std::chrono::milliseconds(300));
                        }
                        res.set_content(R"({"authenticated":false})", "application/json");
                      });
  auto cfg = fast_sqli();
  cfg.injection_tests_per_endpoint = 2;
  h.start(load_schema(find_fixture("f200").schema), cfg);
  EXPECT_TRUE(h.phase->oracle_f200(login_pool(5.0)).empty());
  EXPECT_EQ(h.phase->new_tests(), 2u);
}

TEST(F200, SlowBaselineExcludesEndpoint) {
  Harness h;
  h.start(load_schema(find_fixture("f200").schema), SecurityConfig{});
  EXPECT_TRUE(h.phase->oracle_f200(login_pool(2500.0)).empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);
}

TEST(Payloads, SqliRendering) {
  EXPECT_EQ(render_sqli_payload("' OR SLEEP({S})-- -", 5.0), "' OR SLEEP(5.00)-- -");
  EXPECT_EQ(render_sqli_payload("'; WAITFOR DELAY '0:0:{S_INT}'--", 2.5),
            "'; WAITFOR DELAY '0:0:3'--");
  auto all = default_sqli_templates();
  ASSERT_FALSE(all.empty());
  EXPECT_NE(std::find(all.begin(), all.end(), "' OR SLEEP({S})-- -"), all.end());
  EXPECT_LE(all.size(), 16u);
  auto xss = default_xss_payloads();
  EXPECT_NE(std::find(xss.begin(), xss.end(), "<img src=x onerror=alert('XSS')>"), xss.end());
  EXPECT_EQ(parse_payload_lines("a\r\n\nb\n"), (std::vector<std::string>{"a", "b"}));
}

// ---- F201 ----

TEST(F201, StoredPayloadIsReturnedVerbatim) {
  FixtureServer server("f201");
  server.start();
  auto schema = load_schema(server.fixture().schema);
  CredentialStore store(load_auth_config(server.fixture().auth));
  HttpExecutor exec(server.base_url());
  SecurityPhase phase(schema, store, exec, SecurityConfig{});
  TestPool pool;
  auto post = make_action(HttpVerb::Post, "/api/stored/json/guestbook");
  post.query = {{"name", "ann"}, {"entry", "hello"}};
  add_entry(pool, {post}, {201});
  auto faults = phase.oracle_f201(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{201});
  const auto& f = faults[0];
  EXPECT_EQ(f.endpoint.str(), "POST /api/stored/json/guestbook");
  EXPECT_EQ(f.observed.back().action.endpoint.verb, HttpVerb::Get);
  EXPECT_NE(f.observed.back().response_body.find("<img src=x onerror=alert('XSS')>"),
            std::string::npos);
}

TEST(F201, EscapedPayloadIsNoFault) {
  FixtureServer server("correct");
  server.start();
  auto schema = load_schema(server.fixture().schema);
  CredentialStore store(load_auth_config(server.fixture().auth));
  HttpExecutor exec(server.base_url());
  SecurityConfig cfg;
  cfg.injection_tests_per_endpoint = 4;
  SecurityPhase phase(schema, store, exec, cfg);
  TestPool pool;
  auto post = make_action(HttpVerb::Post, "/api/messages", "FOO");
  post.body = RequestBody{"application/json", R"({"text":"hi"})"};
  add_entry(pool, {post}, {201});
  auto search = make_action(HttpVerb::Get, "/api/search", "FOO");
  search.query = {{"q", "x"}};
  add_entry(pool, {search}, {200});
  EXPECT_TRUE(phase.oracle_f201(pool).empty());
  EXPECT_GT(phase.new_tests(), 0u);
}

TEST(F201, MaxLengthBlocksSubstitution) {
  Harness h;
  h.api.server().Get("/echo", [](const httplib::Request& req, httplib::Response& res) {
    res.set_content(req.get_param_value("q"), "text/html");
  });
  h.start(load_schema(R"(openapi: 3.0.0
info: {title: t, version: "1"}
paths:
  /echo:
    get:
      parameters:
        - {name: q, in: query, schema: {type: string, maxLength: 5}}
      responses: {"200": {description: ok}}
)"));
  TestPool pool;
  auto get = make_action(HttpVerb::Get, "/echo");
  get.query = {{"q", "ab"}};
  add_entry(pool, {get}, {200});
  EXPECT_TRUE(h.phase->oracle_f201(pool).empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);

  const auto& spec = h.schema->at({HttpVerb::Get, "/echo"});
  auto action = get;
  EXPECT_EQ(rewrite_string_inputs(spec, action, [](const std::string&) { return "<script>"; }), 0u);
  EXPECT_EQ(action.query.at("q"), "ab");
  EXPECT_EQ(rewrite_string_inputs(spec, action, [](const std::string&) { return "<b>"; }), 1u);
  EXPECT_EQ(action.query.at("q"), "<b>");
}

TEST(RewriteInputs, AppendedSuffixShortensValueToFitMaxLength) {
  auto schema = load_schema(R"(openapi: 3.0.0
info: {title: t, version: "1"}
paths:
  /q:
    get:
      parameters:
        - {name: q, in: query, schema: {type: string, maxLength: 6}}
      responses: {"200": {description: ok}}
)");
  const auto& spec = schema.at({HttpVerb::Get, "/q"});
  auto action = make_action(HttpVerb::Get, "/q");
  action.query = {{"q", "abcdef"}};
  EXPECT_EQ(rewrite_string_inputs(spec, action, [](const std::string& s) { return s + "'--"; }),
            1u);
  EXPECT_EQ(action.query.at("q"), "abc'--");
  action.query = {{"q", "ab"}};
  EXPECT_EQ(
      rewrite_string_inputs(spec, action, [](const std::string& s) { return s + "' OR 1=1"; }), 0u);
  EXPECT_EQ(action.query.at("q"), "ab");
}

TEST(F201, ReflectedPayloadIsFlagged) {
  Harness h;
  h.api.server().Get("/echo", [](const httplib::Request& req, httplib::Response& res) {
    res.set_content("<p>" + req.get_param_value("q") + "</p>", "text/html");
  });
  h.start(load_schema(R"(openapi: 3.0.0
info: {title: t, version: "1"}
paths:
  /echo:
    get:
      parameters:
        - {name: q, in: query, schema: {type: string}}
      responses: {"200": {description: ok}}
)"));
  TestPool pool;
  auto get = make_action(HttpVerb::Get, "/echo");
  get.query = {{"q", "ab"}};
  add_entry(pool, {get}, {200});
  auto faults = h.phase->oracle_f201(pool);
  ASSERT_EQ(codes(faults), std::vector<int>{201});
  const auto& f = faults[0];
  EXPECT_EQ(f.flagged_call_index, f.test.calls.size() - 1);
  EXPECT_NE(f.observed.back().response_body.find("<img src=x"), std::string::npos);
}

TEST(RewriteInputs, FormBodyFieldsAreRewritten) {
  auto schema = load_schema(R"(openapi: 3.0.0
info: {title: t, version: "1"}
paths:
  /login:
    post:
      requestBody:
        content:
          application/x-www-form-urlencoded:
            schema:
              type: object
              properties:
                user: {type: string}
                age: {type: integer}
      responses: {"200": {description: ok}}
)");
  auto a = make_action(HttpVerb::Post, "/login");
  a.body = RequestBody{"application/x-www-form-urlencoded", "user=bob&age=3"};
  auto n = rewrite_string_inputs(schema.at({HttpVerb::Post, "/login"}), a,
                                 [](const std::string& s) { return s + "' OR 1=1"; });
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(a.body->payload, "user=bob%27%20OR%201%3D1&age=3");
}

// ---- whole phase ----

TEST(SecurityPhase, AllOraclesDisabled) {
  Harness h;
  SecurityConfig cfg;
  cfg.enabled.clear();
  h.start(schema_for({"POST /r"}), cfg);
  TestPool pool;
  add_entry(pool, {make_action(HttpVerb::Post, "/r", kAnonymous)}, {201});
  auto result = h.phase->run(pool);
  EXPECT_TRUE(result.faults.empty());
  EXPECT_EQ(h.phase->new_tests(), 0u);
  ASSERT_EQ(result.stats.per_oracle.size(), 1u);
  EXPECT_EQ(result.stats.per_oracle[0].code, kSynthesisStep);
  EXPECT_LT(result.stats.total_elapsed_ms, 100.0);
}

TEST(SecurityPhase, ZeroBudgetRunsNothing) {
  Harness h;
  SecurityConfig cfg;
  cfg.phase_budget_ms = 0.0;
  h.start(schema_for({"POST /r"}), cfg);
  TestPool pool;
  add_entry(pool, {make_action(HttpVerb::Put, "/r", kAnonymous)}, {204});
  auto result = h.phase->run(pool);
  EXPECT_TRUE(result.faults.empty());
  EXPECT_TRUE(result.stats.per_oracle.empty());
  EXPECT_TRUE(result.stats.truncated);
  ASSERT_FALSE(result.warnings.empty());
  EXPECT_NE(result.warnings[0].find("budget"), std::string::npos);
}

TEST(SecurityPhase, ConfigValidation) {
  SecurityConfig cfg;
  EXPECT_EQ(cfg.validate(10000.0), "");
  EXPECT_NE(cfg.validate(6000.0), "") << "timeout must exceed sleep plus baseline";
  cfg.sqli_sleep_seconds = 1.0;
  EXPECT_NE(cfg.validate(10000.0), "") << "sleep must exceed the baseline bound";
  SecurityConfig bad;
  bad.enabled.insert(777);
  EXPECT_NE(bad.validate(10000.0), "");
}

TEST(SecurityPhase, FaultLabels) {
  EXPECT_EQ(fault_label(206), "Missed Authorization Checks");
  EXPECT_EQ(fault_label(903), "Hidden Accessible");
  EXPECT_TRUE(fault_label(999).empty());
}
