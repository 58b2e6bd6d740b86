#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "restsec/errors.hpp"
#include "restsec/executor.hpp"
#include "restsec/fixtures.hpp"
#include "test_support.hpp"

using namespace restsec;
using restsec::support::make_action;

namespace {

TestCase calls(std::vector<HttpAction> actions, std::vector<Binding> bindings = {}) {
  TestCase t;
  t.calls = std::move(actions);
  t.bindings = std::move(bindings);
  return t;
}

std::vector<ExecutedCall> observed(const std::vector<int>& statuses) {
  std::vector<ExecutedCall> out;
  for (int s : statuses) out.push_back(restsec::support::make_executed(HttpAction{}, s));
  return out;
}

HttpAction expecting(HttpAction a, StatusExpectation e) {
  a.expected_status = e;
  return a;
}

}  // namespace

TEST(Executor, ForeignResourceIsForbidden) {
  FixtureServer server("f204");
  server.start();
  HttpExecutor exec(server.base_url());
  CredentialStore store(load_auth_config(server.fixture().auth));
  auto put = make_action(HttpVerb::Put, "/api/resources/{id}", "BAR", {{"id", "12"}});
  auto get = make_action(HttpVerb::Get, "/api/resources/{id}", "FOO", {{"id", "12"}});
  auto run = exec.run_test_case(calls({put, get}), store);
  ASSERT_EQ(run.calls.size(), 2u);
  EXPECT_EQ(run.calls[0].status, 201);
  EXPECT_EQ(run.calls[1].status, 403);
  EXPECT_EQ(run.calls[1].action.rendered_path(), "/api/resources/12");
}

TEST(Executor, UnreachableHostIsTransportError) {
  int port;
  {
    FixtureServer gone("correct");
    gone.start();
    port = gone.port();
  }
  ExecutorOptions options;
  options.timeout_ms = 2000.0;
  HttpExecutor exec("http://127.0.0.1:" + std::to_string(port), options);
  auto a = make_action(HttpVerb::Get, "/api/search");
  EXPECT_THROW(exec.execute(a, ResolvedCredential{}), TransportError);
}

TEST(Executor, SlowResponseDurationIsMeasured) {
  FixtureServer server("f200", FixtureOptions{5.0, true});
  server.start();
  HttpExecutor exec(server.base_url());
  auto a = make_action(HttpVerb::Post, "/api/sqli/body/vulnerable");
  a.body = RequestBody{"application/json", R"({"username":"' OR SLEEP(5.00)-- -","password":"x"})"};
  auto call = exec.execute(a, ResolvedCredential{});
  EXPECT_EQ(call.status, 200);
  EXPECT_GT(call.duration_ms, 5000.0);
  EXPECT_FALSE(call.timed_out);
}

TEST(Executor, TimeoutIsReportedOnTheCall) {
  support::MockApi api;
  api.server().Get("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.status = 200;
  });
  api.start();
  ExecutorOptions opts;
  opts.timeout_ms = 150;
  HttpExecutor exec(api.url(), opts);
  auto call = exec.execute(make_action(HttpVerb::Get, "/slow"), ResolvedCredential{});
  EXPECT_TRUE(call.timed_out);
}

TEST(Executor, LocationBindingFeedsNextCall) {
  support::MockApi api;
  std::string seen;
  api.server().Post("/items", [](const httplib::Request&, httplib::Response& res) {
    res.status = 201;
    res.set_header("Location", "/items/42");
  });
  api.server().Get(R"(/items/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.path;
    res.status = 200;
  });
  api.start();
  HttpExecutor exec(api.url());
  CredentialStore store({AuthIdentity::anonymous()});
  auto t = calls({make_action(HttpVerb::Post, "/items"), make_action(HttpVerb::Get, "/items/{id}")},
                 {Binding{0, {ExtractorKind::LocationHeader, {}}, 1, {SlotKind::PathArg, "id"}}});
  ASSERT_EQ(validate(t), "");
  auto run = exec.run_test_case(t, store);
  EXPECT_FALSE(run.unbindable);
  ASSERT_EQ(run.calls.size(), 2u);
  EXPECT_EQ(run.calls[0].status, 201);
  EXPECT_EQ(run.calls[1].status, 200);
  EXPECT_EQ(seen, "/items/42");
  EXPECT_EQ(run.calls[1].action.path_args.at("id"), "42");
}

TEST(Executor, SingleCallTest) {
  FixtureServer server("f902");
  server.start();
  HttpExecutor exec(server.base_url());
  CredentialStore store(load_auth_config(server.fixture().auth));
  auto run =
      exec.run_test_case(calls({make_action(HttpVerb::Get, "/api/resources", "FOO")}), store);
  ASSERT_EQ(run.calls.size(), 1u);
  EXPECT_EQ(run.calls[0].status, 200);
  EXPECT_EQ(exec.tests_executed(), 1u);
}

TEST(Executor, AbsentBodyFieldIsUnbindable) {
  support::MockApi api;
  api.server().Post("/items", [](const httplib::Request&, httplib::Response& res) {
    res.status = 201;
    res.set_content(R"({"name":"x"})", "application/json");
  });
  api.start();
  HttpExecutor exec(api.url());
  CredentialStore store({AuthIdentity::anonymous()});
  auto t = calls({make_action(HttpVerb::Post, "/items"), make_action(HttpVerb::Get, "/items/{id}")},
                 {Binding{0, {ExtractorKind::BodyField, "id"}, 1, {SlotKind::PathArg, "id"}}});
  auto run = exec.run_test_case(t, store);
  EXPECT_TRUE(run.unbindable);
  EXPECT_EQ(run.calls.size(), 1u);
  t.calls[1].expected_status = StatusExpectation::exact(200);
  EXPECT_FALSE(verify_statuses(t, run.calls));
}

TEST(VerifyStatuses, SequenceMatches) {
  auto t = calls({expecting(make_action(HttpVerb::Post, "/d"), StatusExpectation::exact(201)),
                  expecting(make_action(HttpVerb::Get, "/d/{id}", "B", {{"id", "1"}}),
                            StatusExpectation::exact(403)),
                  expecting(make_action(HttpVerb::Get, "/d/{id}", "A", {{"id", "2"}}),
                            StatusExpectation::exact(404))});
  EXPECT_TRUE(verify_statuses(t, observed({201, 403, 404})));
}

TEST(VerifyStatuses, ClassMatches) {
  auto t = calls({expecting(make_action(HttpVerb::Put, "/d"), StatusExpectation::of_class(2))});
  EXPECT_TRUE(verify_statuses(t, observed({204})));
}

TEST(VerifyStatuses, MismatchFails) {
  auto t = calls({expecting(make_action(HttpVerb::Post, "/d"), StatusExpectation::exact(201)),
                  expecting(make_action(HttpVerb::Get, "/d"), StatusExpectation::exact(403))});
  EXPECT_FALSE(verify_statuses(t, observed({201, 200})));
  EXPECT_FALSE(verify_statuses(t, observed({201}))) << "missing calls count as mismatches";
}

TEST(TestCase, ExtractAndRender) {
  auto c = restsec::support::make_executed(HttpAction{}, 201, 1.0,
                                           {{"Location", "http://h:1/items/42?x=1"}},
                                           R"({"data":{"id":7}})");
  EXPECT_EQ(extract({ExtractorKind::LocationHeader, {}}, c), "42");
  EXPECT_EQ(extract({ExtractorKind::BodyField, "data.id"}, c), "7");
  EXPECT_FALSE(extract({ExtractorKind::BodyField, "nope"}, c).has_value());

  auto a = make_action(HttpVerb::Get, "/s/{q}", kAnonymous, {{"q", "a b/c"}});
  a.query = {{"k", "<x>"}};
  EXPECT_EQ(a.rendered_path(), "/s/a%20b%2Fc");
  EXPECT_EQ(a.rendered_query(), "?k=%3Cx%3E");

  TestCase bad = calls({make_action(HttpVerb::Get, "/s/{q}")});
  EXPECT_NE(validate(bad), "");
}

TEST(Executor, ParseUrl) {
  auto u = parse_url("http://localhost:8080/api/");
  EXPECT_EQ(u.host, "localhost");
  EXPECT_EQ(u.port, 8080);
  EXPECT_EQ(u.path, "/api");
  EXPECT_THROW(parse_url("ftp://x"), ConfigError);
}
