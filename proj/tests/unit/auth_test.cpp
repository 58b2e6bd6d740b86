#include <gtest/gtest.h>

#include "restsec/auth.hpp"
#include "restsec/errors.hpp"
#include "restsec/executor.hpp"
#include "restsec/fixtures.hpp"
#include "test_support.hpp"

using namespace restsec;

namespace {

/// Records requests and answers with a canned response.
class FakeSink : public RequestSink {
 public:
  explicit FakeSink(RawResponse r) : response_(std::move(r)) {}
  RawResponse send(const RawRequest& request) override {
    requests.push_back(request);
    return response_;
  }
  std::vector<RawRequest> requests;

 private:
  RawResponse response_;
};

class CountingSink : public RequestSink {
 public:
  explicit CountingSink(RequestSink& inner) : inner_(inner) {}
  RawResponse send(const RawRequest& request) override {
    ++count;
    return inner_.send(request);
  }
  int count = 0;

 private:
  RequestSink& inner_;
};

}  // namespace

TEST(Auth, StaticUsersPlusAnonymous) {
  auto ids = load_auth_config(support::kFooBarAuth);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0].name, "FOO");
  EXPECT_EQ(ids[0].kind, AuthKind::StaticHeaders);
  EXPECT_EQ(ids[0].static_headers.at("authorization"), "FOO");
  EXPECT_EQ(ids[1].name, "BAR");
  EXPECT_TRUE(ids[2].is_anonymous());
}

TEST(Auth, EmptyUserListIsAnError) {
  try {
    load_auth_config("auth: []\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "at least one user required");
  }
}

TEST(Auth, RejectsDuplicatesAndReservedNames) {
  EXPECT_THROW(
      load_auth_config("auth:\n  - {name: A, headers: {X: 1}}\n  - {name: A, headers: {X: 2}}\n"),
      ConfigError);
  EXPECT_THROW(load_auth_config("auth:\n  - {name: anonymous, headers: {X: 1}}\n"), ConfigError);
  EXPECT_THROW(load_auth_config("auth:\n  - {name: A}\n"), ConfigError);
}

TEST(Auth, LoginFlowRecipe) {
  auto ids = load_auth_config(R"(auth:
  - name: Veileder
    login:
      endpoint: /azuread/token
      method: POST
      contentType: application/x-www-form-urlencoded
      payload: name=Veileder&grant_type=client_credentials
      token:
        extractFrom: body
        field: access_token
        headerTemplate: "Bearer {token}"
)");
  ASSERT_EQ(ids.size(), 2u);
  ASSERT_EQ(ids[0].kind, AuthKind::LoginFlow);
  const auto& r = *ids[0].login;
  EXPECT_EQ(r.endpoint, "/azuread/token");
  EXPECT_EQ(r.method, HttpVerb::Post);
  EXPECT_EQ(r.payload, "name=Veileder&grant_type=client_credentials");
  EXPECT_EQ(r.extract_from, TokenSource::Body);
  EXPECT_EQ(r.field, "access_token");
  EXPECT_EQ(r.header_template, "Bearer {token}");
  EXPECT_EQ(r.render("abc"), "Bearer abc");
}

TEST(Auth, RoundTripsThroughYaml) {
  auto ids = load_auth_config(find_fixture("login").auth);
  auto again = load_auth_config(dump_auth_config(ids));
  EXPECT_EQ(ids, again);
}

TEST(Auth, ResolveAnonymousAndStatic) {
  FakeSink sink(RawResponse{500, {}, {}});
  auto anon = resolve(AuthIdentity::anonymous(), sink);
  EXPECT_TRUE(anon.headers.empty());
  auto ids = load_auth_config(support::kFooBarAuth);
  auto foo = resolve(ids[0], sink);
  ASSERT_EQ(foo.headers.size(), 1u);
  EXPECT_EQ(foo.headers.at("Authorization"), "FOO");
  EXPECT_TRUE(sink.requests.empty());
}

TEST(Auth, ResolveLoginFlowWithCannedResponse) {
  LoginRecipe recipe;
  recipe.endpoint = "/token";
  recipe.content_type = "application/x-www-form-urlencoded";
  recipe.payload = "u=1";
  recipe.field = "access_token";
  AuthIdentity id{"U", AuthKind::LoginFlow, {}, recipe};
  FakeSink sink(RawResponse{200, {}, R"({"access_token":"abc"})"});
  auto cred = resolve(id, sink);
  EXPECT_EQ(cred.headers.at("Authorization"), "Bearer abc");
  ASSERT_EQ(sink.requests.size(), 1u);
  EXPECT_EQ(sink.requests[0].method, HttpVerb::Post);
  EXPECT_EQ(sink.requests[0].body, "u=1");
  EXPECT_EQ(sink.requests[0].headers.at("Content-Type"), recipe.content_type);
}

TEST(Auth, LoginFailuresAreConfigErrors) {
  LoginRecipe recipe;
  recipe.endpoint = "/token";
  recipe.field = "access_token";
  AuthIdentity id{"U", AuthKind::LoginFlow, {}, recipe};
  FakeSink denied(RawResponse{401, {}, "{}"});
  EXPECT_THROW(resolve(id, denied), ConfigError);
  FakeSink missing(RawResponse{200, {}, R"({"token":"x"})"});
  EXPECT_THROW(resolve(id, missing), ConfigError);
}

TEST(Auth, TokenFromHeader) {
  LoginRecipe recipe;
  recipe.extract_from = TokenSource::Header;
  recipe.field = "X-Token";
  recipe.header_template = "Token {token}";
  RawResponse r{200, {{"x-token", "t1"}}, ""};
  EXPECT_EQ(extract_token(recipe, r), "t1");
}

TEST(Auth, LoginAgainstFixture) {
  FixtureServer server("login");
  server.start();
  HttpExecutor exec(server.base_url());
  CredentialStore store(load_auth_config(server.fixture().auth));
  CountingSink sink(exec);
  auto cred = store.resolve("FOO", sink);
  EXPECT_EQ(cred.headers.at("Authorization"), "Bearer tok-FOO");
  EXPECT_EQ(sink.count, 1);
  store.resolve("FOO", sink);
  EXPECT_EQ(sink.count, 1) << "token is cached";
  store.invalidate();
  store.resolve("FOO", sink);
  EXPECT_EQ(sink.count, 2);

  TestCase t;
  t.calls.push_back(support::make_action(HttpVerb::Get, "/api/me", "BAR"));
  auto run = exec.run_test_case(t, store);
  ASSERT_EQ(run.calls.size(), 1u);
  EXPECT_EQ(run.calls[0].status, 200);
  EXPECT_NE(run.calls[0].response_body.find("BAR"), std::string::npos);
}

TEST(Auth, CredentialStoreLookups) {
  CredentialStore store(load_auth_config(support::kFooBarAuth));
  EXPECT_EQ(store.authenticated_names(), (std::vector<std::string>{"FOO", "BAR"}));
  EXPECT_TRUE(store.has(kAnonymous));
  EXPECT_FALSE(store.has("BAZ"));
  EXPECT_THROW(store.identity("BAZ"), NotFoundError);
}
