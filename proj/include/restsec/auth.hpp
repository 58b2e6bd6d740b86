#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "restsec/test_case.hpp"
#include "restsec/types.hpp"

namespace restsec {

enum class AuthKind { Anonymous, StaticHeaders, LoginFlow };
enum class TokenSource { Body, Header };

/// How to obtain a token: one request whose response carries it.
struct LoginRecipe {
  std::string endpoint;  ///< absolute URL, or path relative to the target base URL
  HttpVerb method = HttpVerb::Post;
  std::string content_type;
  std::string payload;
  TokenSource extract_from = TokenSource::Body;
  std::string field;  ///< body field path or header name
  std::string header_template = "Bearer {token}";

  /// Substitutes the single `{token}` placeholder.
  std::string render(std::string_view token) const;
  bool operator==(const LoginRecipe&) const = default;
};

inline constexpr const char* kTokenPlaceholder = "{token}";
inline constexpr const char* kTokenHeader = "Authorization";

struct AuthIdentity {
  std::string name;
  AuthKind kind = AuthKind::Anonymous;
  Headers static_headers;
  std::optional<LoginRecipe> login;

  bool is_anonymous() const noexcept { return kind == AuthKind::Anonymous; }
  static AuthIdentity anonymous() { return AuthIdentity{kAnonymous, AuthKind::Anonymous, {}, {}}; }
  bool operator==(const AuthIdentity&) const = default;
};

/// Parses the `auth:` YAML document. The anonymous identity is appended.
/// Throws ConfigError (duplicate names, no users, bad recipe) or ParseError.
std::vector<AuthIdentity> load_auth_config(std::string_view yaml_document);
std::vector<AuthIdentity> load_auth_config_file(const std::string& path);

/// Serializes identities (anonymous omitted) back to the YAML format.
std::string dump_auth_config(const std::vector<AuthIdentity>& identities);

struct ResolvedCredential {
  std::string identity;
  Headers headers;
  std::chrono::system_clock::time_point obtained_at;
};

struct RawRequest {
  HttpVerb method = HttpVerb::Get;
  std::string url;  ///< absolute, or relative to the executor base URL
  Headers headers;
  std::string body;
};

struct RawResponse {
  int status = 0;
  Headers headers;
  std::string body;
};

/// Something that can send a single HTTP request (the executor).
class RequestSink {
 public:
  virtual ~RequestSink() = default;
  virtual RawResponse send(const RawRequest& request) = 0;
};

/// Builds the login request of a recipe.
RawRequest login_request(const LoginRecipe& recipe);
/// Pulls the token out of a login response. Throws ConfigError.
std::string extract_token(const LoginRecipe& recipe, const RawResponse& response);

/// Resolves an identity into request headers. Login flows execute the login
/// call through `sink`. Throws ConfigError when the login fails.
ResolvedCredential resolve(const AuthIdentity& identity, RequestSink& sink);

/// Identity list plus a token cache. The cache is guarded so resolution can
/// be requested from any thread; each identity resolves at most once per
/// invalidation.
class CredentialStore {
 public:
  explicit CredentialStore(std::vector<AuthIdentity> identities);

  const std::vector<AuthIdentity>& identities() const noexcept { return identities_; }
  const AuthIdentity& identity(std::string_view name) const;  // throws NotFoundError
  bool has(std::string_view name) const noexcept;
  /// Non-anonymous identities in declaration order.
  std::vector<std::string> authenticated_names() const;

  ResolvedCredential resolve(std::string_view name, RequestSink& sink);
  /// Drops cached tokens so the next resolve logs in again.
  void invalidate();

 private:
  std::vector<AuthIdentity> identities_;
  std::mutex mutex_;
  std::map<std::string, ResolvedCredential, std::less<>> cache_;
};

}  // namespace restsec
