#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include "restsec/auth.hpp"
#include "restsec/test_case.hpp"

namespace restsec {

struct ExecutorOptions {
  double timeout_ms = 10000.0;
  std::size_t body_cap = 1 << 20;
  /// Proxy URL; empty means read HTTP_PROXY from the environment.
  std::string proxy;
  bool use_env_proxy = true;
};

/// scheme, host, port and path prefix of an http URL.
struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path;  ///< without trailing slash; "" for the root

  std::string origin() const;
};

/// Throws ConfigError on anything that is not http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

/// Serialized HTTP client for one target. Every call goes through one lock,
/// so tests never interleave.
class HttpExecutor : public RequestSink {
 public:
  HttpExecutor(std::string base_url, ExecutorOptions options = {});
  ~HttpExecutor() override;
  HttpExecutor(const HttpExecutor&) = delete;
  HttpExecutor& operator=(const HttpExecutor&) = delete;

  const std::string& base_url() const noexcept { return base_url_; }
  const ExecutorOptions& options() const noexcept { return options_; }

  /// Sends one action decorated with `credential`. Timeouts are reported on
  /// the returned call; connection failures throw TransportError.
  ExecutedCall execute(const HttpAction& action, const ResolvedCredential& credential);

  /// Executes the calls in order, applying bindings from earlier responses.
  /// Identities resolve through `credentials`.
  TestRun run_test_case(const TestCase& test, CredentialStore& credentials);

  RawResponse send(const RawRequest& request) override;

  std::size_t calls_executed() const noexcept { return calls_executed_; }
  std::size_t tests_executed() const noexcept { return tests_executed_; }

 private:
  struct Impl;
  std::string base_url_;
  ExecutorOptions options_;
  std::unique_ptr<Impl> impl_;
  std::recursive_mutex mutex_;
  std::size_t calls_executed_ = 0;
  std::size_t tests_executed_ = 0;
};

}  // namespace restsec
