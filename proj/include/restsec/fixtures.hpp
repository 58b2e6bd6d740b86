#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace restsec {

/// Schema and auth config of a bundled mock API.
struct EmbeddedFixture {
  std::string_view name;
  std::string_view schema;
  std::string_view auth;
};

const std::vector<EmbeddedFixture>& embedded_fixtures();
/// Throws NotFoundError for unknown names.
const EmbeddedFixture& find_fixture(std::string_view name);

/// Fixtures carrying one seeded fault each, in oracle order.
std::vector<std::string> seeded_fixture_names();
/// Fault code seeded into the fixture; 0 for the fault-free ones.
int seeded_fault_code(std::string_view name);

struct FixtureOptions {
  /// Delay applied by the SQL injection fixture on a sleep payload.
  double sqli_sleep_seconds = 5.0;
  bool sqli_sleep_enabled = true;
};

/// In-process HTTP server for one fixture on 127.0.0.1. State lives in
/// memory and is dropped on stop, so a restart is a full reset.
class FixtureServer {
 public:
  /// Throws NotFoundError for unknown fixture names.
  explicit FixtureServer(std::string name, FixtureOptions options = {});
  ~FixtureServer();
  FixtureServer(const FixtureServer&) = delete;
  FixtureServer& operator=(const FixtureServer&) = delete;

  /// Binds `port` (0 picks an ephemeral one) and serves in a background
  /// thread. No-op when already running. Throws Error on bind failure.
  void start(int port = 0);
  /// Idempotent.
  void stop();
  bool running() const noexcept;

  int port() const noexcept;
  std::string base_url() const;
  const std::string& name() const noexcept { return name_; }
  const EmbeddedFixture& fixture() const;

  void set_sqli_sleep(bool enabled) noexcept { sleep_enabled_ = enabled; }
  bool sqli_sleep() const noexcept { return sleep_enabled_; }
  double sqli_sleep_seconds() const noexcept { return options_.sqli_sleep_seconds; }

 private:
  struct Impl;
  std::string name_;
  FixtureOptions options_;
  std::atomic<bool> sleep_enabled_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace restsec
