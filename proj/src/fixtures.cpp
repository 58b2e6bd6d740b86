#include "restsec/fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "restsec/errors.hpp"
#include "restsec/types.hpp"

namespace restsec {

const EmbeddedFixture& find_fixture(std::string_view name) {
  for (const auto& f : embedded_fixtures()) {
    if (f.name == name) return f;
  }
  throw NotFoundError("unknown fixture '" + std::string(name) + "'");
}

std::vector<std::string> seeded_fixture_names() {
  return {"f205", "f204", "f206", "f901", "f900", "f902", "f903", "f200", "f201"};
}

int seeded_fault_code(std::string_view name) {
  if (name.size() == 4 && name[0] == 'f' &&
      std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(c); })) {
    return std::stoi(std::string(name.substr(1)));
  }
  return 0;
}

namespace {

using nlohmann::json;

struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
};

Reply json_reply(int status, const json& body = json::object()) {
  return Reply{status, body.dump(), "application/json", {}};
}

Reply error_reply(int status, std::string_view message) {
  return json_reply(status, json{{"error", message}});
}

struct Resource {
  std::string owner;
  long long value = 0;
};

/// In-memory state of one running server.
struct State {
  std::mutex mutex;
  std::map<long long, Resource> resources;
  long long next_id = 2000000;
  std::vector<std::pair<std::string, std::string>> guestbook;
  std::vector<std::string> messages;
};

struct Call {
  const httplib::Request& req;
  std::map<std::string, std::string> params;
  /// Authenticated user, if the Authorization header names a known one.
  std::optional<std::string> user;
  bool has_authorization = false;

  long long id() const { return std::stoll(params.at("id")); }
};

using Handler = std::function<Reply(Call&)>;

struct Route {
  HttpVerb verb;
  std::string path;
  std::regex matcher;
  std::vector<std::string> names;
  Handler handler;
  /// Not part of the published schema (no Allow entry).
  bool hidden = false;
};

std::optional<std::string> user_of(const std::string& authorization) {
  static const std::map<std::string, std::string> kUsers = {
      {"FOO", "FOO"}, {"BAR", "BAR"}, {"Bearer tok-FOO", "FOO"}, {"Bearer tok-BAR", "BAR"}};
  auto it = kUsers.find(authorization);
  if (it == kUsers.end()) return std::nullopt;
  return it->second;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

bool has_sleep_signature(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (const char* sig : {"SLEEP(", "PG_SLEEP(", "WAITFOR DELAY", "BENCHMARK(", "RANDOMBLOB("}) {
    if (text.find(sig) != std::string::npos) return true;
  }
  return false;
}

void collect_strings(const json& node, std::vector<std::string>& out) {
  if (node.is_string()) {
    out.push_back(node.get<std::string>());
  } else if (node.is_structured()) {
    for (const auto& child : node) collect_strings(child, out);
  }
}

long long body_value(const httplib::Request& req) {
  if (req.body.empty()) return 0;
  auto doc = json::parse(req.body, nullptr, false);
  if (doc.is_object() && doc.contains("value") && doc["value"].is_number_integer()) {
    return doc["value"].get<long long>();
  }
  return 0;
}

constexpr const char* kJvmTrace =
    "java.lang.NullPointerException: Cannot invoke \"com.example.api.Resource.getOwner()\" "
    "because \"resource\" is null\n"
    "\tat com.example.api.ResourceService.describe(ResourceService.java:57)\n"
    "\tat com.example.api.ResourceController.nullPointer(ResourceController.java:112)\n"
    "\tat java.base/jdk.internal.reflect.DirectMethodHandleAccessor.invoke("
    "DirectMethodHandleAccessor.java:103)\n"
    "\tat org.springframework.web.servlet.FrameworkServlet.service(FrameworkServlet.java:883)\n";

/// Path-template router plus the state its handlers share.
struct Router {
  State state;
  std::vector<Route> routes;
  /// Allow header overrides per path template.
  std::map<std::string, std::string> allow_override;

  void add(HttpVerb verb, const std::string& path, Handler h, bool hidden = false) {
    std::string re;
    std::vector<std::string> names;
    std::size_t pos = 0;
    while (pos < path.size()) {
      auto open = path.find('{', pos);
      if (open == std::string::npos) {
        re += std::regex_replace(path.substr(pos), std::regex(R"([.^$|()\[\]*+?\\])"), R"(\$&)");
        break;
      }
      auto close = path.find('}', open);
      re += std::regex_replace(path.substr(pos, open - pos), std::regex(R"([.^$|()\[\]*+?\\])"),
                               R"(\$&)");
      re += "([^/]+)";
      names.push_back(path.substr(open + 1, close - open - 1));
      pos = close + 1;
    }
    routes.push_back(Route{verb, path, std::regex(re), std::move(names), std::move(h), hidden});
  }

  /// Declared verbs per matching template, most specific template first.
  std::vector<const Route*> matching(const std::string& path) const {
    std::vector<const Route*> out;
    for (const auto& r : routes) {
      if (std::regex_match(path, r.matcher)) out.push_back(&r);
    }
    std::stable_sort(out.begin(), out.end(), [](const Route* a, const Route* b) {
      return a->names.size() < b->names.size();
    });
    return out;
  }

  std::string allow_for(const std::string& tmpl) const {
    if (auto it = allow_override.find(tmpl); it != allow_override.end()) return it->second;
    std::string out;
    for (auto v : kAllVerbs) {
      bool declared = v == HttpVerb::Head || v == HttpVerb::Options;
      for (const auto& r : routes) declared |= !r.hidden && r.path == tmpl && r.verb == v;
      if (!declared) continue;
      if (!out.empty()) out += ", ";
      out += to_string(v);
    }
    return out;
  }

  Reply dispatch(const httplib::Request& req) {
    auto verb = parse_verb(req.method);
    if (!verb) return error_reply(405, "method not allowed");
    if (*verb == HttpVerb::Head) verb = HttpVerb::Get;
    auto matches = matching(req.path);
    if (matches.empty()) return error_reply(404, "not found");
    const std::string& tmpl = matches.front()->path;
    if (*verb == HttpVerb::Options) {
      Reply r{200, "", "text/plain", {{"Allow", allow_for(tmpl)}}};
      return r;
    }
    for (const Route* route : matches) {
      if (route->verb != *verb || route->path != tmpl) continue;
      Call call{req, {}, std::nullopt, false};
      std::smatch m;
      std::regex_match(req.path, m, route->matcher);
      for (std::size_t i = 0; i < route->names.size(); ++i) {
        call.params[route->names[i]] = m[i + 1].str();
      }
      call.has_authorization = req.has_header("Authorization");
      if (call.has_authorization) call.user = user_of(req.get_header_value("Authorization"));
      return route->handler(call);
    }
    Reply r = error_reply(405, "method not allowed");
    r.headers["Allow"] = allow_for(tmpl);
    return r;
  }
};

// Resource handlers shared by the fixtures. Every one rejects anonymous and
// unknown credentials with 401 unless stated otherwise.

Reply put_owned(Call& c, State& s, bool anyone_may_update) {
  if (!c.user) return error_reply(401, "unauthorized");
  long long id = c.id();
  std::lock_guard lock(s.mutex);
  auto it = s.resources.find(id);
  if (it == s.resources.end()) {
    s.resources[id] = Resource{*c.user, body_value(c.req)};
    return json_reply(201, json{{"id", id}});
  }
  if (it->second.owner != *c.user && !anyone_may_update) return error_reply(403, "forbidden");
  it->second.value = body_value(c.req);
  return Reply{204, "", "", {}};
}

Reply get_owned(Call& c, State& s, int missing_status) {
  if (!c.user) return error_reply(401, "unauthorized");
  long long id = c.id();
  std::lock_guard lock(s.mutex);
  auto it = s.resources.find(id);
  if (it == s.resources.end()) return error_reply(missing_status, "unavailable");
  if (it->second.owner != *c.user) return error_reply(403, "forbidden");
  return json_reply(200, json{{"id", id}, {"value", it->second.value}});
}

Reply delete_owned(Call& c, State& s, int missing_status) {
  if (!c.user) return error_reply(401, "unauthorized");
  long long id = c.id();
  std::lock_guard lock(s.mutex);
  auto it = s.resources.find(id);
  if (it == s.resources.end()) return error_reply(missing_status, "unavailable");
  if (it->second.owner != *c.user) return error_reply(403, "forbidden");
  s.resources.erase(it);
  return Reply{204, "", "", {}};
}

Reply create_in_collection(Call& c, State& s, const std::string& collection) {
  std::lock_guard lock(s.mutex);
  long long id = s.next_id++;
  s.resources[id] = Resource{*c.user, body_value(c.req)};
  Reply r = json_reply(201, json{{"id", id}});
  r.headers["Location"] = collection + std::to_string(id);
  return r;
}

void build_routes(const std::string& name, Router& impl, const FixtureServer& owner) {
  State& s = impl.state;
  using V = HttpVerb;
  if (name == "correct") {
    const std::string res = "/api/resources/{id}";
    impl.add(V::Put, res, [&s](Call& c) { return put_owned(c, s, false); });
    impl.add(V::Get, res, [&s](Call& c) { return get_owned(c, s, 403); });
    impl.add(V::Delete, res, [&s](Call& c) { return delete_owned(c, s, 403); });
    impl.add(V::Post, "/api/messages", [&s](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      auto doc = json::parse(c.req.body, nullptr, false);
      if (!doc.is_object() || !doc.contains("text") || !doc["text"].is_string()) {
        return error_reply(400, "text required");
      }
      auto text = html_escape(doc["text"].get<std::string>());
      std::lock_guard lock(s.mutex);
      s.messages.push_back(text);
      return json_reply(201, json{{"text", text}});
    });
    impl.add(V::Get, "/api/messages", [&s](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      std::lock_guard lock(s.mutex);
      return json_reply(200, json{{"messages", s.messages}});
    });
    impl.add(V::Get, "/api/search", [](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      return json_reply(200, json{{"q", html_escape(c.req.get_param_value("q"))},
                                  {"results", json::array()}});
    });
  } else if (name == "f205") {
    // User FOO's credentials are not recognized by the collection endpoint.
    impl.add(V::Post, "/api/resources/", [&s](Call& c) {
      if (!c.user || *c.user == "FOO") return error_reply(401, "unauthorized");
      return create_in_collection(c, s, "/api/resources/");
    });
    impl.add(V::Put, "/api/resources/{id}", [&s](Call& c) { return put_owned(c, s, false); });
  } else if (name == "f204") {
    // Missing resources answer 404 while foreign ones answer 403.
    impl.add(V::Put, "/api/resources/{id}", [&s](Call& c) { return put_owned(c, s, false); });
    impl.add(V::Get, "/api/resources/{id}", [&s](Call& c) { return get_owned(c, s, 404); });
  } else if (name == "f206") {
    // DELETE checks ownership, PUT does not.
    const std::string res = "/api/forbiddendelete/resources/{id}";
    impl.add(V::Put, res, [&s](Call& c) { return put_owned(c, s, true); });
    impl.add(V::Delete, res, [&s](Call& c) { return delete_owned(c, s, 404); });
  } else if (name == "f901") {
    // No authentication at all on updates.
    impl.add(V::Put, "/api/resources/{id}", [&s](Call& c) {
      long long id = c.id();
      std::lock_guard lock(s.mutex);
      s.resources[id].value = body_value(c.req);
      return Reply{204, "", "", {}};
    });
  } else if (name == "f900") {
    // Requests without any Authorization header bypass the owner check.
    impl.add(V::Put, "/api/resources/{id}", [&s](Call& c) { return put_owned(c, s, false); });
    impl.add(V::Get, "/api/resources/{id}", [&s](Call& c) {
      if (c.has_authorization) return get_owned(c, s, 403);
      long long id = c.id();
      std::lock_guard lock(s.mutex);
      auto it = s.resources.find(id);
      if (it == s.resources.end()) return error_reply(403, "forbidden");
      return json_reply(200, json{{"id", id}, {"value", it->second.value}});
    });
  } else if (name == "f902") {
    impl.add(V::Get, "/api/resources", [](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      return json_reply(200, json{{"resources", json::array()}});
    });
    impl.add(V::Get, "/api/resources/null-pointer-json", [](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      return json_reply(500, json{{"timestamp", "2024-01-01T00:00:00Z"},
                                  {"status", 500},
                                  {"error", "Internal Server Error"},
                                  {"trace", kJvmTrace},
                                  {"path", "/api/resources/null-pointer-json"}});
    });
  } else if (name == "f903") {
    // GET is served and advertised but not part of the schema.
    impl.add(V::Post, "/api/resources", [&s](Call& c) {
      if (!c.user) return error_reply(401, "unauthorized");
      return create_in_collection(c, s, "/api/resources/");
    });
    impl.add(
        V::Get, "/api/resources",
        [&s](Call&) {
          std::lock_guard lock(s.mutex);
          json ids = json::array();
          for (const auto& [id, r] : s.resources) ids.push_back(id);
          return json_reply(200, json{{"resources", ids}});
        },
        true);
    impl.allow_override["/api/resources"] = "HEAD,POST,GET,OPTIONS";
  } else if (name == "f200") {
    // Inputs are spliced into a query; sleep payloads delay the response.
    impl.add(V::Post, "/api/sqli/body/vulnerable", [&owner](Call& c) {
      auto doc = json::parse(c.req.body, nullptr, false);
      if (!doc.is_object()) return error_reply(400, "JSON body required");
      std::vector<std::string> inputs;
      collect_strings(doc, inputs);
      for (const auto& in : inputs) {
        if (has_sleep_signature(in) && owner.sqli_sleep()) {
          std::this_thread::sleep_for(std::chrono::duration<double>(owner.sqli_sleep_seconds()));
          break;
        }
      }
      return json_reply(200, json{{"authenticated", false}});
    });
  } else if (name == "f201") {
    // Entries are stored and returned without escaping.
    const std::string path = "/api/stored/json/guestbook";
    impl.add(V::Post, path, [&s](Call& c) {
      if (!c.req.has_param("name") || !c.req.has_param("entry")) {
        return error_reply(400, "name and entry required");
      }
      std::lock_guard lock(s.mutex);
      s.guestbook.emplace_back(c.req.get_param_value("name"), c.req.get_param_value("entry"));
      return json_reply(201, json{{"status", "stored"}});
    });
    impl.add(V::Get, path, [&s](Call&) {
      std::lock_guard lock(s.mutex);
      json entries = json::array();
      for (const auto& [n, e] : s.guestbook) entries.push_back(json{{"name", n}, {"entry", e}});
      return json_reply(200, json{{"entries", entries}});
    });
  } else if (name == "login") {
    impl.add(
        V::Post, "/azuread/token",
        [](Call& c) {
          static const std::map<std::string, std::string> kSecrets = {{"FOO", "foo-secret"},
                                                                      {"BAR", "bar-secret"}};
          httplib::Params form;
          httplib::detail::parse_query_text(c.req.body, form);
          auto field = [&](const char* k) {
            auto it = form.find(k);
            return it == form.end() ? std::string() : it->second;
          };
          auto it = kSecrets.find(field("username"));
          if (it == kSecrets.end() || it->second != field("password")) {
            return error_reply(401, "invalid credentials");
          }
          return json_reply(200, json{{"access_token", "tok-" + it->first},
                                      {"token_type", "Bearer"},
                                      {"expires_in", 3600}});
        },
        true);
    impl.add(V::Get, "/api/me", [](Call& c) {
      if (!c.user || !c.req.get_header_value("Authorization").starts_with("Bearer ")) {
        return error_reply(401, "unauthorized");
      }
      return json_reply(200, json{{"name", *c.user}});
    });
  } else {
    throw NotFoundError("unknown fixture '" + name + "'");
  }
}

}  // namespace

struct FixtureServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  Router router;
};

FixtureServer::FixtureServer(std::string name, FixtureOptions options)
    : name_(std::move(name)), options_(options), sleep_enabled_(options.sqli_sleep_enabled) {
  find_fixture(name_);
}

FixtureServer::~FixtureServer() { stop(); }

void FixtureServer::start(int port) {
  if (impl_) return;
  auto impl = std::make_unique<Impl>();
  build_routes(name_, impl->router, *this);
  Impl* raw = impl.get();
  auto handler = [raw](const httplib::Request& req, httplib::Response& res) {
    Reply r;
    try {
      r = raw->router.dispatch(req);
    } catch (const std::exception& e) {
      r = error_reply(400, e.what());
    }
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (!r.body.empty()) res.set_content(r.body, r.content_type);
  };
  impl->server.set_tcp_nodelay(true);
  const char* any = ".*";
  impl->server.Get(any, handler);
  impl->server.Post(any, handler);
  impl->server.Put(any, handler);
  impl->server.Patch(any, handler);
  impl->server.Delete(any, handler);
  impl->server.Options(any, handler);
  if (port == 0) {
    impl->port = impl->server.bind_to_any_port("127.0.0.1");
  } else {
    impl->port = impl->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (impl->port <= 0) {
    throw Error("fixture " + name_ + ": cannot bind port " + std::to_string(port));
  }
  impl->thread = std::thread([raw] { raw->server.listen_after_bind(); });
  impl->server.wait_until_ready();
  spdlog::debug("fixture {} listening on port {}", name_, impl->port);
  impl_ = std::move(impl);
}

void FixtureServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_.reset();
}

bool FixtureServer::running() const noexcept { return impl_ != nullptr; }

int FixtureServer::port() const noexcept { return impl_ ? impl_->port : 0; }

std::string FixtureServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port());
}

const EmbeddedFixture& FixtureServer::fixture() const { return find_fixture(name_); }

}  // namespace restsec
