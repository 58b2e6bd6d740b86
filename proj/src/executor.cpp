#include "restsec/executor.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "restsec/errors.hpp"

namespace restsec {

std::string ParsedUrl::origin() const {
  std::string out = scheme + "://" + host;
  bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
  if (!default_port) out += ":" + std::to_string(port);
  return out;
}

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  auto sep = url.find("://");
  if (sep == std::string::npos) throw ConfigError("not an absolute URL: " + url);
  out.scheme = url.substr(0, sep);
  for (auto& c : out.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (out.scheme != "http" && out.scheme != "https") {
    throw ConfigError("unsupported URL scheme: " + url);
  }
  auto rest = url.substr(sep + 3);
  auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  out.path = slash == std::string::npos ? "" : rest.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  out.port = out.scheme == "https" ? 443 : 80;
  auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']', colon) == std::string::npos) {
    try {
      out.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in URL: " + url);
    }
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw ConfigError("missing host in URL: " + url);
  out.host = authority;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  int status = 0;
  Headers headers;
  std::string body;
  bool truncated = false;
  double duration_ms = 0.0;
  bool timed_out = false;
};

bool host_matches_no_proxy(const std::string& host) {
  const char* env = std::getenv("NO_PROXY");
  if (!env) env = std::getenv("no_proxy");
  if (!env) return false;
  std::stringstream ss(env);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (item.empty()) continue;
    if (item == "*") return true;
    if (!item.empty() && item.front() == '.') item.erase(item.begin());
    if (host == item) return true;
    if (host.size() > item.size() && host.ends_with("." + item)) return true;
  }
  return false;
}

}  // namespace

struct HttpExecutor::Impl {
  ParsedUrl base;
  ExecutorOptions options;
  std::optional<ParsedUrl> proxy;
  std::map<std::string, std::unique_ptr<httplib::Client>> clients;

  httplib::Client& client_for(const ParsedUrl& target) {
    auto key = target.origin();
    auto it = clients.find(key);
    if (it != clients.end()) return *it->second;
    auto client = std::make_unique<httplib::Client>(key);
    auto secs = static_cast<time_t>(options.timeout_ms / 1000.0);
    auto usecs = static_cast<time_t>((options.timeout_ms - secs * 1000.0) * 1000.0);
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_write_timeout(secs, usecs);
    client->set_follow_location(false);
    client->set_keep_alive(true);
    client->set_tcp_nodelay(true);
    client->set_decompress(true);
    if (proxy && !host_matches_no_proxy(target.host)) client->set_proxy(proxy->host, proxy->port);
    return *clients.emplace(key, std::move(client)).first->second;
  }

  Outcome perform(HttpVerb verb, const std::string& url_or_path, const Headers& headers,
                  const std::string& body) {
    ParsedUrl target = base;
    std::string path;
    if (url_or_path.starts_with("http://") || url_or_path.starts_with("https://")) {
      auto scheme_end = url_or_path.find("://") + 3;
      auto slash = url_or_path.find('/', scheme_end);
      target = parse_url(url_or_path);
      path = slash == std::string::npos ? "/" : url_or_path.substr(slash);
    } else {
      path = base.path + (url_or_path.starts_with("/") ? "" : "/") + url_or_path;
    }

    httplib::Request req;
    req.method = std::string(to_string(verb));
    req.path = path;
    for (const auto& [k, v] : headers) req.headers.emplace(k, v);
    req.body = body;

    Outcome out;
    const std::size_t cap = options.body_cap;
    req.content_receiver = [&out, cap](const char* data, std::size_t n, uint64_t, uint64_t) {
      if (out.body.size() < cap) {
        auto take = std::min(n, cap - out.body.size());
        out.body.append(data, take);
        if (take < n) out.truncated = true;
      } else if (n > 0) {
        out.truncated = true;
      }
      return true;
    };

    auto& client = client_for(target);
    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    auto start = Clock::now();
    bool ok = client.send(req, res, err);
    auto stop = Clock::now();
    out.duration_ms = std::chrono::duration<double, std::milli>(stop - start).count();

    if (!ok) {
      bool slow = out.duration_ms >= options.timeout_ms * 0.95;
      if ((err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) && slow) {
        out.timed_out = true;
        out.body.clear();
        return out;
      }
      throw TransportError(req.method + " " + target.origin() + path + ": " +
                           httplib::to_string(err));
    }
    out.status = res.status;
    for (const auto& [k, v] : res.headers) {
      auto it = out.headers.find(k);
      if (it == out.headers.end()) {
        out.headers.emplace(k, v);
      } else {
        it->second += ", " + v;
      }
    }
    return out;
  }
};

HttpExecutor::HttpExecutor(std::string base_url, ExecutorOptions options)
    : base_url_(std::move(base_url)),
      options_(std::move(options)),
      impl_(std::make_unique<Impl>()) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  impl_->base = parse_url(base_url_);
  impl_->options = options_;
  std::string proxy = options_.proxy;
  if (proxy.empty() && options_.use_env_proxy) {
    const char* env = std::getenv("HTTP_PROXY");
    if (!env) env = std::getenv("http_proxy");
    if (env) proxy = env;
  }
  if (!proxy.empty()) {
    impl_->proxy = parse_url(proxy.find("://") == std::string::npos ? "http://" + proxy : proxy);
    spdlog::debug("using proxy {}", impl_->proxy->origin());
  }
}

HttpExecutor::~HttpExecutor() = default;

ExecutedCall HttpExecutor::execute(const HttpAction& action, const ResolvedCredential& credential) {
  std::lock_guard lock(mutex_);
  Headers headers = action.headers;
  for (const auto& [k, v] : credential.headers) headers[k] = v;
  std::string body;
  if (action.body) {
    body = action.body->payload;
    if (!action.body->media_type.empty()) headers["Content-Type"] = action.body->media_type;
  }
  auto outcome = impl_->perform(action.endpoint.verb,
                                action.rendered_path() + action.rendered_query(), headers, body);
  ++calls_executed_;
  ExecutedCall call;
  call.action = action;
  call.status = outcome.status;
  call.response_headers = std::move(outcome.headers);
  call.response_body = std::move(outcome.body);
  call.body_truncated = outcome.truncated;
  call.duration_ms = outcome.duration_ms;
  call.timed_out = outcome.timed_out;
  return call;
}

TestRun HttpExecutor::run_test_case(const TestCase& test, CredentialStore& credentials) {
  std::lock_guard lock(mutex_);
  ++tests_executed_;
  TestRun run;
  for (std::size_t i = 0; i < test.calls.size(); ++i) {
    HttpAction action = test.calls[i];
    for (const auto& b : test.bindings) {
      if (b.target_call != i) continue;
      std::optional<std::string> value;
      if (b.source_call < run.calls.size()) value = extract(b.extractor, run.calls[b.source_call]);
      if (!value || !apply_slot(action, b.slot, *value)) {
        run.unbindable = true;
        run.unbindable_reason = "call " + std::to_string(i) + ": cannot bind slot '" + b.slot.name +
                                "' from call " + std::to_string(b.source_call);
        return run;
      }
    }
    auto credential = credentials.resolve(action.identity, *this);
    run.calls.push_back(execute(action, credential));
  }
  return run;
}

RawResponse HttpExecutor::send(const RawRequest& request) {
  std::lock_guard lock(mutex_);
  auto outcome = impl_->perform(request.method, request.url, request.headers, request.body);
  if (outcome.timed_out) throw TransportError("request to " + request.url + " timed out");
  return RawResponse{outcome.status, std::move(outcome.headers), std::move(outcome.body)};
}

std::string read_source(const std::string& source) {
  if (source.starts_with("http://") || source.starts_with("https://")) {
    auto url = parse_url(source);
    auto scheme_end = source.find("://") + 3;
    auto slash = source.find('/', scheme_end);
    httplib::Client client(url.origin());
    client.set_follow_location(true);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(30, 0);
    auto res = client.Get(slash == std::string::npos ? "/" : source.substr(slash));
    if (!res)
      throw TransportError("cannot fetch " + source + ": " + httplib::to_string(res.error()));
    if (!is_success(res->status)) {
      throw ConfigError("fetching " + source + " returned status " + std::to_string(res->status));
    }
    return res->body;
  }
  std::ifstream in(source, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + source);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace restsec
