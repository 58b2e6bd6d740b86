#include "restsec/auth.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "restsec/errors.hpp"

namespace restsec {

std::string LoginRecipe::render(std::string_view token) const {
  std::string out = header_template;
  auto pos = out.find(kTokenPlaceholder);
  if (pos != std::string::npos) out.replace(pos, std::string_view(kTokenPlaceholder).size(), token);
  return out;
}

namespace {

std::string required_string(const YAML::Node& node, const char* key, const std::string& who) {
  if (!node[key] || !node[key].IsScalar() || node[key].Scalar().empty()) {
    throw ConfigError("auth entry '" + who + "': missing `" + key + "`");
  }
  return node[key].Scalar();
}

LoginRecipe parse_login(const YAML::Node& node, const std::string& who) {
  if (!node.IsMap()) throw ConfigError("auth entry '" + who + "': `login` must be a mapping");
  LoginRecipe r;
  r.endpoint = required_string(node, "endpoint", who);
  auto method = parse_verb(node["method"] ? node["method"].Scalar() : "POST");
  if (!method) throw ConfigError("auth entry '" + who + "': unknown login method");
  r.method = *method;
  r.content_type = node["contentType"] ? node["contentType"].Scalar() : "";
  r.payload = node["payload"] ? node["payload"].Scalar() : "";
  const auto token = node["token"];
  if (!token || !token.IsMap()) {
    throw ConfigError("auth entry '" + who + "': login requires a `token` mapping");
  }
  std::string from = token["extractFrom"] ? token["extractFrom"].Scalar() : "body";
  if (from == "body") {
    r.extract_from = TokenSource::Body;
  } else if (from == "header") {
    r.extract_from = TokenSource::Header;
  } else {
    throw ConfigError("auth entry '" + who + "': extractFrom must be body or header");
  }
  r.field = required_string(token, "field", who);
  if (token["headerTemplate"]) r.header_template = token["headerTemplate"].Scalar();
  auto first = r.header_template.find(kTokenPlaceholder);
  if (first == std::string::npos ||
      r.header_template.find(kTokenPlaceholder, first + 1) != std::string::npos) {
    throw ConfigError("auth entry '" + who +
                      "': headerTemplate must contain {token} exactly once");
  }
  return r;
}

}  // namespace

std::vector<AuthIdentity> load_auth_config(std::string_view yaml_document) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_document));
  } catch (const YAML::ParserException& e) {
    throw ParseError("malformed auth YAML: " + e.msg,
                     "line " + std::to_string(e.mark.line + 1) + ", column " +
                         std::to_string(e.mark.column + 1));
  }
  if (!root.IsMap() || !root["auth"])
    throw ConfigError("auth config needs a top-level `auth:` list");
  const auto list = root["auth"];
  if (!list.IsSequence() && !list.IsNull()) throw ConfigError("`auth:` must be a list");
  if (list.IsNull() || list.size() == 0) throw ConfigError("at least one user required");

  std::vector<AuthIdentity> out;
  std::set<std::string> names;
  for (const auto& entry : list) {
    if (!entry.IsMap()) throw ConfigError("auth entries must be mappings");
    AuthIdentity id;
    id.name = required_string(entry, "name", "?");
    if (id.name == kAnonymous) throw ConfigError("user name 'anonymous' is reserved");
    if (!names.insert(id.name).second) throw ConfigError("duplicate user name '" + id.name + "'");
    bool has_headers = static_cast<bool>(entry["headers"]);
    bool has_login = static_cast<bool>(entry["login"]);
    if (has_headers == has_login) {
      throw ConfigError("auth entry '" + id.name + "': exactly one of `headers` or `login`");
    }
    if (has_headers) {
      if (!entry["headers"].IsMap() || entry["headers"].size() == 0) {
        throw ConfigError("auth entry '" + id.name + "': `headers` must be a non-empty mapping");
      }
      id.kind = AuthKind::StaticHeaders;
      for (const auto& kv : entry["headers"]) {
        id.static_headers[kv.first.as<std::string>()] = kv.second.as<std::string>();
      }
    } else {
      id.kind = AuthKind::LoginFlow;
      id.login = parse_login(entry["login"], id.name);
    }
    out.push_back(std::move(id));
  }
  out.push_back(AuthIdentity::anonymous());
  return out;
}

std::vector<AuthIdentity> load_auth_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read auth config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_auth_config(ss.str());
}

std::string dump_auth_config(const std::vector<AuthIdentity>& identities) {
  YAML::Emitter out;
  out << YAML::BeginMap << YAML::Key << "auth" << YAML::Value << YAML::BeginSeq;
  for (const auto& id : identities) {
    if (id.is_anonymous()) continue;
    out << YAML::BeginMap << YAML::Key << "name" << YAML::Value << id.name;
    if (id.kind == AuthKind::StaticHeaders) {
      out << YAML::Key << "headers" << YAML::Value << YAML::BeginMap;
      for (const auto& [k, v] : id.static_headers) out << YAML::Key << k << YAML::Value << v;
      out << YAML::EndMap;
    } else {
      const auto& r = *id.login;
      out << YAML::Key << "login" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "endpoint" << YAML::Value << r.endpoint;
      out << YAML::Key << "method" << YAML::Value << std::string(to_string(r.method));
      out << YAML::Key << "contentType" << YAML::Value << r.content_type;
      out << YAML::Key << "payload" << YAML::Value << r.payload;
      out << YAML::Key << "token" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "extractFrom" << YAML::Value
          << (r.extract_from == TokenSource::Body ? "body" : "header");
      out << YAML::Key << "field" << YAML::Value << r.field;
      out << YAML::Key << "headerTemplate" << YAML::Value << r.header_template;
      out << YAML::EndMap << YAML::EndMap;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

RawRequest login_request(const LoginRecipe& recipe) {
  RawRequest req;
  req.method = recipe.method;
  req.url = recipe.endpoint;
  req.body = recipe.payload;
  if (!recipe.content_type.empty()) req.headers["Content-Type"] = recipe.content_type;
  return req;
}

std::string extract_token(const LoginRecipe& recipe, const RawResponse& response) {
  if (!is_success(response.status)) {
    throw ConfigError("login call to " + recipe.endpoint + " returned status " +
                      std::to_string(response.status));
  }
  if (recipe.extract_from == TokenSource::Header) {
    auto it = response.headers.find(recipe.field);
    if (it == response.headers.end()) {
      throw ConfigError("login response lacks header '" + recipe.field + "'");
    }
    return it->second;
  }
  json doc = json::parse(response.body, nullptr, false);
  const json* field = doc.is_discarded() ? nullptr : find_field(doc, recipe.field);
  if (!field || field->is_null()) {
    throw ConfigError("login response lacks token field '" + recipe.field + "'");
  }
  return field->is_string() ? field->get<std::string>() : field->dump();
}

ResolvedCredential resolve(const AuthIdentity& identity, RequestSink& sink) {
  ResolvedCredential cred{identity.name, {}, std::chrono::system_clock::now()};
  switch (identity.kind) {
    case AuthKind::Anonymous:
      break;
    case AuthKind::StaticHeaders:
      cred.headers = identity.static_headers;
      break;
    case AuthKind::LoginFlow: {
      const auto& recipe = *identity.login;
      auto response = sink.send(login_request(recipe));
      cred.headers[kTokenHeader] = recipe.render(extract_token(recipe, response));
      break;
    }
  }
  return cred;
}

CredentialStore::CredentialStore(std::vector<AuthIdentity> identities)
    : identities_(std::move(identities)) {
  bool has_anonymous = false;
  for (const auto& id : identities_) has_anonymous |= id.is_anonymous();
  if (!has_anonymous) identities_.push_back(AuthIdentity::anonymous());
}

const AuthIdentity& CredentialStore::identity(std::string_view name) const {
  for (const auto& id : identities_) {
    if (id.name == name) return id;
  }
  throw NotFoundError("unknown identity '" + std::string(name) + "'");
}

bool CredentialStore::has(std::string_view name) const noexcept {
  for (const auto& id : identities_) {
    if (id.name == name) return true;
  }
  return false;
}

std::vector<std::string> CredentialStore::authenticated_names() const {
  std::vector<std::string> out;
  for (const auto& id : identities_) {
    if (!id.is_anonymous()) out.push_back(id.name);
  }
  return out;
}

ResolvedCredential CredentialStore::resolve(std::string_view name, RequestSink& sink) {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  auto cred = restsec::resolve(identity(name), sink);
  cache_.emplace(std::string(name), cred);
  return cred;
}

void CredentialStore::invalidate() {
  std::lock_guard lock(mutex_);
  cache_.clear();
}

}  // namespace restsec
