#include "restsec/schema.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <unordered_map>

#include <yaml-cpp/yaml.h>

#include "restsec/errors.hpp"

namespace restsec {

std::string_view to_string(ParamLocation loc) noexcept {
  switch (loc) {
    case ParamLocation::Path: return "path";
    case ParamLocation::Query: return "query";
    case ParamLocation::Header: return "header";
    case ParamLocation::BodyField: return "body";
  }
  return "query";
}

std::string_view to_string(ValueKind kind) noexcept {
  switch (kind) {
    case ValueKind::String: return "string";
    case ValueKind::Integer: return "integer";
    case ValueKind::Number: return "number";
    case ValueKind::Boolean: return "boolean";
    case ValueKind::Array: return "array";
    case ValueKind::Object: return "object";
  }
  return "string";
}

namespace {

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](unsigned char c) { return (c & 0xC0) != 0x80; }));
}

const std::regex* compiled_pattern(const std::string& pattern) {
  thread_local std::unordered_map<std::string, std::optional<std::regex>> cache;
  auto it = cache.find(pattern);
  if (it == cache.end()) {
    std::optional<std::regex> re;
    try {
      re.emplace(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error&) {
    }
    it = cache.emplace(pattern, std::move(re)).first;
  }
  return it->second ? &*it->second : nullptr;
}

}  // namespace

bool Constraints::accepts_string(std::string_view value) const {
  auto len = utf8_length(value);
  if (min_length && len < *min_length) return false;
  if (max_length && len > *max_length) return false;
  if (!enum_values.empty()) {
    bool found = std::any_of(enum_values.begin(), enum_values.end(), [&](const json& e) {
      return e.is_string() && e.get_ref<const std::string&>() == value;
    });
    if (!found) return false;
  }
  if (pattern) {
    const std::regex* re = compiled_pattern(*pattern);
    // An unusable pattern cannot be checked; treat it as unconstrained.
    if (re && !std::regex_search(value.begin(), value.end(), *re)) return false;
  }
  return true;
}

bool Constraints::accepts_number(double value) const {
  if (minimum && (exclusive_minimum ? value <= *minimum : value < *minimum)) return false;
  if (maximum && (exclusive_maximum ? value >= *maximum : value > *maximum)) return false;
  if (!enum_values.empty()) {
    return std::any_of(enum_values.begin(), enum_values.end(), [&](const json& e) {
      return e.is_number() && e.get<double>() == value;
    });
  }
  return true;
}

const ParamSpec* EndpointSpec::param(std::string_view name, ParamLocation loc) const {
  for (const auto& p : parameters) {
    if (p.location == loc && p.name == name) return &p;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// YAML -> JSON

namespace {

json yaml_node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string& text = node.Scalar();
      // Quoted scalars carry the non-specific tag "!" and always stay strings.
      if (node.Tag() == "!") return text;
      if (text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
      if (text == "true" || text == "True" || text == "TRUE") return true;
      if (text == "false" || text == "False" || text == "FALSE") return false;
      if (!text.empty() && (std::isdigit(static_cast<unsigned char>(text[0])) || text[0] == '-' ||
                            text[0] == '+')) {
        try {
          std::size_t used = 0;
          long long v = std::stoll(text, &used);
          if (used == text.size()) return v;
        } catch (...) {
        }
        try {
          std::size_t used = 0;
          double d = std::stod(text, &used);
          if (used == text.size()) return d;
        } catch (...) {
        }
      }
      return text;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_to_json(std::string_view document) {
  try {
    YAML::Node root = YAML::Load(std::string(document));
    return yaml_node_to_json(root);
  } catch (const YAML::ParserException& e) {
    throw ParseError("malformed YAML: " + e.msg, "line " + std::to_string(e.mark.line + 1) +
                                                     ", column " +
                                                     std::to_string(e.mark.column + 1));
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("malformed YAML: ") + e.what(), "");
  }
}

// ---------------------------------------------------------------------------
// Path helpers

std::vector<HttpVerb> parse_allow_header(std::string_view value) {
  std::vector<HttpVerb> verbs;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    auto token = value.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start);
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front())))
      token.remove_prefix(1);
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back())))
      token.remove_suffix(1);
    if (auto v = parse_verb(token)) {
      if (std::find(verbs.begin(), verbs.end(), *v) == verbs.end()) verbs.push_back(*v);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return verbs;
}

std::vector<std::string> ancestor_paths(std::string_view path_template) {
  std::vector<std::string> segments;
  std::size_t pos = 1;
  while (pos <= path_template.size()) {
    auto slash = path_template.find('/', pos);
    auto seg = path_template.substr(pos, slash == std::string_view::npos ? std::string_view::npos
                                                                         : slash - pos);
    if (!seg.empty()) segments.emplace_back(seg);
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  std::vector<std::string> out;
  std::string prefix;
  for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
    prefix += '/';
    prefix += segments[i];
    out.push_back(prefix);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SchemaModel queries

const EndpointSpec* SchemaModel::find(const EndpointId& id) const {
  for (const auto& e : endpoints_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

const EndpointSpec& SchemaModel::at(const EndpointId& id) const {
  if (const auto* e = find(id)) return *e;
  throw NotFoundError("endpoint not declared in schema: " + id.str());
}

bool SchemaModel::declares_path(std::string_view path) const {
  return nodes_.find(path) != nodes_.end();
}

std::vector<HttpVerb> SchemaModel::verbs_at(std::string_view path) const {
  auto it = nodes_.find(path);
  if (it == nodes_.end()) return {};
  return it->second.verbs;
}

const PathNode& SchemaModel::node(std::string_view path) const {
  auto it = nodes_.find(path);
  if (it == nodes_.end()) throw NotFoundError("path not declared in schema: " + std::string(path));
  return it->second;
}

std::vector<const PathNode*> SchemaModel::roots() const {
  std::set<std::string, std::less<>> non_roots;
  for (const auto& [_, n] : nodes_) {
    for (const auto& c : n.children) non_roots.insert(c);
  }
  std::vector<const PathNode*> out;
  for (const auto& p : paths_) {
    if (!non_roots.contains(p)) out.push_back(&nodes_.find(p)->second);
  }
  return out;
}

std::optional<EndpointId> SchemaModel::top_get_ancestor(std::string_view path) const {
  node(path);  // throws when undeclared
  for (const auto& anc : ancestor_paths(path)) {
    EndpointId candidate{HttpVerb::Get, anc};
    if (declares(candidate)) return candidate;
  }
  return std::nullopt;
}

std::vector<HttpVerb> SchemaModel::undeclared_verbs(std::string_view path,
                                                    std::span<const HttpVerb> allow) const {
  std::vector<HttpVerb> out;
  for (HttpVerb v : allow) {
    if (v == HttpVerb::Options || v == HttpVerb::Head) continue;
    if (declares(EndpointId{v, std::string(path)})) continue;
    if (std::find(out.begin(), out.end(), v) != out.end()) continue;
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading

class SchemaBuilder {
 public:
  explicit SchemaBuilder(const json& doc) : doc_(doc) {}

  SchemaModel build() {
    check_version();
    if (doc_.contains("info") && doc_["info"].is_object()) {
      model_.title_ = doc_["info"].value("title", "");
    }
    if (!doc_.contains("paths") || !doc_["paths"].is_object() || doc_["paths"].empty()) {
      model_.warnings_.push_back("empty schema");
      return std::move(model_);
    }
    for (const auto& [path, item] : doc_["paths"].items()) add_path(path, item);
    link_nodes();
    if (model_.endpoints_.empty()) model_.warnings_.push_back("empty schema");
    return std::move(model_);
  }

 private:
  void warn(std::string msg) { model_.warnings_.push_back(std::move(msg)); }

  void check_version() {
    if (!doc_.is_object()) throw ParseError("OpenAPI document must be a mapping", "");
    if (doc_.contains("swagger")) {
      throw UnsupportedVersionError("Swagger/OpenAPI 2 documents are not supported");
    }
    if (!doc_.contains("openapi") || !doc_["openapi"].is_string()) {
      throw UnsupportedVersionError("missing `openapi` version field");
    }
    const auto& v = doc_["openapi"].get_ref<const std::string&>();
    if (v.empty() || v[0] != '3') {
      throw UnsupportedVersionError("unsupported OpenAPI version " + v + " (need 3.x)");
    }
  }

  const json& lookup_ref(const std::string& ref) {
    if (ref.empty() || ref[0] != '#') {
      throw ConfigError("external $ref not supported: " + ref);
    }
    try {
      json::json_pointer ptr(ref.substr(1));
      return doc_.at(ptr);
    } catch (const json::exception&) {
      throw ParseError("unresolvable $ref " + ref, ref);
    }
  }

  /// Inlines internal references; collapses oneOf/anyOf to the first
  /// alternative and merges allOf.
  json resolve(const json& node, std::vector<std::string>& stack) {
    if (node.is_array()) {
      json out = json::array();
      for (const auto& item : node) out.push_back(resolve(item, stack));
      return out;
    }
    if (!node.is_object()) return node;
    if (node.contains("$ref") && node["$ref"].is_string()) {
      auto ref = node["$ref"].get<std::string>();
      if (std::find(stack.begin(), stack.end(), ref) != stack.end()) {
        warn("recursive reference " + ref + " truncated");
        return json::object();
      }
      stack.push_back(ref);
      json out = resolve(lookup_ref(ref), stack);
      stack.pop_back();
      return out;
    }
    for (const char* key : {"oneOf", "anyOf"}) {
      if (node.contains(key) && node[key].is_array() && !node[key].empty()) {
        warn(std::string("polymorphic schema (") + key + ") reduced to its first alternative");
        json first = resolve(node[key][0], stack);
        json rest = node;
        rest.erase(key);
        json merged = resolve(rest, stack);
        for (auto& [k, v] : first.items()) {
          if (!merged.contains(k)) merged[k] = v;
        }
        return merged;
      }
    }
    if (node.contains("allOf") && node["allOf"].is_array()) {
      json merged = json::object();
      json rest = node;
      rest.erase("allOf");
      for (const auto& part : node["allOf"]) {
        json r = resolve(part, stack);
        merge_object_schema(merged, r);
      }
      merge_object_schema(merged, resolve(rest, stack));
      return merged;
    }
    json out = json::object();
    for (const auto& [k, v] : node.items()) out[k] = resolve(v, stack);
    return out;
  }

  static void merge_object_schema(json& into, const json& part) {
    for (const auto& [k, v] : part.items()) {
      if (k == "properties" && v.is_object()) {
        for (const auto& [pk, pv] : v.items()) into["properties"][pk] = pv;
      } else if (k == "required" && v.is_array()) {
        for (const auto& r : v) into["required"].push_back(r);
      } else {
        into[k] = v;
      }
    }
  }

  json resolve(const json& node) {
    std::vector<std::string> stack;
    return resolve(node, stack);
  }

  static ValueKind kind_of(const json& schema) {
    std::string type;
    if (schema.contains("type")) {
      if (schema["type"].is_string()) {
        type = schema["type"].get<std::string>();
      } else if (schema["type"].is_array()) {
        for (const auto& t : schema["type"]) {
          if (t.is_string() && t.get<std::string>() != "null") {
            type = t.get<std::string>();
            break;
          }
        }
      }
    }
    if (type == "integer") return ValueKind::Integer;
    if (type == "number") return ValueKind::Number;
    if (type == "boolean") return ValueKind::Boolean;
    if (type == "array") return ValueKind::Array;
    if (type == "object") return ValueKind::Object;
    if (type.empty() && schema.contains("properties")) return ValueKind::Object;
    return ValueKind::String;
  }

  Constraints constraints_of(const json& schema, const std::string& where) {
    Constraints c;
    auto size_field = [&](const char* key) -> std::optional<std::size_t> {
      if (schema.contains(key) && schema[key].is_number()) {
        auto v = schema[key].get<double>();
        if (v >= 0) return static_cast<std::size_t>(v);
      }
      return std::nullopt;
    };
    c.min_length = size_field("minLength");
    c.max_length = size_field("maxLength");
    if (schema.contains("minimum") && schema["minimum"].is_number())
      c.minimum = schema["minimum"].get<double>();
    if (schema.contains("maximum") && schema["maximum"].is_number())
      c.maximum = schema["maximum"].get<double>();
    if (schema.contains("exclusiveMinimum")) {
      const auto& em = schema["exclusiveMinimum"];
      if (em.is_boolean()) {
        c.exclusive_minimum = em.get<bool>();
      } else if (em.is_number()) {
        c.minimum = em.get<double>();
        c.exclusive_minimum = true;
      }
    }
    if (schema.contains("exclusiveMaximum")) {
      const auto& em = schema["exclusiveMaximum"];
      if (em.is_boolean()) {
        c.exclusive_maximum = em.get<bool>();
      } else if (em.is_number()) {
        c.maximum = em.get<double>();
        c.exclusive_maximum = true;
      }
    }
    if (schema.contains("pattern") && schema["pattern"].is_string())
      c.pattern = schema["pattern"].get<std::string>();

    if (c.min_length && c.max_length && *c.min_length > *c.max_length) {
      warn(where + ": minLength > maxLength, length bounds ignored");
      c.min_length.reset();
      c.max_length.reset();
    }
    if (c.minimum && c.maximum && *c.minimum > *c.maximum) {
      warn(where + ": minimum > maximum, numeric bounds ignored");
      c.minimum.reset();
      c.maximum.reset();
    }
    if (schema.contains("enum") && schema["enum"].is_array()) {
      ValueKind kind = kind_of(schema);
      for (const auto& e : schema["enum"]) {
        bool ok = true;
        if (e.is_string()) {
          Constraints no_enum = c;
          ok = no_enum.accepts_string(e.get<std::string>());
        } else if (e.is_number()) {
          ok = c.accepts_number(e.get<double>());
        }
        if (kind == ValueKind::String && !e.is_string()) ok = false;
        if (ok) {
          c.enum_values.push_back(e);
        } else {
          warn(where + ": enum value " + e.dump() + " violates the other constraints, dropped");
        }
      }
    }
    return c;
  }

  ParamSpec param_from(const std::string& name, ParamLocation loc, const json& schema,
                       bool required, const std::string& where) {
    ParamSpec p;
    p.name = name;
    p.location = loc;
    p.schema = schema;
    p.kind = kind_of(schema);
    p.constraints = constraints_of(schema, where + " parameter '" + name + "'");
    p.required = required || loc == ParamLocation::Path;
    return p;
  }

  void add_parameter(std::vector<ParamSpec>& params, const json& raw_param,
                     const std::string& where) {
    json p = resolve(raw_param);
    if (!p.is_object() || !p.contains("name") || !p.contains("in")) {
      warn(where + ": parameter without name/in ignored");
      return;
    }
    auto name = p["name"].get<std::string>();
    auto in = p["in"].get<std::string>();
    ParamLocation loc;
    if (in == "path") {
      loc = ParamLocation::Path;
    } else if (in == "query") {
      loc = ParamLocation::Query;
    } else if (in == "header") {
      loc = ParamLocation::Header;
    } else {
      warn(where + ": parameter '" + name + "' in " + in + " is not supported");
      return;
    }
    json schema = p.contains("schema") ? p["schema"] : json::object();
    if (!p.contains("schema")) {
      warn(where + ": parameter '" + name + "' has no schema, treated as string");
    }
    auto spec = param_from(name, loc, schema, p.value("required", false), where);
    auto same = [&](const ParamSpec& q) { return q.name == name && q.location == loc; };
    std::erase_if(params, same);
    params.push_back(std::move(spec));
  }

  void add_body(EndpointSpec& ep, const json& raw_body, const std::string& where) {
    json body = resolve(raw_body);
    if (!body.contains("content") || !body["content"].is_object() || body["content"].empty()) {
      return;
    }
    const auto& content = body["content"];
    std::string media;
    for (const char* preferred : {"application/json", "application/x-www-form-urlencoded"}) {
      if (content.contains(preferred)) {
        media = preferred;
        break;
      }
    }
    if (media.empty()) {
      for (const auto& [k, _] : content.items()) {
        if (k.find("json") != std::string::npos) {
          media = k;
          break;
        }
      }
    }
    if (media.empty()) {
      media = content.begin().key();
      warn(where + ": request body media type " + media +
           " is not generated (only JSON and form bodies are)");
      ep.body = BodySpec{media, json::object(), body.value("required", false)};
      return;
    }
    json schema = content[media].contains("schema") ? content[media]["schema"] : json::object();
    ep.body = BodySpec{media, schema, body.value("required", false)};
    if (kind_of(schema) == ValueKind::Object && schema.contains("properties")) {
      std::set<std::string> required;
      if (schema.contains("required") && schema["required"].is_array()) {
        for (const auto& r : schema["required"]) required.insert(r.get<std::string>());
      }
      for (const auto& [name, prop] : schema["properties"].items()) {
        ep.parameters.push_back(param_from(name, ParamLocation::BodyField, prop,
                                           required.contains(name), where));
      }
    }
  }

  void add_responses(EndpointSpec& ep, const json& responses) {
    if (!responses.is_object()) return;
    for (const auto& [code, resp] : responses.items()) {
      auto exp = StatusExpectation::parse(code);
      if (!exp || exp->is_class()) continue;
      ep.declared_responses.insert(exp->value());
      if (is_success(exp->value()) && ep.response_fields.empty()) {
        json r = resolve(resp);
        if (r.contains("content") && r["content"].is_object()) {
          for (const auto& [_, media] : r["content"].items()) {
            if (media.contains("schema") && media["schema"].contains("properties")) {
              for (const auto& [field, __] : media["schema"]["properties"].items())
                ep.response_fields.push_back(field);
              break;
            }
          }
        }
      }
    }
  }

  void add_path(const std::string& path, const json& raw_item) {
    if (path.empty() || path[0] != '/') {
      warn("path '" + path + "' does not start with '/', ignored");
      return;
    }
    auto names = placeholders(path);
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) {
      warn("path '" + path + "' repeats a placeholder name, ignored");
      return;
    }
    json item = resolve(raw_item);
    if (!item.is_object()) return;

    PathNode node{path, {}, {}};
    for (const auto& [key, op] : item.items()) {
      if (key == "parameters" || key == "summary" || key == "description" || key == "servers" ||
          key.starts_with("x-")) {
        continue;
      }
      auto verb = parse_verb(key);
      if (!verb) {
        warn("operation '" + key + "' on " + path + " is not supported");
        continue;
      }
      EndpointSpec ep;
      ep.id = EndpointId{*verb, path};
      std::string where = ep.id.str();
      if (item.contains("parameters") && item["parameters"].is_array()) {
        for (const auto& p : item["parameters"]) add_parameter(ep.parameters, p, where);
      }
      if (op.contains("parameters") && op["parameters"].is_array()) {
        for (const auto& p : op["parameters"]) add_parameter(ep.parameters, p, where);
      }
      for (const auto& name : names) {
        if (!ep.param(name, ParamLocation::Path)) {
          warn(where + ": placeholder {" + name + "} has no declared parameter, assuming string");
          json schema = {{"type", "string"}, {"minLength", 1}};
          ep.parameters.push_back(param_from(name, ParamLocation::Path, schema, true, where));
        }
      }
      std::erase_if(ep.parameters, [&](const ParamSpec& p) {
        if (p.location != ParamLocation::Path) return false;
        bool used = std::find(names.begin(), names.end(), p.name) != names.end();
        if (!used) warn(where + ": path parameter '" + p.name + "' not in template, dropped");
        return !used;
      });
      if (op.contains("requestBody")) add_body(ep, op["requestBody"], where);
      if (op.contains("responses")) add_responses(ep, op["responses"]);
      node.verbs.push_back(*verb);
      model_.endpoints_.push_back(std::move(ep));
    }
    model_.paths_.push_back(path);
    model_.nodes_.emplace(path, std::move(node));
  }

  void link_nodes() {
    for (const auto& path : model_.paths_) {
      auto ancestors = ancestor_paths(path);
      for (auto it = ancestors.rbegin(); it != ancestors.rend(); ++it) {
        auto parent = model_.nodes_.find(*it);
        if (parent != model_.nodes_.end()) {
          parent->second.children.push_back(path);
          break;
        }
      }
    }
  }

  const json& doc_;
  SchemaModel model_;
};

SchemaModel load_schema(std::string_view document, SchemaFormat format) {
  json doc;
  if (format == SchemaFormat::Json) {
    try {
      doc = json::parse(document);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(),
                       "byte " + std::to_string(e.byte));
    }
  } else {
    doc = yaml_to_json(document);
  }
  return SchemaBuilder(doc).build();
}

SchemaModel load_schema(std::string_view document) {
  auto first = document.find_first_not_of(" \t\r\n");
  bool looks_json = first != std::string_view::npos && document[first] == '{';
  return load_schema(document, looks_json ? SchemaFormat::Json : SchemaFormat::Yaml);
}

SchemaModel load_schema_source(const std::string& source) {
  return load_schema(read_source(source));
}

}  // namespace restsec
