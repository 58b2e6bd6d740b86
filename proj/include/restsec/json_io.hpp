#pragma once

#include "restsec/auth.hpp"
#include "restsec/schema.hpp"
#include "restsec/test_case.hpp"

namespace restsec {

// JSON encodings shared by the corpus file, the report and the json-plan
// suite. Decoders throw ParseError with the offending JSON path.

json to_json(const EndpointId& id);
EndpointId endpoint_from_json(const json& j, const std::string& where = "endpoint");

json to_json(const HttpAction& action);
HttpAction action_from_json(const json& j, const std::string& where = "call");

json to_json(const Binding& binding);
Binding binding_from_json(const json& j, const std::string& where = "binding");

json to_json(const TestCase& test);
TestCase test_from_json(const json& j, const std::string& where = "test");

json to_json(const ExecutedCall& call);
ExecutedCall executed_from_json(const json& j, const std::string& where = "executed");

json to_json(const AuthIdentity& identity);
AuthIdentity identity_from_json(const json& j, const std::string& where = "identity");

/// Parses text as JSON; ParseError carries the byte offset on failure.
json parse_json_document(std::string_view text, const std::string& what);

}  // namespace restsec
