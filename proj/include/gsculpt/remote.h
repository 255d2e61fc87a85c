#pragma once

#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace gsculpt {

// Splits "http://host:port/prefix" into client base and path prefix.
// Throws kInvalidArgument on anything else.
std::pair<std::string, std::string> SplitEndpoint(const std::string& endpoint);

// POSTs a JSON body to endpoint + route and parses the JSON reply. Transport
// errors, non-200 replies and unparsable bodies all raise kRemoteUnavailable.
nlohmann::json PostJson(const std::string& endpoint, const std::string& route,
                        const nlohmann::json& body);

}  // namespace gsculpt
