#include "gsculpt/remote.h"

#include <regex>

#include <httplib.h>

#include "gsculpt/error.h"

namespace gsculpt {

// Splits "http://host:port/prefix" into client base and path prefix.
std::pair<std::string, std::string> SplitEndpoint(const std::string& endpoint) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, kUrl)) {
    throw Error(ErrorCode::kInvalidArgument, "bad endpoint URL '" + endpoint + "'");
  }
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

nlohmann::json PostJson(const std::string& endpoint, const std::string& route,
                        const nlohmann::json& body) {
  const auto [base, prefix] = SplitEndpoint(endpoint);
  httplib::Client client(base);
  client.set_connection_timeout(5);
  client.set_read_timeout(120);
  auto res = client.Post(prefix + route, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kRemoteUnavailable,
                endpoint + route + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kRemoteUnavailable,
                endpoint + route + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kRemoteUnavailable, endpoint + route + ": bad JSON reply");
  }
}

}  // namespace gsculpt
