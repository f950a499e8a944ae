#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace regrel {

using json = nlohmann::json;

/// Where a remote provider lives and how hard to try reaching it.
struct HttpEndpoint {
    std::string base_url;  // scheme://host[:port][/prefix]
    std::string token;     // sent as "Authorization: Bearer <token>" when non-empty
    std::chrono::milliseconds timeout{30000};
    int max_retries = 1;
    std::chrono::milliseconds initial_backoff{200};
};

/// Reads `<prefix>_URL` and `<prefix>_TOKEN` from the environment.
/// Throws ValidationError when the URL variable is unset.
HttpEndpoint endpoint_from_env(const std::string& prefix);

/// POSTs a JSON body and returns the parsed JSON reply. Transport failures and
/// non-2xx statuses are retried with exponential backoff, then surface as
/// TransportError carrying the number of retries performed.
json post_json(const HttpEndpoint& endpoint, const std::string& path, const json& body);

}  // namespace regrel
