#include "regrel/http_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "regrel/error.hpp"

namespace regrel {

namespace {

struct SplitUrl {
    std::string scheme_host_port;
    std::string prefix;
};

SplitUrl split_base_url(const std::string& base_url)
{
    auto scheme_end = base_url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = base_url.find('/', host_start);
    if (path_start == std::string::npos) {
        return {base_url, ""};
    }
    auto prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace

HttpEndpoint endpoint_from_env(const std::string& prefix)
{
    HttpEndpoint endpoint;
    const char* url = std::getenv((prefix + "_URL").c_str());
    if (url == nullptr || *url == '\0') {
        throw ValidationError(prefix + "_URL is not set");
    }
    endpoint.base_url = url;
    if (const char* token = std::getenv((prefix + "_TOKEN").c_str())) {
        endpoint.token = token;
    }
    return endpoint;
}

json post_json(const HttpEndpoint& endpoint, const std::string& path, const json& body)
{
    auto url = split_base_url(endpoint.base_url);
    const auto payload = body.dump();
    auto backoff = endpoint.initial_backoff;
    std::string last_error;

    for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        httplib::Client client(url.scheme_host_port);
        client.set_connection_timeout(endpoint.timeout);
        client.set_read_timeout(endpoint.timeout);
        client.set_write_timeout(endpoint.timeout);
        httplib::Headers headers;
        if (!endpoint.token.empty()) {
            headers.emplace("Authorization", "Bearer " + endpoint.token);
        }
        auto result = client.Post(url.prefix + path, headers, payload, "application/json");
        if (!result) {
            last_error = httplib::to_string(result.error());
        } else if (result->status < 200 || result->status >= 300) {
            last_error = "HTTP " + std::to_string(result->status);
        } else {
            try {
                return json::parse(result->body);
            } catch (const json::parse_error& e) {
                throw ParseError(endpoint.base_url + path + ": invalid JSON reply: " + e.what(),
                                 result->body);
            }
        }
        spdlog::warn("POST {}{} failed (attempt {}): {}", endpoint.base_url, path, attempt + 1,
                     last_error);
    }
    throw TransportError("POST " + endpoint.base_url + path + " failed: " + last_error,
                         endpoint.max_retries);
}

}  // namespace regrel
