#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace synrev::http {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;    // starts with '/', may carry a query
};

/// Splits an absolute http(s) URL. Throws ConfigError on anything else.
Url parse_url(std::string_view url);

struct Response {
    int status = 0;
    std::string body;
    std::multimap<std::string, std::string> headers;  // lowercase names

    std::optional<std::string> header(std::string_view name) const;
};

struct Request {
    std::string method = "GET";
    std::string url;
    std::multimap<std::string, std::string> headers;
    std::string body;
    std::string content_type = "application/json";
    std::chrono::milliseconds timeout{30000};
};

/// Performs one request. Transport failures throw HostUnavailable or Timeout;
/// any HTTP status is returned to the caller.
Response send(const Request& request);

/// Parses a Retry-After header given in seconds.
std::optional<double> retry_after_seconds(const Response& r);

} // namespace synrev::http
