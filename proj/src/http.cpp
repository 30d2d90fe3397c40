#include <synrev/error.hpp>
#include <synrev/http.hpp>
#include <synrev/util.hpp>

#include <httplib.h>

namespace synrev::http {

Url parse_url(std::string_view url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw Error(ErrorCode::ConfigError, "not an absolute URL: '" + std::string(url) + "'");
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw Error(ErrorCode::ConfigError, "unsupported URL scheme '" + std::string(scheme) + "'");
    auto path_start = url.find('/', scheme_end + 3);
    Url out;
    if (path_start == std::string_view::npos) {
        out.origin = std::string(url);
        out.path = "/";
    } else {
        out.origin = std::string(url.substr(0, path_start));
        out.path = std::string(url.substr(path_start));
    }
    return out;
}

std::optional<std::string> Response::header(std::string_view name) const
{
    auto it = headers.find(to_lower_ascii(name));
    if (it == headers.end())
        return std::nullopt;
    return it->second;
}

Response send(const Request& request)
{
    auto url = parse_url(request.url);
    httplib::Client client(url.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    client.set_follow_location(true);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers)
        headers.emplace(k, v);

    httplib::Result res{nullptr, httplib::Error::Unknown};
    if (request.method == "GET")
        res = client.Get(url.path, headers);
    else if (request.method == "POST")
        res = client.Post(url.path, headers, request.body, request.content_type);
    else
        throw Error(ErrorCode::ConfigError, "unsupported HTTP method " + request.method);

    if (!res) {
        auto err = res.error();
        auto what = request.method + " " + request.url + ": " + httplib::to_string(err);
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read
            || err == httplib::Error::Write)
            throw Error(ErrorCode::Timeout, what);
        throw Error(ErrorCode::HostUnavailable, what);
    }
    Response out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers)
        out.headers.emplace(to_lower_ascii(k), v);
    return out;
}

std::optional<double> retry_after_seconds(const Response& r)
{
    auto v = r.header("retry-after");
    if (!v)
        return std::nullopt;
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace synrev::http
