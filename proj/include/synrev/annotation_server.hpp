#pragma once

#include <synrev/annotation.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace synrev::annotation {

/// HTTP + JSON front of a SessionStore, versioned under /api/v1. Callers
/// authenticate with the bearer tokens issued at session creation.
class Server {
public:
    explicit Server(SessionStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~Server();

    /// Binds to an ephemeral port and returns it; pair with run().
    int bind_any_port(const std::string& host);
    bool bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code as returned by the server.
int http_status_for(ErrorCode code);

} // namespace synrev::annotation
