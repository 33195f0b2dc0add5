#pragma once

// JSON-over-HTTP front end for a SessionStore.
//
//   GET  /healthz                 {"status":"ok"}
//   GET  /sessions                {"sessions":[ids]}
//   POST /sessions                {basin_file, warn_threshold_n, layer?} -> {id}
//   POST /sessions/{id}/turns     {role, state:[...]} or {role, fixture_ref} -> forecast
//   GET  /sessions/{id}/trace     {id, trace:[...]}

#include <memory>
#include <string>

#include "tipping/forecast_service.hpp"

namespace tipping::service {

class HttpServer {
public:
    explicit HttpServer(SessionStore& store);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Blocks until stop(). Returns false when the address cannot be bound.
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and returns it, or -1; serve with listen_after_bind().
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Port from --port when given, else TIPPING_PORT, else 8080.
int resolve_port(int flag_port);

}  // namespace tipping::service
