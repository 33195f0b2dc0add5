#include "tipping/http_server.hpp"

#include <cstdlib>

#include <httplib.h>

#include "tipping/error.hpp"

namespace tipping::service {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

int status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownSession: return 404;
        case ErrorKind::Io: return 422;
        default: return 400;
    }
}

// Runs a handler, mapping domain and JSON errors onto 4xx responses.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const Error& e) {
        send_json(res, status_for(e.kind()), {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}});
    } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    }
}

nlohmann::json parse_body(const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
    return j;
}

}  // namespace

struct HttpServer::Impl {
    explicit Impl(SessionStore& s) : store(s) {}
    SessionStore& store;
    httplib::Server server;
};

HttpServer::HttpServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
    auto& server = impl_->server;
    SessionStore& sessions = impl_->store;

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });

    server.Get("/sessions", [&sessions](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"sessions", sessions.list()}});
    });

    server.Post("/sessions", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto basin_file = body.at("basin_file").get<std::string>();
            const auto warn = body.value("warn_threshold_n", std::int64_t{0});
            std::optional<std::size_t> layer;
            if (body.contains("layer") && !body.at("layer").is_null()) layer = body.at("layer").get<std::size_t>();
            const std::string id = sessions.create_session(basin_file, warn, layer);
            send_json(res, 201, {{"id", id}});
        });
    });

    server.Post("/sessions/:id/turns", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.path_params.at("id");
            const auto body = parse_body(req);
            const auto role = body.value("role", std::string("user"));
            const bool has_state = body.contains("state");
            const bool has_ref = body.contains("fixture_ref");
            if (has_state == has_ref) {
                throw Error(ErrorKind::InvalidArgument, "give exactly one of \"state\" and \"fixture_ref\"");
            }
            const TraceEntry entry = has_state
                                         ? sessions.append_turn(id, role, body.at("state").get<Vector>())
                                         : sessions.append_fixture_turn(id, role, body.at("fixture_ref").get<std::string>());
            send_json(res, 200, to_json(entry));
        });
    });

    server.Get("/sessions/:id/trace", [&sessions](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.path_params.at("id");
            nlohmann::json trace = nlohmann::json::array();
            for (const auto& e : sessions.trace(id)) trace.push_back(to_json(e));
            send_json(res, 200, {{"id", id}, {"trace", trace}});
        });
    });
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

int resolve_port(int flag_port) {
    if (flag_port > 0) return flag_port;
    if (const char* env = std::getenv("TIPPING_PORT")) {
        char* end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || value <= 0 || value > 65535) {
            throw Error(ErrorKind::InvalidArgument, std::string("TIPPING_PORT is not a port number: ") + env);
        }
        return static_cast<int>(value);
    }
    return 8080;
}

}  // namespace tipping::service
