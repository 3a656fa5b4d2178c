#pragma once

// HTTP/1.1 binding of Service over cpp-httplib.

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include "ridgeview/service.hpp"

namespace ridgeview {

class HttpServer {
public:
    explicit HttpServer(Service& service) : service_(service) {
        const bool cors = service_.config().cors_allowed;
        auto send = [cors](httplib::Response& res, const Response& r) {
            res.status = r.status;
            if (!r.etag.empty()) res.set_header("ETag", r.etag);
            if (cors) res.set_header("Access-Control-Allow-Origin", "*");
            res.set_content(r.body, r.content_type);
        };
        server_.Get(R"(/.*)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, service_.handle_get(req.path, req.get_header_value("If-None-Match")));
        });
        server_.Post(R"(/session/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, service_.handle_session_event(req.matches[1].str(), req.body));
        });
        if (cors) {
            server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
                res.set_header("Access-Control-Allow-Origin", "*");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type, If-None-Match");
                res.status = 204;
            });
        }
    }

    ~HttpServer() { stop(); }

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host, int port) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) fail(ErrorKind::usage, "cannot listen on " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    /// Blocks until stop() is called from elsewhere.
    void listen(const std::string& host, int port) {
        if (!server_.listen(host, port)) fail(ErrorKind::usage, "cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    Service& service_;
    httplib::Server server_;
    std::thread thread_;
};

} // namespace ridgeview
