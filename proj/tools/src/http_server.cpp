#include "kernelsmith_tools/http_server.hpp"

#include <httplib.h>

#include "kernelsmith/error.hpp"

namespace ks {

struct HttpServer::Impl {
  explicit Impl(const ExpansionService& s) : service(s) {}

  void reply(const httplib::Request& req, httplib::Response& res) const {
    const HttpReply r = route(service, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  }

  const ExpansionService& service;
  httplib::Server server;
};

HttpServer::HttpServer(const ExpansionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->reply(req, res); };
  // Every API path is registered for both verbs so the router can answer
  // 405 with a JSON body instead of the transport's bare 404.
  for (const char* path : {"/api/expand", "/api/compress", "/api/methods", "/api/health"}) {
    impl_->server.Get(path, handler);
    impl_->server.Post(path, handler);
  }
  impl_->server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 404 ? "not-found" : "http-" + std::to_string(res.status);
    res.set_content(nlohmann::json{{"code", code}, {"message", "no route for " + req.method + " " + req.path}}.dump(),
                    "application/json; charset=utf-8");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ks
