#pragma once

#include <memory>
#include <string>

#include "kernelsmith/service.hpp"

namespace ks {

// Binds the JSON API of an ExpansionService to an HTTP listener. The
// service must outlive the server.
class HttpServer {
 public:
  explicit HttpServer(const ExpansionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws kIoError.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void serve();
  // Blocks until serve() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ks
