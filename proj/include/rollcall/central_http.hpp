#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "rollcall/central.hpp"

namespace rollcall {

/// REST front end for a CentralService. Routes live under /api/v1 and are
/// documented in docs/api.md; errors are {"error": <code>, "message": ...}
/// with the status from http_status().
class CentralHttpServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    int threads = 32;
    /// Sent as Access-Control-Allow-Origin; empty disables CORS headers.
    std::string cors_origin = "*";
  };

  CentralHttpServer(CentralService& central, Options options);
  ~CentralHttpServer();
  CentralHttpServer(const CentralHttpServer&) = delete;
  CentralHttpServer& operator=(const CentralHttpServer&) = delete;

  /// Binds and serves on a background thread. Throws kConfig when the
  /// address cannot be bound.
  void start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;

  void bind();

  CentralService& central_;
  Options options_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace rollcall
