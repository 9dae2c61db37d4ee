#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "rollcall/json_io.hpp"
#include "rollcall/sync.hpp"

namespace rollcall {

/// Blocking JSON client for the central REST API. One instance holds one
/// keep-alive connection; use one per thread.
class ApiClient {
 public:
  using Params = std::multimap<std::string, std::string>;

  struct Response {
    int status = 0;
    std::string body;
    std::string content_type;
  };

  /// `base_url` is http://host:port.
  explicit ApiClient(const std::string& base_url,
                     std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~ApiClient();
  ApiClient(ApiClient&&) noexcept;
  ApiClient& operator=(ApiClient&&) noexcept;

  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& token() const { return token_; }

  /// Raw exchange; throws kNetwork or kConnectionRefused when no response
  /// arrives. HTTP error statuses are returned, not thrown.
  Response get(const std::string& path, const Params& params = {});
  Response post(const std::string& path, const Json& body);
  Response put(const std::string& path, const Json& body);

  /// As above, but a 4xx/5xx reply becomes the Error named in its body.
  Json get_json(const std::string& path, const Params& params = {});
  Json post_json(const std::string& path, const Json& body);
  Json put_json(const std::string& path, const Json& body);

  /// POST /api/v1/auth/login and keep the token.
  Json login(const std::string& username, const std::string& password);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string token_;
};

/// Throws the Error carried by an API error response.
[[noreturn]] void throw_api_error(const ApiClient::Response& response);

/// SyncTransport over the REST endpoints.
class HttpSyncTransport final : public SyncTransport {
 public:
  explicit HttpSyncTransport(const std::string& base_url,
                             std::chrono::milliseconds timeout = std::chrono::seconds(10));

  std::string authenticate(const std::string& edge_node_id, const std::string& secret) override;
  PushResult push(const std::string& token, const SyncBatch& batch) override;
  RosterDelta pull(const std::string& token, std::uint64_t since) override;

 private:
  ApiClient client_;
};

}  // namespace rollcall
