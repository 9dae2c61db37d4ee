#include "rollcall/http_client.hpp"

#include <httplib.h>

#include "rollcall/error.hpp"

namespace rollcall {

struct ApiClient::Impl {
  explicit Impl(const std::string& base_url) : client(base_url) {}
  httplib::Client client;
};

ApiClient::ApiClient(const std::string& base_url, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(base_url)) {
  if (!impl_->client.is_valid()) throw Error(ErrorCode::kConfig, "bad central url '" + base_url + "'");
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout + std::chrono::seconds(35));  // long polls hold up to 30 s
  impl_->client.set_write_timeout(timeout);
  impl_->client.set_keep_alive(true);
  impl_->client.set_tcp_nodelay(true);
}

ApiClient::~ApiClient() = default;
ApiClient::ApiClient(ApiClient&&) noexcept = default;
ApiClient& ApiClient::operator=(ApiClient&&) noexcept = default;

namespace {

httplib::Headers headers_for(const std::string& token) {
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  return headers;
}

ApiClient::Response unwrap(const httplib::Result& result) {
  if (!result) {
    auto err = result.error();
    auto code = err == httplib::Error::Connection ? ErrorCode::kConnectionRefused : ErrorCode::kNetwork;
    throw Error(code, httplib::to_string(err));
  }
  return ApiClient::Response{result->status, result->body, result->get_header_value("Content-Type")};
}

Json checked(const ApiClient::Response& response) {
  if (response.status >= 400) throw_api_error(response);
  if (response.body.empty()) return Json::object();
  try {
    return Json::parse(response.body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kNetwork, std::string("unparseable reply: ") + e.what());
  }
}

}  // namespace

void throw_api_error(const ApiClient::Response& response) {
  Json body;
  try {
    body = Json::parse(response.body);
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kNetwork, "HTTP " + std::to_string(response.status));
  }
  auto code = parse_error_code(body.value("error", ""));
  auto message = body.value("message", "");
  if (!code) throw Error(ErrorCode::kNetwork, "HTTP " + std::to_string(response.status) + ": " + message);
  throw Error(*code, message);
}

ApiClient::Response ApiClient::get(const std::string& path, const Params& params) {
  httplib::Params p(params.begin(), params.end());
  return unwrap(impl_->client.Get(path, p, headers_for(token_)));
}

ApiClient::Response ApiClient::post(const std::string& path, const Json& body) {
  return unwrap(impl_->client.Post(path, headers_for(token_), body.dump(), "application/json"));
}

ApiClient::Response ApiClient::put(const std::string& path, const Json& body) {
  return unwrap(impl_->client.Put(path, headers_for(token_), body.dump(), "application/json"));
}

Json ApiClient::get_json(const std::string& path, const Params& params) { return checked(get(path, params)); }
Json ApiClient::post_json(const std::string& path, const Json& body) { return checked(post(path, body)); }
Json ApiClient::put_json(const std::string& path, const Json& body) { return checked(put(path, body)); }

Json ApiClient::login(const std::string& username, const std::string& password) {
  auto reply = post_json("/api/v1/auth/login", {{"username", username}, {"password", password}});
  token_ = reply.at("token").get<std::string>();
  return reply;
}

HttpSyncTransport::HttpSyncTransport(const std::string& base_url, std::chrono::milliseconds timeout)
    : client_(base_url, timeout) {}

std::string HttpSyncTransport::authenticate(const std::string& edge_node_id, const std::string& secret) {
  client_.set_token({});
  auto reply = client_.post_json("/api/v1/auth/token", {{"edge_node_id", edge_node_id}, {"secret", secret}});
  return reply.at("token").get<std::string>();
}

PushResult HttpSyncTransport::push(const std::string& token, const SyncBatch& batch) {
  client_.set_token(token);
  auto response = client_.post("/api/v1/sync/events", batch);
  if (response.status == 409) {
    auto body = Json::parse(response.body, nullptr, false);
    if (body.is_object() && body.value("error", "") == "SequenceGap") {
      return PushResult{body.at("high_water").get<std::uint64_t>(), 0, true};
    }
  }
  return checked(response).get<PushResult>();
}

RosterDelta HttpSyncTransport::pull(const std::string& token, std::uint64_t since) {
  client_.set_token(token);
  return client_.get_json("/api/v1/sync/roster", {{"since", std::to_string(since)}}).get<RosterDelta>();
}

}  // namespace rollcall
