#pragma once

// Chat-completion backend over HTTP. Any endpoint that speaks the
// chat-completions request/response shape works.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "narraguide/error.hpp"
#include "narraguide/llm_gateway.hpp"

namespace narraguide {

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws Timeout when no response arrives within `timeout` seconds.
  virtual HttpResponse post_json(const std::string& url, const std::string& bearer, const std::string& body,
                                 double timeout) = 0;
};

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post_json(const std::string& url, const std::string& bearer, const std::string& body,
                         double timeout) override {
    ++network_request_counter();
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + url);
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    if (!client.is_valid()) throw ValidationError("unsupported endpoint URL: " + url);
    const auto usec = std::chrono::microseconds(static_cast<long long>(timeout * 1e6));
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(usec);
    const auto rest = usec - secs;
    client.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(rest.count()));
    client.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(rest.count()));
    client.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(rest.count()));
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!res) {
      throw Timeout("no response from " + origin + " (" + httplib::to_string(res.error()) + ")");
    }
    if (elapsed > timeout) throw Timeout("deadline of " + std::to_string(timeout) + " s exceeded");
    return {res->status, res->body};
  }
};

struct RemoteConfig {
  std::string endpoint;  // full URL of the chat-completions route
  std::string credential;
  std::string model;
  double deadline = 20.0;  // default per-call deadline handed to requests

  /// NARRAGUIDE_ENDPOINT, NARRAGUIDE_API_KEY, NARRAGUIDE_MODEL, NARRAGUIDE_DEADLINE.
  static RemoteConfig from_env() { return from_env(RemoteConfig{}); }
  static RemoteConfig from_env(RemoteConfig base) {
    if (const char* v = std::getenv("NARRAGUIDE_ENDPOINT")) base.endpoint = v;
    if (const char* v = std::getenv("NARRAGUIDE_API_KEY")) base.credential = v;
    if (const char* v = std::getenv("NARRAGUIDE_MODEL")) base.model = v;
    if (const char* v = std::getenv("NARRAGUIDE_DEADLINE")) base.deadline = std::strtod(v, nullptr);
    return base;
  }

  void validate() const {
    if (endpoint.empty()) throw ValidationError("remote backend needs an endpoint URL");
    if (model.empty()) throw ValidationError("remote backend needs a model name");
    if (!(deadline > 0.0)) throw ValidationError("remote deadline must be > 0");
  }
};

class RemoteBackend : public LlmBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg, std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>())
      : cfg_(std::move(cfg)), transport_(std::move(transport)) {
    cfg_.validate();
  }

  std::string complete_once(const GatewayRequest& req) override {
    const nlohmann::json reply = send(request_body(req), req.deadline);
    try {
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      if (content.is_string()) return content.get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    throw BackendError("completion response has no message content");
  }

  FieldMap extract_once(const GatewayRequest& req, std::span<const FieldDescriptor> schema) override {
    nlohmann::json properties = nlohmann::json::object();
    nlohmann::json required = nlohmann::json::array();
    for (const auto& f : schema) {
      const char* type = "string";
      switch (f.type) {
        case FieldType::integer: type = "integer"; break;
        case FieldType::number: type = "number"; break;
        case FieldType::string: type = "string"; break;
        case FieldType::boolean: type = "boolean"; break;
      }
      properties[f.name] = {{"type", type}, {"description", f.description}};
      required.push_back(f.name);
    }
    nlohmann::json body = request_body(req);
    body["tools"] = nlohmann::json::array(
        {{{"type", "function"},
          {"function", {{"name", "record_fields"},
                        {"description", "Record the requested fields."},
                        {"parameters", {{"type", "object"}, {"properties", properties}, {"required", required}}}}}}});
    body["tool_choice"] = {{"type", "function"}, {"function", {{"name", "record_fields"}}}};

    const nlohmann::json reply = send(body, req.deadline);
    nlohmann::json values = nlohmann::json::object();
    try {
      const auto& message = reply.at("choices").at(0).at("message");
      if (message.contains("tool_calls") && !message.at("tool_calls").empty()) {
        values = nlohmann::json::parse(message.at("tool_calls").at(0).at("function").at("arguments").get<std::string>(),
                                       nullptr, false);
      } else if (message.contains("content") && message.at("content").is_string()) {
        values = nlohmann::json::parse(message.at("content").get<std::string>(), nullptr, false);
      }
    } catch (const nlohmann::json::exception&) {
    }
    return detail::check_fields(values, schema);
  }

  const RemoteConfig& config() const { return cfg_; }

 private:
  nlohmann::json request_body(const GatewayRequest& req) const {
    return {{"model", cfg_.model},
            {"messages", nlohmann::json::array({{{"role", "system"}, {"content", req.system_text}},
                                                {{"role", "user"}, {"content", req.user_text}}})},
            {"max_tokens", req.max_tokens},
            {"temperature", req.temperature}};
  }

  nlohmann::json send(const nlohmann::json& body, double deadline) {
    const HttpResponse res = transport_->post_json(cfg_.endpoint, cfg_.credential, body.dump(), deadline);
    if (res.status < 200 || res.status >= 300) throw RemoteError(res.status, res.body);
    auto reply = nlohmann::json::parse(res.body, nullptr, false);
    if (reply.is_discarded()) throw BackendError("endpoint returned malformed JSON");
    return reply;
  }

  RemoteConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace narraguide
