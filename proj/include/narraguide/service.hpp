#pragma once

// HTTP surface: session lifecycle, console commands, snapshots, logs and a
// server-sent event stream per session.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "narraguide/dialogue.hpp"
#include "narraguide/error.hpp"
#include "narraguide/event.hpp"
#include "narraguide/llm_gateway.hpp"
#include "narraguide/remote_backend.hpp"
#include "narraguide/session.hpp"
#include "narraguide/worldmap.hpp"

namespace narraguide {

/// A request body field that is missing or has the wrong type (HTTP 422).
class FieldError : public Error {
 public:
  FieldError(std::string field, const std::string& what) : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class GatewayKind { scripted, remote };

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string map_path;
  GatewayKind gateway = GatewayKind::scripted;
  std::string scripted_path;  // rules file; empty uses the built-in default response
  RemoteConfig remote;
  std::string prompt_template_path;
  std::string static_dir;  // console assets, optional
  SessionConfig session;
  double tick_hz = 10.0;
  bool wall_clock = true;  // false: sessions advance only through Service::advance

  void validate() const {
    if (!(tick_hz > 0.0)) throw ValidationError("tick_hz must be > 0");
    if (port < 0 || port > 65535) throw ValidationError("port out of range");
    if (gateway == GatewayKind::remote) {
      remote.validate();
      if (!scripted_path.empty()) throw ValidationError("select exactly one gateway backend");
    }
    session.validate();
  }
};

namespace detail {

inline double number_field(const nlohmann::json& body, const char* key) {
  const auto& v = body.at(key);
  if (!v.is_number()) throw FieldError(key, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline bool bool_field(const nlohmann::json& body, const char* key) {
  const auto& v = body.at(key);
  if (!v.is_boolean()) throw FieldError(key, std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

}  // namespace detail

/// Applies {silence_threshold, auto_guide, barge_in, speech_rate, linear_speed,
/// angular_speed, step_distance, step_angle} overrides; unknown or mistyped
/// fields raise FieldError.
inline SessionConfig apply_session_overrides(SessionConfig cfg, const nlohmann::json& body) {
  if (body.is_null()) return cfg;
  if (!body.is_object()) throw FieldError("body", "request body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    if (key == "silence_threshold") cfg.silence_threshold = detail::number_field(body, "silence_threshold");
    else if (key == "auto_guide") cfg.auto_guide = detail::bool_field(body, "auto_guide");
    else if (key == "barge_in") cfg.barge_in = detail::bool_field(body, "barge_in");
    else if (key == "speech_rate") cfg.speech_rate = detail::number_field(body, "speech_rate");
    else if (key == "linear_speed") cfg.motion.linear_speed = detail::number_field(body, "linear_speed");
    else if (key == "angular_speed") cfg.motion.angular_speed = detail::number_field(body, "angular_speed");
    else if (key == "step_distance") cfg.motion.step_distance = detail::number_field(body, "step_distance");
    else if (key == "step_angle") cfg.motion.step_angle = detail::number_field(body, "step_angle");
    else throw FieldError(key, "unknown field '" + key + "'");
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw FieldError("body", e.what());
  }
  return cfg;
}

/// Config document:
///   {"bind", "port", "map", "static_dir", "prompt_template", "tick_hz", "wall_clock",
///    "gateway": {"scripted": path} | {"remote": {"endpoint", "model", "deadline"}},
///    "session": {session overrides}}
/// Environment overrides: NARRAGUIDE_MAP plus the remote variables read by
/// RemoteConfig::from_env. The credential is only taken from the environment.
inline ServiceConfig service_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("service config must be a JSON object");
  ServiceConfig cfg;
  try {
    cfg.bind = doc.value("bind", cfg.bind);
    cfg.port = doc.value("port", cfg.port);
    cfg.map_path = doc.value("map", cfg.map_path);
    cfg.static_dir = doc.value("static_dir", cfg.static_dir);
    cfg.prompt_template_path = doc.value("prompt_template", cfg.prompt_template_path);
    cfg.tick_hz = doc.value("tick_hz", cfg.tick_hz);
    cfg.wall_clock = doc.value("wall_clock", cfg.wall_clock);
    if (doc.contains("gateway")) {
      const auto& g = doc.at("gateway");
      const bool scripted = g.contains("scripted");
      const bool remote = g.contains("remote");
      if (scripted == remote) throw ValidationError("gateway must name exactly one of 'scripted' or 'remote'");
      if (scripted) {
        cfg.gateway = GatewayKind::scripted;
        cfg.scripted_path = g.at("scripted").get<std::string>();
      } else {
        const auto& r = g.at("remote");
        cfg.gateway = GatewayKind::remote;
        cfg.remote.endpoint = r.value("endpoint", std::string());
        cfg.remote.model = r.value("model", std::string());
        cfg.remote.deadline = r.value("deadline", cfg.remote.deadline);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("service config: ") + e.what());
  }
  if (doc.contains("session")) {
    try {
      cfg.session = apply_session_overrides(cfg.session, doc.at("session"));
    } catch (const FieldError& e) {
      throw ValidationError("service config session." + e.field() + ": " + e.what());
    }
  }
  // Remote credentials arrive later from the environment, so only local checks here.
  if (!(cfg.tick_hz > 0.0)) throw ValidationError("tick_hz must be > 0");
  if (cfg.port < 0 || cfg.port > 65535) throw ValidationError("port out of range");
  return cfg;
}

inline ServiceConfig apply_env_overrides(ServiceConfig cfg) {
  if (const char* v = std::getenv("NARRAGUIDE_MAP")) cfg.map_path = v;
  cfg.remote = RemoteConfig::from_env(cfg.remote);
  return cfg;
}

class Service {
 public:
  using DialogueFactory = std::function<DialogueSystem()>;

  Service(std::shared_ptr<const AnnotatedMap> map, DialogueFactory factory, ServiceConfig cfg)
      : map_(std::move(map)), factory_(std::move(factory)), cfg_(std::move(cfg)) {
    cfg_.validate();
    routes();
  }

  /// Rule-based dialogue over a shared gateway.
  Service(std::shared_ptr<const AnnotatedMap> map, std::shared_ptr<LlmBackend> gateway, ServiceConfig cfg,
          PromptTemplate tmpl = PromptTemplate::standard())
      : Service(map,
                [map, gateway, tmpl] { return DialogueSystem::with_rules(map, gateway, tmpl); },
                std::move(cfg)) {}

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    int port = cfg_.port;
    if (port == 0) {
      port = server_.bind_to_any_port(cfg_.bind);
    } else if (!server_.bind_to_port(cfg_.bind, port)) {
      port = -1;
    }
    if (port < 0) throw IoError("could not bind " + cfg_.bind + ":" + std::to_string(cfg_.port));
    port_ = port;
    running_ = true;
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    if (cfg_.wall_clock) ticker_ = std::thread([this] { tick_loop(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    if (!running_.exchange(false)) return;
    {
      std::lock_guard lk(sessions_mu_);
      for (auto& [id, h] : sessions_) {
        std::lock_guard hl(h->mu);
        h->cv.notify_all();
      }
    }
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (ticker_.joinable()) ticker_.join();
  }

  int port() const { return port_; }

  std::string create_session(const nlohmann::json& overrides = nullptr) {
    SessionConfig sc = apply_session_overrides(cfg_.session, overrides);
    std::lock_guard lk(sessions_mu_);
    const std::string id = "s" + std::to_string(++next_id_);
    sessions_.emplace(id, std::make_shared<Handle>(id, factory_(), sc));
    return id;
  }

  /// Advances one session on the virtual clock (headless and tests).
  std::vector<Event> advance(const std::string& id, double dt) {
    auto h = find(id);
    if (!h) throw Error("unknown session " + id);
    std::lock_guard lk(h->mu);
    auto events = h->session.advance(dt);
    ++h->version;
    h->cv.notify_all();
    return events;
  }

  std::vector<Event> transcript(const std::string& id) {
    auto h = find(id);
    if (!h) throw Error("unknown session " + id);
    std::lock_guard lk(h->mu);
    return h->session.transcript();
  }

  httplib::Server& server() { return server_; }

 private:
  struct Handle {
    Handle(const std::string& id, DialogueSystem dialogue, SessionConfig cfg) : session(id, std::move(dialogue), cfg) {}
    std::mutex mu;
    std::condition_variable cv;
    Session session;
    std::uint64_t version = 0;
  };

  std::shared_ptr<Handle> find(const std::string& id) {
    std::lock_guard lk(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    nlohmann::json body = {{"error", message}};
    if (!field.empty()) body["field"] = field;
    reply(res, status, body);
  }

  static nlohmann::json parse_body(const httplib::Request& req, bool allow_empty) {
    if (req.body.empty()) {
      if (allow_empty) return nullptr;
      throw FieldError("body", "request body is required");
    }
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw FieldError("body", "request body is not valid JSON");
    if (!j.is_object()) throw FieldError("body", "request body must be a JSON object");
    return j;
  }

  static std::string string_field(const nlohmann::json& body, const char* key) {
    if (!body.contains(key)) throw FieldError(key, std::string("missing field '") + key + "'");
    if (!body.at(key).is_string()) throw FieldError(key, std::string("field '") + key + "' must be a string");
    return body.at(key).get<std::string>();
  }

  // Runs `fn` on the session under its lock and maps errors to statuses.
  template <typename Fn>
  void with_session(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    auto h = find(req.path_params.at("id"));
    if (!h) return fail(res, 404, "unknown session");
    try {
      std::lock_guard lk(h->mu);
      fn(*h);
      ++h->version;
      h->cv.notify_all();
    } catch (const SessionClosed& e) {
      fail(res, 409, e.what());
    } catch (const FieldError& e) {
      fail(res, 422, e.what(), e.field());
    } catch (const EmptyUtterance& e) {
      fail(res, 422, e.what(), "text");
    } catch (const Error& e) {
      fail(res, 500, e.what());
    }
  }

  void routes() {
    server_.Get("/map", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(serialize_map(*map_), "application/json");
    });

    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const std::string id = create_session(parse_body(req, true));
        auto h = find(id);
        std::lock_guard lk(h->mu);
        const Pose p = h->session.robot().pose;
        reply(res, 201,
              {{"session_id", id},
               {"start_pose", {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}},
               {"map_summary",
                {{"width", map_->grid().width()},
                 {"height", map_->grid().height()},
                 {"resolution", map_->grid().resolution()},
                 {"areas", map_->areas().size()},
                 {"exhibits", map_->exhibits().size()},
                 {"tour_order", map_->tour_order()}}}});
      } catch (const FieldError& e) {
        fail(res, 422, e.what(), e.field());
      }
    });

    server_.Post("/sessions/:id/utterance", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Handle& h) {
        const std::string text = string_field(parse_body(req, false), "text");
        h.session.submit_utterance(text);
        reply(res, 202, {{"accepted", true}});
      });
    });

    server_.Post("/sessions/:id/command", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Handle& h) {
        const std::string name = string_field(parse_body(req, false), "cmd");
        auto cmd = parse_low_level_command(name);
        if (!cmd) throw FieldError("cmd", "cmd must be one of forward, backward, turn_left, turn_right, stop");
        h.session.press(*cmd);
        reply(res, 202, {{"accepted", true}});
      });
    });

    server_.Post("/sessions/:id/suggestion_response", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Handle& h) {
        const std::string answer = string_field(parse_body(req, false), "response");
        if (answer != "accept" && answer != "reject") throw FieldError("response", "response must be accept or reject");
        h.session.respond_suggestion(answer == "accept");
        reply(res, 202, {{"accepted", true}});
      });
    });

    server_.Get("/sessions/:id/snapshot", [this](const httplib::Request& req, httplib::Response& res) {
      auto h = find(req.path_params.at("id"));
      if (!h) return fail(res, 404, "unknown session");
      std::lock_guard lk(h->mu);
      reply(res, 200, snapshot_to_json(h->session.snapshot()));
    });

    server_.Get("/sessions/:id/log", [this](const httplib::Request& req, httplib::Response& res) {
      auto h = find(req.path_params.at("id"));
      if (!h) return fail(res, 404, "unknown session");
      std::lock_guard lk(h->mu);
      res.set_content(persist(h->session.transcript()), "application/x-ndjson");
    });

    server_.Delete("/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Handle& h) {
        h.session.close();
        reply(res, 200, {{"closed", true}});
      });
    });

    server_.Get("/sessions/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      auto h = find(req.path_params.at("id"));
      if (!h) return fail(res, 404, "unknown session");
      std::size_t from = 0;
      try {
        if (req.has_param("from")) from = std::stoul(req.get_param_value("from"));
        else if (req.has_header("Last-Event-ID")) from = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
      } catch (const std::exception&) {
        return fail(res, 422, "from must be a non-negative integer", "from");
      }
      stream(h, from, res);
    });

    if (!cfg_.static_dir.empty()) server_.set_mount_point("/", cfg_.static_dir);
  }

  // Server-sent events: `event: event` carries transcript records with their
  // index as the SSE id; `event: pose` carries robot state updates.
  void stream(const std::shared_ptr<Handle>& h, std::size_t from, httplib::Response& res) {
    res.set_header("Cache-Control", "no-cache");
    auto cursor = std::make_shared<std::size_t>(from);
    auto seen_version = std::make_shared<std::uint64_t>(~std::uint64_t{0});
    res.set_chunked_content_provider(
        "text/event-stream", [this, h, cursor, seen_version](std::size_t, httplib::DataSink& sink) {
          std::string out;
          bool finished = false;
          {
            std::unique_lock lk(h->mu);
            h->cv.wait_for(lk, std::chrono::milliseconds(200), [&] {
              return !running_ || h->session.transcript().size() > *cursor || h->version != *seen_version ||
                     h->session.closed();
            });
            const auto& log = h->session.transcript();
            for (; *cursor < log.size(); ++*cursor) {
              out += "id: " + std::to_string(*cursor) + "\nevent: event\ndata: " + event_to_line(log[*cursor]) + "\n\n";
            }
            if (h->version != *seen_version) {
              *seen_version = h->version;
              const Snapshot s = h->session.snapshot();
              nlohmann::json pose = {{"t", s.t},
                                     {"x", s.pose.x},
                                     {"y", s.pose.y},
                                     {"theta", s.pose.theta},
                                     {"mode", to_string(s.mode)},
                                     {"speaking", s.speaking}};
              out += "event: pose\ndata: " + pose.dump() + "\n\n";
            }
            finished = h->session.closed() || !running_;
          }
          if (!out.empty() && !sink.write(out.data(), out.size())) return false;
          if (finished) {
            sink.done();
            return true;
          }
          return sink.is_writable();
        });
  }

  void tick_loop() {
    const auto period = std::chrono::duration<double>(1.0 / cfg_.tick_hz);
    auto last = std::chrono::steady_clock::now();
    while (running_) {
      std::this_thread::sleep_for(period);
      const auto now = std::chrono::steady_clock::now();
      const double dt = std::chrono::duration<double>(now - last).count();
      last = now;
      std::vector<std::shared_ptr<Handle>> handles;
      {
        std::lock_guard lk(sessions_mu_);
        for (auto& [id, h] : sessions_) handles.push_back(h);
      }
      for (auto& h : handles) {
        std::lock_guard lk(h->mu);
        if (h->session.closed()) continue;
        h->session.advance(dt);
        ++h->version;
        h->cv.notify_all();
      }
    }
  }

  std::shared_ptr<const AnnotatedMap> map_;
  DialogueFactory factory_;
  ServiceConfig cfg_;
  httplib::Server server_;
  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Handle>> sessions_;
  std::uint64_t next_id_ = 0;
  std::atomic<bool> running_{false};
  int port_ = 0;
  std::thread listener_;
  std::thread ticker_;
};

}  // namespace narraguide
