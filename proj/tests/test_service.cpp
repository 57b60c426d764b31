#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "narraguide/service.hpp"
#include "support.hpp"

using namespace narraguide;
using nlohmann::json;

namespace {

struct SseMessage {
  std::string id, event, data;
};

std::vector<SseMessage> parse_sse(const std::string& body) {
  std::vector<SseMessage> out;
  std::istringstream in(body);
  std::string line;
  SseMessage cur;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!cur.event.empty()) out.push_back(cur);
      cur = {};
    } else if (line.rfind("id: ", 0) == 0) {
      cur.id = line.substr(4);
    } else if (line.rfind("event: ", 0) == 0) {
      cur.event = line.substr(7);
    } else if (line.rfind("data: ", 0) == 0) {
      cur.data = line.substr(6);
    }
  }
  return out;
}

// NDJSON assembled from the `event` messages of a stream.
std::string events_as_log(const std::vector<SseMessage>& msgs) {
  std::string out;
  for (const auto& m : msgs) {
    if (m.event == "event") out += m.data + "\n";
  }
  return out;
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.wall_clock = false;
    service = std::make_unique<Service>(testing_support::museum(), testing_support::demo_backend(), cfg);
    port = service->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(10, 0);
  }
  void TearDown() override { service->stop(); }

  std::string create() {
    auto r = client->Post("/sessions", "", "application/json");
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 201);
    return json::parse(r->body).at("session_id");
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  std::string stream(const std::string& id, const httplib::Headers& headers = {}, const std::string& query = "") {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    std::string body;
    auto r = c.Get("/sessions/" + id + "/events" + query, headers, [&](const char* data, std::size_t n) {
      body.append(data, n);
      return true;
    });
    EXPECT_TRUE(r);
    return body;
  }

  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

}  // namespace

TEST_F(ServiceTest, MapAndSessionCreation) {
  auto m = client->Get("/map");
  ASSERT_TRUE(m);
  EXPECT_EQ(load_map(m->body), *testing_support::museum());

  auto r = client->Post("/sessions", "", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  const auto body = json::parse(r->body);
  EXPECT_EQ(body["session_id"], "s1");
  EXPECT_EQ(body["map_summary"]["exhibits"], 11);
  EXPECT_TRUE(body["start_pose"].contains("theta"));
  EXPECT_EQ(create(), "s2");
}

TEST_F(ServiceTest, UtteranceStartsNavigation) {
  const auto id = create();
  service->advance(id, 1.0);
  auto r = post("/sessions/" + id + "/utterance", {{"text", "go to exhibit 4"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 202);
  auto snap = json::parse(client->Get("/sessions/" + id + "/snapshot")->body);
  EXPECT_EQ(snap["mode"], "autonomous");
  EXPECT_EQ(snap["goal_exhibit"], 4);

  service->advance(id, 60.0);
  snap = json::parse(client->Get("/sessions/" + id + "/snapshot")->body);
  EXPECT_EQ(snap["mode"], "idle");
  EXPECT_EQ(snap["visited"], json::array({4}));

  auto log = client->Get("/sessions/" + id + "/log");
  ASSERT_TRUE(log);
  EXPECT_EQ(log->get_header_value("Content-Type"), "application/x-ndjson");
  EXPECT_EQ(load_log(log->body), service->transcript(id));
}

TEST_F(ServiceTest, ErrorStatuses) {
  auto r = post("/sessions/nope/utterance", {{"text", "hi"}});
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(client->Get("/sessions/nope/snapshot")->status, 404);

  const auto id = create();
  r = post("/sessions/" + id + "/utterance", {{"words", "hi"}});
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "text");
  r = post("/sessions/" + id + "/utterance", {{"text", "   "}});
  EXPECT_EQ(r->status, 422);
  r = post("/sessions/" + id + "/command", {{"cmd", "jump"}});
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "cmd");
  r = post("/sessions/" + id + "/suggestion_response", {{"response", "maybe"}});
  EXPECT_EQ(json::parse(r->body)["field"], "response");
  r = client->Post("/sessions", R"({"silence_threshold": -1})", "application/json");
  EXPECT_EQ(r->status, 422);
  r = client->Post("/sessions", R"({"warp": true})", "application/json");
  EXPECT_EQ(json::parse(r->body)["field"], "warp");

  EXPECT_EQ(client->Delete("/sessions/" + id)->status, 200);
  EXPECT_EQ(post("/sessions/" + id + "/utterance", {{"text", "hi"}})->status, 409);
  EXPECT_EQ(post("/sessions/" + id + "/command", {{"cmd", "stop"}})->status, 409);
  EXPECT_EQ(client->Delete("/sessions/" + id)->status, 409);
}

TEST_F(ServiceTest, CommandsAndSuggestionButtons) {
  const auto id = create();
  EXPECT_EQ(post("/sessions/" + id + "/command", {{"cmd", "forward"}})->status, 202);
  service->advance(id, 2.0);
  service->advance(id, 50.0);
  auto snap = json::parse(client->Get("/sessions/" + id + "/snapshot")->body);
  ASSERT_FALSE(snap["pending_suggestion"].is_null());
  EXPECT_EQ(post("/sessions/" + id + "/suggestion_response", {{"response", "accept"}})->status, 202);
  snap = json::parse(client->Get("/sessions/" + id + "/snapshot")->body);
  EXPECT_EQ(snap["mode"], "autonomous");
}

TEST_F(ServiceTest, StreamMatchesPersistedLog) {
  const auto id = create();
  post("/sessions/" + id + "/utterance", {{"text", "go to exhibit 4"}});
  std::string live;
  std::thread reader([&] { live = stream(id); });
  for (int i = 0; i < 30; ++i) {
    service->advance(id, 2.0);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  post("/sessions/" + id + "/utterance", {{"text", "Tell me more about Galena."}});
  client->Delete("/sessions/" + id);
  reader.join();

  const auto msgs = parse_sse(live);
  const std::string persisted = client->Get("/sessions/" + id + "/log")->body;
  EXPECT_EQ(events_as_log(msgs), persisted);

  // SSE ids are transcript indices; pose updates are interleaved.
  std::size_t expected_id = 0;
  bool saw_pose = false;
  for (const auto& m : msgs) {
    if (m.event == "event") {
      EXPECT_EQ(m.id, std::to_string(expected_id++));
    }
    if (m.event == "pose") {
      saw_pose = true;
      EXPECT_TRUE(json::parse(m.data).contains("speaking"));
    }
  }
  EXPECT_TRUE(saw_pose);

  // The arrival record reaches the stream before the narration it triggers.
  const auto events = load_log(persisted);
  std::size_t arrived = events.size(), narration = events.size();
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].kind == EventKind::arrived && arrived == events.size()) arrived = i;
    if (events[i].kind == EventKind::robot_speech && events[i].payload.at("source") == "arrival" &&
        narration == events.size())
      narration = i;
  }
  ASSERT_LT(arrived, events.size());
  EXPECT_LT(arrived, narration);
}

TEST_F(ServiceTest, ReconnectResumesWithoutGapsOrDuplicates) {
  const auto id = create();
  post("/sessions/" + id + "/utterance", {{"text", "Show me around"}});
  service->advance(id, 80.0);
  client->Delete("/sessions/" + id);
  const std::string full = events_as_log(parse_sse(stream(id)));
  const auto all = load_log(full);
  ASSERT_GT(all.size(), 4u);

  const auto head = parse_sse(stream(id, {}, "?from=0"));
  std::string last_id;
  std::string first_part;
  for (std::size_t i = 0; i < 3; ++i) {
    first_part += head[i].event == "event" ? head[i].data + "\n" : "";
    if (head[i].event == "event") last_id = head[i].id;
  }
  const std::string rest = events_as_log(parse_sse(stream(id, {{"Last-Event-ID", last_id}})));
  EXPECT_EQ(load_log(first_part + rest), all);
  EXPECT_EQ(events_as_log(parse_sse(stream(id, {}, "?from=4"))),
            persist(std::vector<Event>(all.begin() + 4, all.end())));
}

TEST_F(ServiceTest, TwoSubscribersSeeTheSameEvents) {
  const auto id = create();
  std::string a, b;
  std::thread ta([&] { a = stream(id); });
  std::thread tb([&] { b = stream(id); });
  post("/sessions/" + id + "/utterance", {{"text", "Show me around"}});
  for (int i = 0; i < 20; ++i) {
    service->advance(id, 3.0);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  client->Delete("/sessions/" + id);
  ta.join();
  tb.join();
  EXPECT_EQ(events_as_log(parse_sse(a)), events_as_log(parse_sse(b)));
  EXPECT_EQ(events_as_log(parse_sse(a)), persist(service->transcript(id)));
}

TEST_F(ServiceTest, WallClockTickerAdvancesSessions) {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.tick_hz = 50;
  Service live(testing_support::museum(), testing_support::demo_backend(), cfg);
  const int p = live.start();
  httplib::Client c("127.0.0.1", p);
  const auto id = json::parse(c.Post("/sessions", "", "application/json")->body)["session_id"].get<std::string>();
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  const double t = json::parse(c.Get("/sessions/" + id + "/snapshot")->body)["t"];
  EXPECT_GT(t, 0.1);
  live.stop();
}

TEST(ServiceConfigTest, LoadsAndValidates) {
  const auto cfg = service_config_from_json(json::parse(R"({
    "bind": "0.0.0.0", "port": 9000, "map": "m.json",
    "gateway": {"scripted": "r.json"},
    "session": {"silence_threshold": 30, "auto_guide": true}})"));
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.gateway, GatewayKind::scripted);
  EXPECT_EQ(cfg.scripted_path, "r.json");
  EXPECT_DOUBLE_EQ(cfg.session.silence_threshold, 30.0);
  EXPECT_TRUE(cfg.session.auto_guide);

  EXPECT_THROW(service_config_from_json(json::parse(R"({"port": 70000})")), ValidationError);
  EXPECT_THROW(service_config_from_json(json::parse(R"({"gateway": {"scripted": "a", "remote": {}}})")),
               ValidationError);
  EXPECT_THROW(service_config_from_json(json::parse(R"({"session": {"silence_threshold": "soon"}})")), Error);
  EXPECT_THROW(service_config_from_json(json::parse(R"({"tick_hz": 0})")), ValidationError);
}
