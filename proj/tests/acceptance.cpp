// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "narraguide/analysis.hpp"
#include "narraguide/dialogue.hpp"
#include "narraguide/event.hpp"
#include "narraguide/navsim.hpp"
#include "narraguide/service.hpp"
#include "narraguide/session.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace narraguide;
using namespace testing_support;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<const Event*> of_kind(const std::vector<Event>& log, EventKind kind, const char* source = nullptr) {
  std::vector<const Event*> out;
  for (const auto& e : log) {
    if (e.kind == kind && (source == nullptr || e.payload.at("source") == source)) out.push_back(&e);
  }
  return out;
}

void intent_fixtures() {
  const auto t0 = std::chrono::steady_clock::now();
  RuleBasedClassifier c(*museum());
  for (const auto* set : {&kQuoted, &kHandLabeled}) {
    for (const auto& [text, intent] : *set) {
      const Intent got = c.classify(text);
      require(got == intent, std::string(text) + " -> " + std::string(to_string(got)));
    }
  }
  require(kHandLabeled.size() >= 30, "fewer than 30 hand-labeled utterances");
  require(seconds_since(t0) < 1.0, "classification took over 1 s");
}

void planner_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  int cases = 0;
  for (std::uint32_t seed = 1; cases < 50; ++seed) {
    std::mt19937 rng(seed);
    std::bernoulli_distribution wall(0.2);
    std::uniform_int_distribution<int> coord(0, 19);
    std::vector<std::uint8_t> occ(400);
    for (auto& v : occ) v = wall(rng) ? 1 : 0;
    const int sc = coord(rng), sr = coord(rng), gc = coord(rng), gr = coord(rng);
    occ[static_cast<std::size_t>(sr * 20 + sc)] = 0;
    occ[static_cast<std::size_t>(gr * 20 + gc)] = 0;
    const auto oracle = bfs_distance(20, 20, occ, sc, sr, gc, gr);
    if (!oracle) continue;
    ++cases;
    GridMap g(1.0, {0.0, 0.0}, 20, 20, occ);
    Area a{"all", "All", "", {}};
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g.occupied(g.cell_at(i))) a.cell_ids.push_back(i);
    }
    Exhibit e;
    e.id = 1;
    e.name = "Goal";
    e.area_id = "all";
    e.viewing_pose = Pose(gc + 0.5, gr + 0.5, 0.0);
    e.intro = "intro";
    e.sample_dialogue = {{Speaker::guide, "q"}, {Speaker::visitor, "a"}};
    const AnnotatedMap m(g, {a}, {e}, {1});
    const Plan p = plan_path(m, Pose(sc + 0.5, sr + 0.5, 0.0), 1);
    require(p.cells.size() == static_cast<std::size_t>(*oracle) + 1, "seed " + std::to_string(seed) + " not optimal");
  }
  require(seconds_since(t0) < 1.0, "50 plans took over 1 s");
}

void arrival_contract() {
  const auto& m = *museum();
  const MotionConfig cfg;
  auto run = [&](int id) {
    RobotState s;
    s.pose = m.start_pose();
    s = begin_autonomous(s, plan_path(m, s.pose, id));
    for (int i = 0; i < 20000; ++i) {
      auto r = tick(s, 0.1, cfg);
      s = std::move(r.state);
      if (r.arrived) return std::make_pair(*r.arrived, s.pose);
    }
    throw Failed("exhibit " + std::to_string(id) + " never reached");
  };
  for (const auto& e : m.exhibits()) {
    const auto [arrived, pose] = run(e.id);
    require(arrived == e.id, "arrived at the wrong exhibit");
    require(distance(pose.position(), e.viewing_pose.position()) <= 0.1, "exhibit " + std::to_string(e.id) + " position");
    require(std::abs(normalize_angle(pose.theta - e.viewing_pose.theta)) <= 5.0 * std::numbers::pi / 180.0,
            "exhibit " + std::to_string(e.id) + " heading");
    const auto again = run(e.id).second;
    require(again.x == pose.x && again.y == pose.y && again.theta == pose.theta, "non-deterministic arrival");
  }
}

void suggestion_integrity() {
  const auto& order = museum()->tour_order();
  {
    Session s = make_session();
    std::size_t seen = 0;
    for (int guard = 0; guard < 40 && s.suggestion().visited.size() < order.size(); ++guard) {
      s.advance(60.0);
      const auto n = of_kind(s.transcript(), EventKind::suggestion).size();
      if (n > seen) {
        seen = n;
        s.respond_suggestion(true);
      }
    }
    std::vector<int> arrivals;
    for (const auto* e : of_kind(s.transcript(), EventKind::arrived)) arrivals.push_back(e->payload.at("exhibit"));
    require(arrivals == order, "accept-until-complete did not follow the tour order exactly once");
  }
  std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
  for (std::uint32_t seed = 0; seed < 200; ++seed) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> action(0, 3);
    Session s = make_session();
    std::size_t seen = 0;
    bool awaiting = false;
    for (int step = 0; step < 2000 && s.suggestion().visited.size() < order.size(); ++step) {
      s.advance(5.0);
      const auto& log = s.transcript();
      for (; seen < log.size(); ++seen) {
        if (log[seen].kind != EventKind::suggestion) continue;
        require(!s.suggestion().is_visited(log[seen].payload.at("exhibit").get<int>()),
                "seed " + std::to_string(seed) + " suggested a visited exhibit");
        awaiting = true;
      }
      if (!awaiting || !s.pending_suggestion() || s.speaking()) continue;
      awaiting = false;
      switch (action(rng)) {
        case 0: s.respond_suggestion(true); break;
        case 1: s.respond_suggestion(false); break;
        case 2: break;
        case 3: s.submit_utterance("go to exhibit " + std::to_string(order[pick(rng)])); break;
      }
    }
  }
}

void proactive_timing() {
  const SessionConfig cfg;
  Session s = make_session(cfg);
  s.advance_until(44.9);
  require(of_kind(s.transcript(), EventKind::robot_speech, "proactive").empty(), "fired before 45 s");
  s.advance_until(45.0);
  const auto fired = of_kind(s.transcript(), EventKind::robot_speech, "proactive");
  require(fired.size() == 1 && fired[0]->t == 45.0, "did not fire exactly once at 45.0 s");

  Session r = make_session(cfg);
  r.advance_until(44.0);
  r.submit_utterance("Hello there!");
  const auto reply = of_kind(r.transcript(), EventKind::robot_speech, "handler");
  require(reply.size() == 1, "no reply to the utterance");
  const double quiet_from = 44.0 + static_cast<double>(reply[0]->payload.at("text").get<std::string>().size()) /
                                       cfg.speech_rate;
  r.advance_until(quiet_from + 44.9);
  require(of_kind(r.transcript(), EventKind::robot_speech, "proactive").empty(), "utterance did not reset the window");
  r.advance_until(quiet_from + 45.0);
  require(of_kind(r.transcript(), EventKind::robot_speech, "proactive").size() == 1, "reset window did not fire");
}

void prompt_conformance() {
  const auto& m = *museum();
  RobotState robot;
  robot.pose = m.exhibit(4).viewing_pose;
  const std::string question = "What is this yellow mineral?";
  const std::string p = build_prompt(Intent::inquiry_about_museum, question, m, robot, {}).render();
  const auto at = [&](const std::string& s) {
    const auto pos = p.find(s);
    require(pos != std::string::npos, "missing section: " + s.substr(0, 40));
    return pos;
  };
  const auto intro = at(m.exhibit(4).intro);
  const auto dialogue = at(render_dialogue(m.exhibit(4).sample_dialogue));
  const auto area = at(m.find_area("minerals")->description);
  require(intro < dialogue && dialogue < area, "sections out of template order");
  std::size_t last = area;
  for (int id : {7, 9, 10}) {
    const auto pos = at(m.exhibit(id).intro);
    require(pos > area, "same-area intro precedes the area text");
    last = std::max(last, pos);
  }
  require(last < at(question), "question precedes the context");
}

void ttest_oracle() {
  const std::vector<double> d = {1, 1, 1, -1}, zero = {0, 0, 0, 0};
  const auto hand = paired_t_test(d, zero);
  require(hand.t_stat == 1.0 && hand.df == 3, "hand case");
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> size(2, 50);
  std::normal_distribution<double> x(0.0, 3.0);
  int checked = 0;
  while (checked < 100) {
    const int n = size(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = x(rng) + 0.5;
      b[i] = x(rng);
    }
    const auto r = paired_t_test(a, b);
    const auto [t, p] = big_ttest(a, b);
    require(std::abs(r.t_stat - t) <= 1e-9 * std::max(1.0, std::abs(t)), "t differs from reference");
    require(std::abs(r.p_two_sided - p) <= 1e-9, "p differs from reference");
    ++checked;
  }
}

void politeness_fixtures() {
  require(code_politeness("could you go to the next exhibit?") == Politeness::polite, "polite example");
  require(code_politeness("go to the next exhibit") == Politeness::direct, "direct example");
  require(code_politeness("next exhibit") == Politeness::direct, "direct fragment");
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string("'") + NARRAGUIDE_CLI + "' " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void end_to_end_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("narraguide_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string base = "run --map '" + data_path("museum11.map") + "' --script '" + data_path("demo.script") +
                           "' --responses '" + data_path("demo_responses.json") + "' --out ";
  const std::string a = (dir / "a.ndjson").string(), b = (dir / "b.ndjson").string();
  const int ca = run_cli(base + "'" + a + "'");
  const int cb = run_cli(base + "'" + b + "'");
  const std::string la = slurp(a), lb = slurp(b);
  std::filesystem::remove_all(dir);
  require(ca == 0 && cb == 0, "cli run failed");
  require(!la.empty() && la == lb, "logs differ between runs");
  require(persist(load_log(la)) == la, "log does not round-trip");
}

void service_contract() {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.wall_clock = false;
  Service service(museum(), demo_backend(), cfg);
  const int port = service.start();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(10, 0);
  auto created = client.Post("/sessions", "", "application/json");
  require(created && created->status == 201, "create failed");
  const std::string id = nlohmann::json::parse(created->body).at("session_id");

  std::string stream;
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    c.Get("/sessions/" + id + "/events", [&](const char* data, std::size_t n) {
      stream.append(data, n);
      return true;
    });
  });
  auto said = client.Post("/sessions/" + id + "/utterance", R"({"text":"go to exhibit 4"})", "application/json");
  require(said && said->status == 202, "utterance rejected");
  const auto snap = nlohmann::json::parse(client.Get("/sessions/" + id + "/snapshot")->body);
  require(snap.at("mode") == "autonomous" && snap.at("goal_exhibit") == 4, "snapshot does not show the goal");
  for (int i = 0; i < 30; ++i) {
    service.advance(id, 2.0);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  client.Delete("/sessions/" + id);
  reader.join();

  std::string streamed;
  std::istringstream in(stream);
  std::string line;
  bool is_event = false;
  while (std::getline(in, line)) {
    if (line == "event: event") is_event = true;
    else if (line.rfind("data: ", 0) == 0 && is_event) streamed += line.substr(6) + "\n";
    else if (line.empty()) is_event = false;
  }
  const std::string stored = client.Get("/sessions/" + id + "/log")->body;
  service.stop();
  require(!stored.empty() && streamed == stored, "stream differs from stored log");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
      {"intent fixture suite", intent_fixtures},
      {"planner optimality", planner_optimality},
      {"arrival contract", arrival_contract},
      {"suggestion integrity", suggestion_integrity},
      {"proactive timing", proactive_timing},
      {"prompt template conformance", prompt_conformance},
      {"t-test oracle", ttest_oracle},
      {"politeness fixtures", politeness_fixtures},
      {"end-to-end determinism", end_to_end_determinism},
      {"service contract", service_contract},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    try {
      check();
      std::cout << "PASS " << name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "FAIL " << name << ": " << e.what() << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}
