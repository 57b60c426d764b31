// narraguide: headless tour runs, log analysis and the HTTP service.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or script error,
// 3 map or configuration error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "narraguide/analysis.hpp"
#include "narraguide/remote_backend.hpp"
#include "narraguide/script.hpp"
#include "narraguide/service.hpp"
#include "narraguide/session.hpp"

namespace ng = narraguide;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;
constexpr int kConfig = 3;

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ng::IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw ng::IoError("cannot write " + path);
}

std::shared_ptr<const ng::AnnotatedMap> open_map(const std::string& path) {
  try {
    return std::make_shared<const ng::AnnotatedMap>(ng::load_map(read_file(path)));
  } catch (const ng::Error& e) {
    throw ConfigFailure("map " + path + ": " + e.what());
  }
}

std::shared_ptr<ng::LlmBackend> open_gateway(ng::GatewayKind kind, const std::string& responses,
                                             const ng::RemoteConfig& remote) {
  try {
    if (kind == ng::GatewayKind::remote) return std::make_shared<ng::RemoteBackend>(remote);
    if (responses.empty()) return std::make_shared<ng::ScriptedBackend>();
    return std::make_shared<ng::ScriptedBackend>(ng::ScriptedBackend::from_json(read_file(responses)));
  } catch (const ng::Error& e) {
    throw ConfigFailure(std::string("gateway: ") + e.what());
  }
}

ng::PromptTemplate open_template(const std::string& path) {
  if (path.empty()) return ng::PromptTemplate::standard();
  try {
    return ng::PromptTemplate(read_file(path));
  } catch (const ng::Error& e) {
    throw ConfigFailure("prompt template " + path + ": " + e.what());
  }
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string map;
  std::string script;
  std::string backend = "scripted";
  std::string responses;
  std::string prompt_template;
  std::string out;
  std::uint32_t seed = 0;
  std::optional<double> duration;
  bool auto_guide = false;
  bool barge_in = false;
};

int cmd_run(const RunArgs& a) {
  const auto map = open_map(a.map);
  const auto kind = a.backend == "remote" ? ng::GatewayKind::remote : ng::GatewayKind::scripted;
  const auto gateway = open_gateway(kind, a.responses, ng::RemoteConfig::from_env());
  const auto tmpl = open_template(a.prompt_template);

  std::vector<ng::ScriptStep> steps;
  try {
    steps = ng::parse_script(read_file(a.script));
  } catch (const ng::ParseError& e) {
    std::cerr << a.script << ":" << e.line() << ": " << e.what() << "\n";
    return kUsage;
  }

  ng::RetryPolicy policy;
  policy.seed = a.seed;
  ng::SessionConfig sc;
  sc.auto_guide = a.auto_guide;
  sc.barge_in = a.barge_in;
  ng::Session session("run", ng::DialogueSystem::with_rules(map, gateway, tmpl, policy), sc);
  ng::RunOptions opts;
  opts.duration = a.duration;
  ng::run_script(session, steps, opts);

  const std::string log = ng::persist(session.transcript());
  if (a.out.empty()) std::cout << log;
  else write_file(a.out, log);
  return kOk;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> logs;
  std::string map;
  std::string timeline;
  std::string stats;
};

nlohmann::json compare(const std::vector<double>& a, const std::vector<double>& b, const char* first,
                       const char* second) {
  nlohmann::json j = {{"a", first}, {"b", second}};
  try {
    j["result"] = ng::ttest_to_json(ng::paired_t_test(a, b));
  } catch (const ng::Error& e) {
    j["error"] = e.what();
  }
  return j;
}

int cmd_analyze(const AnalyzeArgs& a) {
  std::shared_ptr<const ng::AnnotatedMap> map;
  if (!a.map.empty()) map = open_map(a.map);

  nlohmann::json sessions = nlohmann::json::array();
  nlohmann::json timelines = nlohmann::json::array();
  std::vector<double> accept, reject, inquiry, control, high, low;
  for (const auto& path : a.logs) {
    std::vector<ng::Event> events;
    try {
      events = ng::load_log(read_file(path));
    } catch (const ng::ParseError& e) {
      std::cerr << path << ":" << e.line() << ": " << e.what() << "\n";
      return kUsage;
    }
    const auto coded = ng::code_utterances(events, map.get());
    const auto outcomes = ng::code_suggestion_responses(events, map.get());
    const auto s = ng::session_stats(coded, outcomes);
    auto row = ng::stats_to_json(s);
    row["log"] = path;
    sessions.push_back(row);
    timelines.push_back({{"log", path}, {"rows", ng::export_timeline(coded)}});
    accept.push_back(s.n_accept);
    reject.push_back(s.n_reject);
    inquiry.push_back(s.n_inquiry);
    control.push_back(s.n_control);
    high.push_back(s.n_high);
    low.push_back(s.n_low);
  }

  nlohmann::json stats = {{"sessions", sessions}};
  if (a.logs.size() >= 2) {
    stats["tests"] = {compare(accept, reject, "n_accept", "n_reject"),
                      compare(inquiry, control, "n_inquiry", "n_control"),
                      compare(high, low, "n_high", "n_low")};
  }

  const nlohmann::json timeline = a.logs.size() == 1 ? timelines.at(0).at("rows") : timelines;
  if (!a.timeline.empty()) write_file(a.timeline, timeline.dump(2) + "\n");
  if (!a.stats.empty()) write_file(a.stats, stats.dump(2) + "\n");
  if (a.stats.empty()) std::cout << stats.dump(2) << "\n";
  return kOk;
}

// --- serve -----------------------------------------------------------------

std::atomic<bool> g_stop{false};

struct ServeArgs {
  std::string config;
  std::string map;
  std::string bind;
  std::optional<int> port;
  std::string backend;
  std::string responses;
  std::string static_dir;
};

int cmd_serve(const ServeArgs& a) {
  ng::ServiceConfig cfg;
  try {
    if (!a.config.empty()) cfg = ng::service_config_from_json(nlohmann::json::parse(read_file(a.config)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigFailure(std::string("config: ") + e.what());
  } catch (const ng::Error& e) {
    throw ConfigFailure(std::string("config: ") + e.what());
  }
  cfg = ng::apply_env_overrides(cfg);
  if (!a.map.empty()) cfg.map_path = a.map;
  if (!a.bind.empty()) cfg.bind = a.bind;
  if (a.port) cfg.port = *a.port;
  if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
  if (a.backend == "remote") {
    cfg.gateway = ng::GatewayKind::remote;
    cfg.scripted_path.clear();
  } else if (a.backend == "scripted") {
    cfg.gateway = ng::GatewayKind::scripted;
  }
  if (!a.responses.empty()) cfg.scripted_path = a.responses;
  if (cfg.map_path.empty()) throw ConfigFailure("no map given (--map, config \"map\" or NARRAGUIDE_MAP)");
  try {
    cfg.validate();
  } catch (const ng::Error& e) {
    throw ConfigFailure(std::string("config: ") + e.what());
  }

  const auto map = open_map(cfg.map_path);
  const auto gateway = open_gateway(cfg.gateway, cfg.scripted_path, cfg.remote);
  ng::Service service(map, gateway, cfg, open_template(cfg.prompt_template_path));
  const int port = service.start();
  std::cerr << "listening on http://" << cfg.bind << ":" << port << "\n";

  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"narraguide: remote museum tour guide simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Play a tour script headlessly on the virtual clock");
  run_cmd->add_option("--map", run.map, "Annotated map document")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--script", run.script, "Tour script")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--backend", run.backend, "Gateway backend")->check(CLI::IsMember({"scripted", "remote"}));
  run_cmd->add_option("--responses", run.responses, "Scripted backend rules (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("--prompt-template", run.prompt_template, "Prompt template file")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Seed for retry jitter");
  run_cmd->add_option("--out", run.out, "Write the log here instead of stdout");
  run_cmd->add_option("--duration", run.duration, "Run until this virtual time (s)")->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--auto-guide", run.auto_guide, "Navigate to suggestions without waiting");
  run_cmd->add_flag("--barge-in", run.barge_in, "Let utterances interrupt robot speech");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Code interaction logs and compute statistics");
  analyze_cmd->add_option("--log", analyze.logs, "Session log (repeatable)")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--map", analyze.map, "Map used to resolve exhibit names")->check(CLI::ExistingFile);
  analyze_cmd->add_option("--timeline", analyze.timeline, "Write the timeline document here");
  analyze_cmd->add_option("--stats", analyze.stats, "Write the statistics document here");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--config", serve.config, "Service config (JSON)")->check(CLI::ExistingFile);
  serve_cmd->add_option("--map", serve.map, "Annotated map document");
  serve_cmd->add_option("--bind", serve.bind, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--backend", serve.backend, "Gateway backend")->check(CLI::IsMember({"scripted", "remote"}));
  serve_cmd->add_option("--responses", serve.responses, "Scripted backend rules (JSON)");
  serve_cmd->add_option("--static", serve.static_dir, "Directory of console assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*analyze_cmd) return cmd_analyze(analyze);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const ConfigFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
