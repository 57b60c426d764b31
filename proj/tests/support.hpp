#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "narraguide/dialogue.hpp"
#include "narraguide/llm_gateway.hpp"
#include "narraguide/session.hpp"
#include "narraguide/worldmap.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(NARRAGUIDE_DATA_DIR) + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<const narraguide::AnnotatedMap> museum() {
  static const auto map =
      std::make_shared<const narraguide::AnnotatedMap>(narraguide::load_map(slurp(data_path("museum11.map"))));
  return map;
}

inline std::shared_ptr<narraguide::ScriptedBackend> demo_backend() {
  return std::make_shared<narraguide::ScriptedBackend>(
      narraguide::ScriptedBackend::from_json(slurp(data_path("demo_responses.json"))));
}

inline narraguide::Session make_session(narraguide::SessionConfig cfg = {},
                                        std::shared_ptr<narraguide::LlmBackend> gateway = nullptr) {
  if (!gateway) gateway = demo_backend();
  return narraguide::Session("test", narraguide::DialogueSystem::with_rules(museum(), gateway), cfg);
}

}  // namespace testing_support
