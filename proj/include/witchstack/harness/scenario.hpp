#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "witchstack/aoverc/aoverc.hpp"
#include "witchstack/common/events.hpp"

namespace witchstack::harness {

struct ScenarioOptions {
  std::uint64_t seed = 1;
  // Overrides the scenario's own notify handling or envelope mode.
  std::optional<bool> strict_notify;
  std::optional<aoverc::Mode> health_mode;
  std::size_t samples = 1000;  // end-to-end only
};

struct ScenarioCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  bool passed = false;
  std::vector<ScenarioCheck> checks;
  std::chrono::milliseconds elapsed{0};
  std::vector<SecurityEvent> events;
  // What the phone saw, for offline dissection.
  Bytes link_transcript;
  std::vector<std::string> alloy_lines;
  std::vector<std::string> keylog_lines;

  std::string to_text() const;
  std::string to_json() const;
};

std::vector<std::string> scenario_names();
// Throws ScenarioUnknown.
ScenarioReport run_scenario(const std::string& name, const ScenarioOptions& opt = {});

}  // namespace witchstack::harness
